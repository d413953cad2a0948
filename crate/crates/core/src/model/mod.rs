//! Domain types and forward signal generation.

mod channel;
mod config;
mod constellation;
pub mod rng;
mod signal;

pub use channel::{synth_channel, MultiOperatorChannel};
pub use config::{Coupling, ScenarioConfig};
pub use constellation::Constellation;
pub use signal::{apply_channel, draw_symbols, transmit, ReceivedFrame, SymbolFrame};
