//! Link-level simulation of interference cooperation (IC) among operators
//! sharing a vectored DSL cable binder.
//!
//! `K` operators each own `N` lines. Every operator estimates the channel
//! from its own lines towards *all* receivers and detects its own symbols,
//! while exchanging only channel-mixed interference with the other
//! operators over a simulated backhaul. The distributed iterations are block
//! Jacobi sweeps of the centralized least-squares problems, so they converge
//! to the centralized estimates.
//!
//! Module map:
//!
//! * [`model`]: scenario configuration, random channel synthesis, symbols and
//!   the forward model `y = Hx + w`.
//! * [`training`]: per-operator training frames.
//! * [`estimation`]: centralized, data-cooperation and interference-cooperation
//!   channel estimation, plus the Cramér-Rao bound.
//! * [`detection`]: soft symbol estimator, matrix DFE and the MUD schemes.
//! * [`convergence`]: Jacobi splittings and spectral radii.
//! * [`backhaul`]: synchronous-round message bus, wire format, leak checks.
//! * [`metrics`]: normalized MSE, SNR at the decision variable, bit loading.

pub mod backhaul;
pub mod convergence;
pub mod detection;
mod error;
pub mod estimation;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod training;

pub use error::{Error, Result};

/// Dense complex matrix used throughout the crate.
pub type CMatrix = nalgebra::DMatrix<num_complex::Complex64>;
/// Dense complex column vector.
pub type CVector = nalgebra::DVector<num_complex::Complex64>;
pub use num_complex::Complex64;
