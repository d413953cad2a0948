//! Synchronous-round message passing between operator nodes.
//!
//! Every round is split into phases. All messages of a phase are delivered
//! before any node starts the next phase, and nodes index their inbox by
//! sender, so results never depend on delivery order. Payloads can only be
//! built through constructors that compute the channel-mixed expression
//! themselves, which keeps the provenance of every payload explicit.

mod bus;
mod leak;
mod message;
pub mod wire;

pub use bus::{run_rounds, BusAbort, BusOptions, DropFault, LoggedMessage, Protocol, RoundLog, RoundNode};
pub use leak::{leak_check, LeakFinding, LeakReport, SecretRef, Secrets, Violation};
pub use message::{Inbox, InterferenceMessage, MessageKind, Provenance};
