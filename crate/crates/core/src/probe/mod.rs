//! Probe execution: checks, PII heuristics, status derivation, the
//! per-job lifecycle and the asynchronous job queue.

pub mod checks;
pub mod executor;
pub mod pii;
pub mod queue;
pub mod severity;
pub mod status;

pub use pii::run_pii_heuristics;
pub use status::derive_status;
pub use executor::{execute_probe, ProbeJob, Trigger};
pub use queue::ProbeQueue;
