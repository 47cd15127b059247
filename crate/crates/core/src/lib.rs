//! Continuous AI-governance engine.
//!
//! Probes a (simulated) provider fleet through short-lived read-only
//! credentials, records watermarked evidence in an append-only ledger,
//! maps it across regulatory frameworks and derives posture, drift,
//! forecasts and compliance documents from it.

pub mod clock;
pub mod model;
pub mod store;
pub mod vault;
pub mod watermark;
pub mod probe;
pub mod sim;
pub mod mapping;
pub mod intelligence;
pub mod discovery;
pub mod engine;
pub mod synthesis;
