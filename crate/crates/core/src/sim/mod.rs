//! Simulated provider fleet driven by scenario fixtures.

pub mod builder;
pub mod fixture;
pub mod fleet;

pub use fixture::{load_scenario, FixtureError, ScenarioFixture};
pub use fleet::{FleetError, QueryKind, SimulatedFleet};
