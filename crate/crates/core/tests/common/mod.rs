#![allow(dead_code)]

use std::sync::Arc;

use chrono::{TimeZone, Utc};
use trustos_core::clock::ManualClock;
use trustos_core::engine::Engine;
use trustos_core::model::WorkspaceId;
use trustos_core::sim::ScenarioFixture;
use trustos_core::store::Store;
use trustos_core::vault::MasterKey;

/// Engine over an in-memory store with a manual clock at the reference
/// execution time.
pub fn engine() -> (Arc<Engine>, Arc<ManualClock>) {
    let clock = Arc::new(ManualClock::new(Utc.with_ymd_and_hms(2026, 4, 6, 0, 14, 32).unwrap()));
    let engine = Engine::new(Arc::new(Store::in_memory()), Some(MasterKey::generate()), clock.clone());
    (Arc::new(engine), clock)
}

pub fn provisioned(fixture: &ScenarioFixture) -> (Arc<Engine>, Arc<ManualClock>, WorkspaceId) {
    let (e, c) = engine();
    let ws = e.provision(fixture).unwrap();
    (e, c, ws)
}
