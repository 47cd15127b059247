//! Public trust-center summary: aggregate counts only, no topology.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::Serialize;
use trustos_core::intelligence::{compute_posture, IntelligenceError, PostureConfig};
use trustos_core::mapping::Catalog;
use trustos_core::model::{AssertionStatus, WorkspaceId};
use trustos_core::store::{Store, StoreError};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FrameworkTally {
    pub passed: usize,
    pub total_assessed: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrustCenterSummary {
    pub organization: String,
    /// Keyed by framework display name.
    pub frameworks: BTreeMap<String, FrameworkTally>,
    /// Absent until the first scan.
    pub classification: Option<String>,
    pub generated_at: DateTime<Utc>,
}

/// Counts, per active framework, the current assertions whose control maps
/// into it and how many of those pass.
pub fn trust_center(
    store: &Store,
    catalog: &Catalog,
    posture: &PostureConfig,
    ws: &WorkspaceId,
    at: DateTime<Utc>,
) -> Result<TrustCenterSummary, StoreError> {
    let workspace = store.workspace(ws)?;
    let latest = store.latest_assertions(ws)?;
    let mut frameworks = BTreeMap::new();
    for fw in &workspace.active_frameworks {
        let mut tally = FrameworkTally::default();
        for a in &latest {
            let in_fw = catalog
                .requirements_for(&a.control_id)
                .iter()
                .any(|r| r.framework == *fw);
            if in_fw {
                tally.total_assessed += 1;
                if a.status == AssertionStatus::Pass {
                    tally.passed += 1;
                }
            }
        }
        frameworks.insert(fw.display_name().to_string(), tally);
    }
    let classification = match compute_posture(store, posture, ws, at) {
        Ok(s) => Some(s.classification.label().to_string()),
        Err(IntelligenceError::NoEvidence(_)) => None,
        Err(IntelligenceError::Store(e)) => return Err(e),
        Err(_) => None,
    };
    Ok(TrustCenterSummary {
        organization: workspace.name,
        frameworks,
        classification,
        generated_at: at,
    })
}
