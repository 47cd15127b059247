//! Assertion fan-out across frameworks, coverage matrices and the action
//! item lifecycle.

pub mod catalog;

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use catalog::{Catalog, Control, ControlMapping, FrameworkRequirement};

use crate::clock::new_id;
use crate::model::*;
use crate::probe::severity::SeverityMatrix;
use crate::store::{Store, StoreError};

#[derive(Debug, Error)]
pub enum MappingError {
    #[error("control `{0}` has no framework mappings; assertion kept, catalog needs maintenance")]
    UnmappedControl(String),
    #[error("action item `{0}` is already closed")]
    AlreadyClosed(String),
    #[error("role {0:?} may not change workspace state")]
    Forbidden(Role),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CoverageState {
    Met,
    Failed,
    Untested,
}

impl CoverageState {
    pub fn of(status: AssertionStatus) -> Self {
        match status {
            AssertionStatus::Pass => CoverageState::Met,
            AssertionStatus::Untested => CoverageState::Untested,
            _ => CoverageState::Failed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageDelta {
    pub framework: Framework,
    pub clause: String,
    pub requirement_id: String,
    pub state: CoverageState,
}

/// Framework references of a control within the active frameworks.
pub fn framework_refs(catalog: &Catalog, active: &BTreeSet<Framework>, control_id: &str) -> Vec<FrameworkRef> {
    catalog
        .active_requirements_for(control_id, active)
        .into_iter()
        .map(FrameworkRequirement::framework_ref)
        .collect()
}

/// Propagates one assertion to every requirement its control maps to in the
/// workspace's active frameworks.
pub fn fan_out(
    catalog: &Catalog,
    active: &BTreeSet<Framework>,
    assertion: &ControlAssertion,
) -> Result<Vec<CoverageDelta>, MappingError> {
    if catalog.requirements_for(&assertion.control_id).is_empty() {
        return Err(MappingError::UnmappedControl(assertion.control_id.clone()));
    }
    let state = CoverageState::of(assertion.status);
    Ok(catalog
        .active_requirements_for(&assertion.control_id, active)
        .into_iter()
        .map(|r| CoverageDelta {
            framework: r.framework,
            clause: r.clause.clone(),
            requirement_id: r.requirement_id.clone(),
            state,
        })
        .collect())
}

/// Owner for a new action item: the first user holding the control's owner
/// role (Administrator by default), falling back to a Founder.
pub fn resolve_owner(users: &[UserAccount], preferred: Option<Role>) -> Option<String> {
    let preferred = preferred.unwrap_or(Role::Administrator);
    users
        .iter()
        .find(|u| u.role == preferred)
        .or_else(|| users.iter().find(|u| u.role == Role::Founder))
        .map(|u| u.user_id.clone())
}

/// Opens one action item per affected requirement of a failing assertion.
/// Passing assertions and assertions without findings open nothing.
pub fn open_action_items(
    store: &Store,
    catalog: &Catalog,
    matrix: &SeverityMatrix,
    assertion: &ControlAssertion,
    now: DateTime<Utc>,
) -> Result<Vec<ActionItem>, MappingError> {
    if !assertion.status.is_failing() || assertion.findings.is_empty() {
        return Ok(Vec::new());
    }
    let ws = &assertion.workspace_id;
    let workspace = store.workspace(ws)?;
    let deltas = fan_out(catalog, &workspace.active_frameworks, assertion)?;
    let control = catalog.control(&assertion.control_id);
    let users: Vec<UserAccount> = store.all(ws)?;
    let owner = resolve_owner(&users, control.and_then(|c| c.owner_role));
    let worst = assertion.findings.iter().map(|f| f.severity).max().expect("non-empty findings");
    let top = assertion.findings.iter().find(|f| f.severity == worst).expect("worst present");
    let remediation = matrix
        .rule(&top.check_id)
        .map(|r| format!("{} ({})", r.remediation, top.description))
        .unwrap_or_else(|| top.description.clone());
    let recheck = control
        .and_then(|c| c.probe_kind)
        .unwrap_or(assertion.integration.audit_probe());

    let mut items = Vec::with_capacity(deltas.len());
    for d in deltas {
        let item = ActionItem {
            action_item_id: new_id("ai"),
            workspace_id: ws.clone(),
            source: ActionSource::Assertion(assertion.assertion_id.clone()),
            control_id: assertion.control_id.clone(),
            requirement_id: d.requirement_id,
            owner: owner.clone(),
            severity: top.severity,
            remediation_description: remediation.clone(),
            recheck_probe_kind: recheck,
            recheck_connection_id: assertion.connection_id.clone(),
            state: ActionState::Open,
            opened_at: now,
            closed_at: None,
            closed_by: None,
        };
        store.insert(item.clone())?;
        store.record_event(
            ws,
            "mapping-engine",
            "action_item.opened",
            EntityRef::new(EntityKind::ActionItem, &item.action_item_id),
            now,
        )?;
        items.push(item);
    }
    Ok(items)
}

/// Closes open items raised by older assertions for the same control and
/// connection once a newer assertion has landed. Returns how many closed.
pub fn supersede_open_items(
    store: &Store,
    latest: &ControlAssertion,
    now: DateTime<Utc>,
) -> Result<usize, MappingError> {
    let ws = &latest.workspace_id;
    let stale: Vec<ActionItem> = store.scoped_query(ws, |i: &ActionItem| {
        i.state == ActionState::Open
            && i.control_id == latest.control_id
            && i.recheck_connection_id == latest.connection_id
            && matches!(&i.source, ActionSource::Assertion(id) if *id != latest.assertion_id)
    })?;
    for item in &stale {
        store.modify(ws, &item.action_item_id, |i: &mut ActionItem| {
            i.state = ActionState::Closed;
            i.closed_at = Some(now);
            i.closed_by = Some("system:superseded".into());
            Ok::<_, MappingError>(())
        })?;
        store.record_event(
            ws,
            "mapping-engine",
            "action_item.superseded",
            EntityRef::new(EntityKind::ActionItem, &item.action_item_id),
            now,
        )?;
    }
    Ok(stale.len())
}

/// Open → Closed transition. Does not schedule the re-check; callers do.
pub fn close_item(
    store: &Store,
    ws: &WorkspaceId,
    action_item_id: &str,
    role: Role,
    actor: &str,
    now: DateTime<Utc>,
) -> Result<ActionItem, MappingError> {
    if !role.can_mutate() {
        return Err(MappingError::Forbidden(role));
    }
    let (item, ()) = store.modify(ws, action_item_id, |i: &mut ActionItem| {
        if i.state == ActionState::Closed {
            return Err(MappingError::AlreadyClosed(i.action_item_id.clone()));
        }
        i.state = ActionState::Closed;
        i.closed_at = Some(now);
        i.closed_by = Some(actor.to_string());
        Ok(())
    })?;
    store.record_event(
        ws,
        actor,
        "action_item.closed",
        EntityRef::new(EntityKind::ActionItem, action_item_id),
        now,
    )?;
    Ok(item)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameworkCoverage {
    pub met: Vec<String>,
    pub failed: Vec<String>,
    pub untested: Vec<String>,
}

impl FrameworkCoverage {
    pub fn total(&self) -> usize {
        self.met.len() + self.failed.len() + self.untested.len()
    }

    /// Percentage of clauses met, 0 for an empty framework.
    pub fn met_pct(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            100.0 * self.met.len() as f64 / self.total() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageMatrix {
    pub catalog_version: String,
    pub frameworks: BTreeMap<Framework, FrameworkCoverage>,
}

/// Per-framework clause states from the latest assertions. A clause fails
/// if any current assertion behind it fails, is met if every current
/// assertion behind it passes, and is untested otherwise.
pub fn coverage_from(
    catalog: &Catalog,
    active: &BTreeSet<Framework>,
    latest: &[ControlAssertion],
) -> CoverageMatrix {
    let mut frameworks = BTreeMap::new();
    for fw in active {
        let mut cov = FrameworkCoverage::default();
        for req in catalog.requirements_in(*fw) {
            let controls: BTreeSet<&str> = catalog
                .controls_for(&req.requirement_id)
                .into_iter()
                .map(|c| c.control_id.as_str())
                .collect();
            let states: Vec<CoverageState> = latest
                .iter()
                .filter(|a| controls.contains(a.control_id.as_str()))
                .map(|a| CoverageState::of(a.status))
                .collect();
            let state = if states.contains(&CoverageState::Failed) {
                CoverageState::Failed
            } else if !states.is_empty() && states.iter().all(|s| *s == CoverageState::Met) {
                CoverageState::Met
            } else {
                CoverageState::Untested
            };
            match state {
                CoverageState::Met => cov.met.push(req.clause.clone()),
                CoverageState::Failed => cov.failed.push(req.clause.clone()),
                CoverageState::Untested => cov.untested.push(req.clause.clone()),
            }
        }
        frameworks.insert(*fw, cov);
    }
    CoverageMatrix {
        catalog_version: catalog.catalog_version.clone(),
        frameworks,
    }
}

pub fn coverage_matrix(store: &Store, catalog: &Catalog, ws: &WorkspaceId) -> Result<CoverageMatrix, StoreError> {
    let workspace = store.workspace(ws)?;
    let latest = store.latest_assertions(ws)?;
    Ok(coverage_from(catalog, &workspace.active_frameworks, &latest))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assertion(control: &str, status: AssertionStatus) -> ControlAssertion {
        ControlAssertion {
            assertion_id: new_id("ea"),
            workspace_id: "ws".into(),
            control_id: control.into(),
            integration: ProviderKind::AwsS3,
            connection_id: "conn_1".into(),
            probe_run_id: "run_1".into(),
            status,
            executed_at: Utc::now(),
            expires_at: Utc::now(),
            credential_method: CredentialMethod::StsAssumeRoleReadOnly,
            watermark: String::new(),
            findings: vec![],
            remediation_ref: None,
            metadata_summary: Default::default(),
        }
    }

    fn all_frameworks() -> BTreeSet<Framework> {
        Framework::ALL.into_iter().collect()
    }

    #[test]
    fn s3_fans_out_to_two_frameworks() {
        let c = Catalog::default();
        let d = fan_out(&c, &all_frameworks(), &assertion("ctl_storage_protection", AssertionStatus::Fail)).unwrap();
        let got: Vec<(Framework, &str, CoverageState)> =
            d.iter().map(|x| (x.framework, x.clause.as_str(), x.state)).collect();
        assert_eq!(
            got,
            [
                (Framework::Soc2, "CC6.7", CoverageState::Failed),
                (Framework::EuAiAct, "Art.10", CoverageState::Failed)
            ]
        );
    }

    #[test]
    fn fan_out_respects_active_frameworks() {
        let c = Catalog::default();
        let active: BTreeSet<Framework> = [Framework::Soc2].into_iter().collect();
        let d = fan_out(&c, &active, &assertion("ctl_identity_mfa", AssertionStatus::Fail)).unwrap();
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn unmapped_control() {
        let c = Catalog::default();
        assert!(matches!(
            fan_out(&c, &all_frameworks(), &assertion("ctl_unknown", AssertionStatus::Fail)),
            Err(MappingError::UnmappedControl(_))
        ));
    }

    #[test]
    fn pass_on_three_clause_control_meets_three() {
        let c = Catalog::default();
        let m = coverage_from(&c, &all_frameworks(), &[assertion("ctl_identity_mfa", AssertionStatus::Pass)]);
        let met: usize = m.frameworks.values().map(|f| f.met.len()).sum();
        assert_eq!(met, 3);
        assert_eq!(m.frameworks[&Framework::Hipaa].met, ["§164.312", "§164.308"]);
        assert_eq!(m.frameworks[&Framework::Soc2].met, ["CC6.1"]);
    }

    #[test]
    fn shared_clause_fails_if_any_assertion_fails() {
        let c = Catalog::default();
        let m = coverage_from(
            &c,
            &all_frameworks(),
            &[
                assertion("ctl_identity_mfa", AssertionStatus::Pass),
                assertion("ctl_iam_access", AssertionStatus::PartialPass),
            ],
        );
        assert!(m.frameworks[&Framework::Soc2].failed.contains(&"CC6.1".to_string()));
    }

    #[test]
    fn empty_workspace_is_all_untested() {
        let c = Catalog::default();
        let m = coverage_from(&c, &all_frameworks(), &[]);
        for (fw, cov) in &m.frameworks {
            assert!(cov.met.is_empty() && cov.failed.is_empty(), "{fw}");
            assert_eq!(cov.untested.len(), c.requirements_in(*fw).len());
        }
        assert_eq!(m.catalog_version, c.catalog_version);
    }

    #[test]
    fn owner_routing() {
        let users = vec![
            UserAccount {
                user_id: "f".into(),
                workspace_id: "ws".into(),
                role: Role::Founder,
            },
            UserAccount {
                user_id: "a".into(),
                workspace_id: "ws".into(),
                role: Role::Administrator,
            },
        ];
        assert_eq!(resolve_owner(&users, None).as_deref(), Some("a"));
        assert_eq!(resolve_owner(&users, Some(Role::Founder)).as_deref(), Some("f"));
        assert_eq!(resolve_owner(&users[..1], None).as_deref(), Some("f"));
        assert_eq!(resolve_owner(&[], None), None);
    }
}
