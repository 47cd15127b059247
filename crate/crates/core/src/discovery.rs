//! Shadow-AI discovery: cross-references trace sources and fine-tuned
//! inventory models against the AI system registry and registers anything
//! undeclared for review.

use std::collections::BTreeSet;
use std::time::Instant;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::clock::new_id;
use crate::engine::{Engine, EngineError};
use crate::mapping::{close_item, resolve_owner, MappingError};
use crate::model::*;
use crate::sim::fleet::{ModelListDoc, TraceMetadataDoc};
use crate::sim::{FleetError, QueryKind};
use crate::store::StoreError;
use crate::vault::VaultError;

/// Control that review items for discovered systems are filed under.
pub const INVENTORY_CONTROL: &str = "ctl_ai_inventory";

#[derive(Debug, Error)]
pub enum DiscoveryError {
    #[error("workspace has no trace-store or model-inventory connection")]
    NoObservabilityConnection,
    #[error("role {0:?} may not review AI systems")]
    Forbidden(Role),
    #[error("risk tier must be set to something other than UNCLASSIFIED")]
    InvalidTier,
    #[error("system `{0}` is not pending review")]
    NotPending(String),
    #[error("provider query failed: {0}")]
    Provider(#[from] FleetError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Vault(#[from] VaultError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Mapping(#[from] MappingError),
}

/// Range of telemetry a cycle inspects. The simulation has no telemetry
/// clock, so every window currently covers the full fixture history.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ObservationWindow {
    #[default]
    FullHistory,
    Since {
        at: DateTime<Utc>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "PascalCase")]
pub enum GapOrigin {
    TraceStream,
    ModelInventory,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryGap {
    pub name: String,
    pub origin: GapOrigin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryReport {
    pub probe_run_id: String,
    pub observed_source_ids: BTreeSet<String>,
    pub registry_gaps: Vec<RegistryGap>,
    pub new_system_ids: Vec<String>,
    pub action_item_ids: Vec<String>,
    /// Inventory probe listing, present when an inventory connection exists.
    pub inventory_listing: Option<Value>,
}

struct Observed {
    trace_sources: BTreeSet<String>,
    fine_tuned: BTreeSet<String>,
    inventory: Option<ModelListDoc>,
}

fn observe(engine: &Engine, ws: &WorkspaceId, conns: &[ProviderConnection]) -> Result<Observed, DiscoveryError> {
    let fleet = engine.fleet(ws)?;
    let mut obs = Observed {
        trace_sources: BTreeSet::new(),
        fine_tuned: BTreeSet::new(),
        inventory: None,
    };
    for conn in conns {
        let kind = conn.provider_kind;
        let query = match kind {
            ProviderKind::TraceStore => QueryKind::ListTraceMetadata,
            ProviderKind::ModelInventory => QueryKind::ListModels,
            _ => continue,
        };
        let doc = engine
            .vault()
            .with_ephemeral(ws, &conn.credential_ref, |s| fleet.provider_query(kind, s.expose(), query))??;
        match kind {
            ProviderKind::TraceStore => {
                let d: TraceMetadataDoc = serde_json::from_value(doc).expect("fleet documents match their schema");
                for p in d.projects {
                    obs.trace_sources.extend(p.source_system_ids);
                }
            }
            _ => {
                let d: ModelListDoc = serde_json::from_value(doc).expect("fleet documents match their schema");
                obs.fine_tuned
                    .extend(d.models.iter().filter(|m| m.fine_tuned).map(|m| m.name.clone()));
                obs.inventory = Some(d);
            }
        }
    }
    Ok(obs)
}

/// Probe listing in the inventory probe's wire shape.
pub fn inventory_listing(doc: &ModelListDoc, gaps: &[RegistryGap]) -> Value {
    let mut v = json!({
        "probe": "aws-bedrock-inventory",
        "region": doc.region,
        "foundationModelsAvailable": doc.foundation_models_available,
        "activeInWorkspace": doc.active_in_workspace,
        "fineTunedModelsFound": doc.fine_tuned_models_found,
    });
    let names: Vec<&str> = gaps
        .iter()
        .filter(|g| g.origin == GapOrigin::ModelInventory)
        .map(|g| g.name.as_str())
        .collect();
    if !names.is_empty() {
        v["registryGap"] = Value::String(format!("{} not declared in AI registry", names.join(", ")));
    }
    v
}

/// One discovery cycle. Cycles for a workspace are serialized; a second
/// cycle over unchanged telemetry registers nothing.
pub fn discovery_cycle(
    engine: &Engine,
    ws: &WorkspaceId,
    _window: ObservationWindow,
) -> Result<DiscoveryReport, DiscoveryError> {
    let mut conns: Vec<ProviderConnection> = engine
        .connections(ws)?
        .into_iter()
        .filter(|c| c.provider_kind.is_observability())
        .collect();
    if conns.is_empty() {
        return Err(DiscoveryError::NoObservabilityConnection);
    }
    conns.sort_by_key(|c| c.provider_kind);
    let run_connection = conns
        .iter()
        .find(|c| c.provider_kind == ProviderKind::ModelInventory)
        .unwrap_or(&conns[0])
        .connection_id
        .clone();
    let started_at = engine.now();
    let timer = Instant::now();
    let probe_run_id = new_id("run");

    let lock = engine.workspace_lock(ws);
    let _guard = lock.lock().unwrap();

    let observed = match observe(engine, ws, &conns) {
        Ok(o) => o,
        Err(e) => {
            engine.store().insert(ProbeRun {
                probe_run_id,
                workspace_id: ws.clone(),
                connection_id: run_connection,
                probe_kind: ProbeKind::DiscoveryCycle,
                started_at,
                duration_ms: timer.elapsed().as_millis() as u64,
                outcome: ProbeRunOutcome::Failed,
                systems_discovered: 0,
                attempts: 1,
            })?;
            return Err(e);
        }
    };

    let known: BTreeSet<String> = engine.registry_view(ws)?.known;
    let mut gaps = Vec::new();
    for name in &observed.trace_sources {
        if !known.contains(name) {
            gaps.push(RegistryGap {
                name: name.clone(),
                origin: GapOrigin::TraceStream,
            });
        }
    }
    for name in &observed.fine_tuned {
        if !known.contains(name) && !observed.trace_sources.contains(name) {
            gaps.push(RegistryGap {
                name: name.clone(),
                origin: GapOrigin::ModelInventory,
            });
        }
    }

    let now = engine.now();
    let workspace = engine.store().workspace(ws)?;
    let users: Vec<UserAccount> = engine.store().all(ws)?;
    let owner = resolve_owner(&users, None);
    let requirement_id = engine
        .catalog()
        .active_requirements_for(INVENTORY_CONTROL, &workspace.active_frameworks)
        .first()
        .map(|r| r.requirement_id.clone())
        .or_else(|| {
            engine
                .catalog()
                .requirements_for(INVENTORY_CONTROL)
                .first()
                .map(|r| r.requirement_id.clone())
        })
        .unwrap_or_default();

    let mut new_system_ids = Vec::new();
    let mut action_item_ids = Vec::new();
    for gap in &gaps {
        let system = AiSystem {
            system_id: new_id("sys"),
            workspace_id: ws.clone(),
            name: gap.name.clone(),
            model_type: match gap.origin {
                GapOrigin::ModelInventory => ModelType::FineTuned,
                GapOrigin::TraceStream => ModelType::Pipeline,
            },
            deployment_env: "unknown".into(),
            risk_tier: RiskTier::Unclassified,
            owner: None,
            discovery_source: DiscoverySource::ObservabilityAutoDiscovered,
            review_status: ReviewStatus::PendingReview,
            linked_controls: [INVENTORY_CONTROL.to_string()].into_iter().collect(),
            incident_history: Vec::new(),
        };
        engine.store().put(system.clone())?;
        engine.store().record_event(
            ws,
            "discovery-agent",
            "ai_system.discovered",
            EntityRef::new(EntityKind::AiSystem, &system.system_id),
            now,
        )?;
        let item = ActionItem {
            action_item_id: new_id("ai"),
            workspace_id: ws.clone(),
            source: ActionSource::Discovery(system.system_id.clone()),
            control_id: INVENTORY_CONTROL.into(),
            requirement_id: requirement_id.clone(),
            owner: owner.clone(),
            severity: Severity::High,
            remediation_description: format!(
                "Review auto-discovered AI system {}: assign an owner and a risk tier",
                system.name
            ),
            recheck_probe_kind: ProbeKind::DiscoveryCycle,
            recheck_connection_id: run_connection.clone(),
            state: ActionState::Open,
            opened_at: now,
            closed_at: None,
            closed_by: None,
        };
        engine.store().insert(item.clone())?;
        engine.store().record_event(
            ws,
            "discovery-agent",
            "action_item.opened",
            EntityRef::new(EntityKind::ActionItem, &item.action_item_id),
            now,
        )?;
        tracing::info!(workspace = %ws, system = %system.name, origin = ?gap.origin, "undeclared AI system registered");
        new_system_ids.push(system.system_id);
        action_item_ids.push(item.action_item_id);
    }

    engine.store().insert(ProbeRun {
        probe_run_id: probe_run_id.clone(),
        workspace_id: ws.clone(),
        connection_id: run_connection,
        probe_kind: ProbeKind::DiscoveryCycle,
        started_at,
        duration_ms: timer.elapsed().as_millis() as u64,
        outcome: ProbeRunOutcome::Completed,
        systems_discovered: new_system_ids.len() as u32,
        attempts: 1,
    })?;

    let mut observed_source_ids = observed.trace_sources.clone();
    observed_source_ids.extend(observed.fine_tuned.iter().cloned());
    let inventory_listing = observed.inventory.as_ref().map(|d| inventory_listing(d, &gaps));
    Ok(DiscoveryReport {
        probe_run_id,
        observed_source_ids,
        registry_gaps: gaps,
        new_system_ids,
        action_item_ids,
        inventory_listing,
    })
}

/// Moves a pending system to Active with an owner and tier, closing its
/// review item.
pub fn review_system(
    engine: &Engine,
    ws: &WorkspaceId,
    system_id: &str,
    role: Role,
    actor: &str,
    owner: &str,
    risk_tier: RiskTier,
) -> Result<AiSystem, DiscoveryError> {
    if !role.can_mutate() {
        return Err(DiscoveryError::Forbidden(role));
    }
    if risk_tier == RiskTier::Unclassified {
        return Err(DiscoveryError::InvalidTier);
    }
    let lock = engine.workspace_lock(ws);
    let _guard = lock.lock().unwrap();
    let (system, ()) = engine.store().modify(ws, system_id, |s: &mut AiSystem| {
        if s.review_status != ReviewStatus::PendingReview {
            return Err(DiscoveryError::NotPending(s.system_id.clone()));
        }
        s.review_status = ReviewStatus::Active;
        s.owner = Some(owner.to_string());
        s.risk_tier = risk_tier;
        Ok(())
    })?;
    let now = engine.now();
    engine.store().record_event(
        ws,
        actor,
        "ai_system.reviewed",
        EntityRef::new(EntityKind::AiSystem, system_id),
        now,
    )?;
    let open: Vec<ActionItem> = engine.store().scoped_query(ws, |i: &ActionItem| {
        i.state == ActionState::Open && i.source == ActionSource::Discovery(system_id.to_string())
    })?;
    for item in open {
        close_item(engine.store(), ws, &item.action_item_id, role, actor, now)?;
    }
    Ok(system)
}
