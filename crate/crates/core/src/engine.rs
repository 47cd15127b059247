//! Engine services shared by the probe workers, the discovery agent and the
//! gateway: store, vault, simulated fleet, catalog and configuration.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{new_id, Clock};
use crate::intelligence::{detect_drift, record_coverage, record_posture, IntelligenceError, PostureConfig};
use crate::mapping::{close_item, Catalog, MappingError};
use crate::model::*;
use crate::probe::checks::RegistryView;
use crate::probe::executor::{execute_probe, Execution, ProbeError, ProbeJob, RetryPolicy, Trigger};
use crate::probe::severity::SeverityMatrix;
use crate::sim::fleet::default_token;
use crate::sim::{FixtureError, ScenarioFixture, SimulatedFleet};
use crate::store::{Store, StoreError};
use crate::vault::{MasterKey, Vault, VaultError};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("workspace `{0}` has no provider fleet attached; provision it from a fixture first")]
    NoFleet(String),
    #[error("unknown connection `{0}`")]
    UnknownConnection(String),
    #[error("role {0:?} may not perform this action")]
    Forbidden(Role),
    #[error("fixture workspace `{fixture}` does not match existing workspace setup: {reason}")]
    ProvisionMismatch { fixture: String, reason: String },
    #[error(transparent)]
    Fixture(#[from] FixtureError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Vault(#[from] VaultError),
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error(transparent)]
    Intelligence(#[from] IntelligenceError),
}

/// Result of finishing a batch of scans for one workspace.
#[derive(Debug, Clone)]
pub struct BatchSummary {
    pub snapshot: Option<PostureSnapshot>,
    pub drift: Vec<DriftEvent>,
    pub coverage: Vec<CoverageObservation>,
}

pub struct Engine {
    store: Arc<Store>,
    vault: Vault,
    clock: Arc<dyn Clock>,
    catalog: Catalog,
    matrix: SeverityMatrix,
    posture: PostureConfig,
    retry: RetryPolicy,
    fleets: RwLock<HashMap<WorkspaceId, Arc<SimulatedFleet>>>,
    locks: Mutex<HashMap<WorkspaceId, Arc<Mutex<()>>>>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("catalog_version", &self.catalog.catalog_version)
            .finish_non_exhaustive()
    }
}

impl Engine {
    pub fn new(store: Arc<Store>, key: Option<MasterKey>, clock: Arc<dyn Clock>) -> Self {
        Self {
            vault: Vault::new(store.clone(), key, clock.clone()),
            store,
            clock,
            catalog: Catalog::default(),
            matrix: SeverityMatrix::default(),
            posture: PostureConfig::default(),
            retry: RetryPolicy::default(),
            fleets: RwLock::new(HashMap::new()),
            locks: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_catalog(mut self, catalog: Catalog) -> Self {
        self.catalog = catalog;
        self
    }

    pub fn with_matrix(mut self, matrix: SeverityMatrix) -> Self {
        self.matrix = matrix;
        self
    }

    pub fn with_posture_config(mut self, posture: PostureConfig) -> Self {
        self.posture = posture;
        self
    }

    pub fn with_retry_policy(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn store_arc(&self) -> Arc<Store> {
        self.store.clone()
    }

    pub fn vault(&self) -> &Vault {
        &self.vault
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn matrix(&self) -> &SeverityMatrix {
        &self.matrix
    }

    pub fn posture_config(&self) -> &PostureConfig {
        &self.posture
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        self.retry
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    /// Serialization context for appends that must not interleave within a
    /// workspace (ledger + fan-out, discovery upserts, drift persistence).
    pub fn workspace_lock(&self, ws: &WorkspaceId) -> Arc<Mutex<()>> {
        self.locks.lock().unwrap().entry(ws.clone()).or_default().clone()
    }

    pub fn fleet(&self, ws: &WorkspaceId) -> Result<Arc<SimulatedFleet>, EngineError> {
        self.fleets
            .read()
            .unwrap()
            .get(ws)
            .cloned()
            .ok_or_else(|| EngineError::NoFleet(ws.to_string()))
    }

    /// Workspaces with an attached fleet, sorted.
    pub fn attached_workspaces(&self) -> Vec<WorkspaceId> {
        let mut v: Vec<WorkspaceId> = self.fleets.read().unwrap().keys().cloned().collect();
        v.sort();
        v
    }

    /// Provisions a workspace from a fixture with the fleet's default tokens.
    pub fn provision(&self, fixture: &ScenarioFixture) -> Result<WorkspaceId, EngineError> {
        self.provision_with_tokens(fixture, &BTreeMap::new())
    }

    /// Creates the workspace, its users, one connection per provider with a
    /// vaulted credential, and the declared AI registry. If the workspace
    /// already exists (a reopened store), only the fleet is re-attached.
    /// `tokens` overrides the credential for individual providers; override
    /// buffers are consumed by the vault and wiped.
    pub fn provision_with_tokens(
        &self,
        fixture: &ScenarioFixture,
        tokens: &BTreeMap<ProviderKind, Vec<u8>>,
    ) -> Result<WorkspaceId, EngineError> {
        fixture.validate()?;
        let ws = WorkspaceId::new(&fixture.workspace_id);
        let fleet = Arc::new(SimulatedFleet::new(fixture.clone()));
        for (kind, token) in tokens {
            fleet.set_token(*kind, token);
        }
        let now = self.now();

        if self.store.workspace_exists(&ws) {
            let conns: Vec<ProviderConnection> = self.store.all(&ws)?;
            let have: BTreeSet<ProviderKind> = conns.iter().map(|c| c.provider_kind).collect();
            let want: BTreeSet<ProviderKind> = fixture.providers.kinds().into_iter().collect();
            if have != want {
                return Err(EngineError::ProvisionMismatch {
                    fixture: fixture.scenario_id.clone(),
                    reason: "provider set differs from existing connections".into(),
                });
            }
            self.fleets.write().unwrap().insert(ws.clone(), fleet);
            tracing::info!(workspace = %ws, "fleet re-attached");
            return Ok(ws);
        }

        self.store.create_workspace(Workspace {
            workspace_id: ws.clone(),
            name: fixture.company_name.clone(),
            active_frameworks: fixture.active_frameworks.iter().copied().collect(),
            cohort_key: fixture.cohort_key.clone(),
            created_at: now,
        })?;
        for u in &fixture.users {
            self.store.insert(UserAccount {
                user_id: u.user_id.clone(),
                workspace_id: ws.clone(),
                role: u.role,
            })?;
        }
        for kind in fixture.providers.kinds() {
            let mut secret = tokens
                .get(&kind)
                .cloned()
                .unwrap_or_else(|| default_token(kind, &fixture.scenario_id).into_bytes());
            let credential_ref = self.vault.vault_store(&ws, kind, &mut secret)?;
            let method = kind.credential_method();
            let conn = ProviderConnection {
                connection_id: new_id(&format!("conn_{}", kind.ledger_name().to_lowercase())),
                workspace_id: ws.clone(),
                provider_kind: kind,
                credential_ref,
                credential_method: method,
                external_id: (method == CredentialMethod::StsAssumeRoleReadOnly).then(|| new_id("ext")),
            };
            self.store.insert(conn.clone())?;
            self.store.record_event(
                &ws,
                "system",
                "connection.created",
                EntityRef::new(EntityKind::ProviderConnection, &conn.connection_id),
                now,
            )?;
        }
        let users: Vec<UserAccount> = self.store.all(&ws)?;
        let owner = crate::mapping::resolve_owner(&users, None);
        for d in &fixture.declared_registry {
            self.store.put(AiSystem {
                system_id: new_id("sys"),
                workspace_id: ws.clone(),
                name: d.name.clone(),
                model_type: d.model_type,
                deployment_env: d.deployment_env.clone(),
                risk_tier: d.risk_tier,
                owner: owner.clone(),
                discovery_source: DiscoverySource::Declared,
                review_status: ReviewStatus::Active,
                linked_controls: BTreeSet::new(),
                incident_history: Vec::new(),
            })?;
        }
        self.store.record_event(
            &ws,
            "system",
            "workspace.provisioned",
            EntityRef::new(EntityKind::Workspace, ws.as_str()),
            now,
        )?;
        self.fleets.write().unwrap().insert(ws.clone(), fleet);
        tracing::info!(workspace = %ws, scenario = %fixture.scenario_id, "workspace provisioned");
        Ok(ws)
    }

    pub fn connections(&self, ws: &WorkspaceId) -> Result<Vec<ProviderConnection>, EngineError> {
        Ok(self.store.all(ws)?)
    }

    pub fn connection(&self, ws: &WorkspaceId, id: &str) -> Result<ProviderConnection, EngineError> {
        self.store
            .get(ws, id)
            .map_err(|_| EngineError::UnknownConnection(id.to_string()))
    }

    pub fn role_of(&self, ws: &WorkspaceId, user_id: &str) -> Result<Role, EngineError> {
        let user: UserAccount = self.store.get(ws, user_id)?;
        Ok(user.role)
    }

    pub fn registry_view(&self, ws: &WorkspaceId) -> Result<RegistryView, EngineError> {
        let systems: Vec<AiSystem> = self.store.all(ws)?;
        Ok(RegistryView {
            known: systems.iter().map(|s| s.name.clone()).collect(),
            active: systems
                .iter()
                .filter(|s| s.review_status == ReviewStatus::Active)
                .map(|s| s.name.clone())
                .collect(),
        })
    }

    /// One audit job per given connection. Fails without building anything
    /// if any id is unknown.
    pub fn plan_jobs(
        &self,
        ws: &WorkspaceId,
        connection_ids: &[String],
        trigger: Trigger,
    ) -> Result<Vec<ProbeJob>, EngineError> {
        let conns = self.connections(ws)?;
        let now = self.now();
        connection_ids
            .iter()
            .map(|id| {
                conns
                    .iter()
                    .find(|c| &c.connection_id == id)
                    .map(|c| ProbeJob::new(ws, id, c.provider_kind.audit_probe(), trigger.clone(), now))
                    .ok_or_else(|| EngineError::UnknownConnection(id.clone()))
            })
            .collect()
    }

    /// Every connection of the workspace, in provider order.
    pub fn all_connection_ids(&self, ws: &WorkspaceId) -> Result<Vec<String>, EngineError> {
        let mut conns = self.connections(ws)?;
        conns.sort_by_key(|c| c.provider_kind);
        Ok(conns.into_iter().map(|c| c.connection_id).collect())
    }

    pub fn execute(&self, job: &ProbeJob) -> Result<Execution, ProbeError> {
        execute_probe(self, job)
    }

    /// Post-batch bookkeeping: posture snapshot, coverage observations and
    /// drift detection.
    pub fn finalize_batch(&self, ws: &WorkspaceId) -> Result<BatchSummary, EngineError> {
        let lock = self.workspace_lock(ws);
        let _guard = lock.lock().unwrap();
        let now = self.now();
        let snapshot = match record_posture(&self.store, &self.posture, ws, now) {
            Ok(s) => Some(s),
            Err(IntelligenceError::NoEvidence(_)) => None,
            Err(e) => return Err(e.into()),
        };
        let coverage = record_coverage(&self.store, &self.catalog, ws, now)?;
        let drift = detect_drift(&self.store, ws, now)?;
        Ok(BatchSummary {
            snapshot,
            drift,
            coverage,
        })
    }

    /// Runs a full scan of every connection synchronously, in provider
    /// order, then finalizes the batch.
    pub fn scan_now(
        &self,
        ws: &WorkspaceId,
        trigger: Trigger,
    ) -> Result<(Vec<Result<Execution, ProbeError>>, BatchSummary), EngineError> {
        let ids = self.all_connection_ids(ws)?;
        let jobs = self.plan_jobs(ws, &ids, trigger)?;
        let results = jobs.iter().map(|j| self.execute(j)).collect();
        let summary = self.finalize_batch(ws)?;
        Ok((results, summary))
    }

    /// Closes an action item and returns the targeted re-check job for its
    /// connection. The caller decides how to run the job.
    pub fn close_action_item(
        &self,
        ws: &WorkspaceId,
        action_item_id: &str,
        role: Role,
        actor: &str,
    ) -> Result<(ActionItem, ProbeJob), EngineError> {
        let item = close_item(&self.store, ws, action_item_id, role, actor, self.now())?;
        let job = ProbeJob::new(
            ws,
            &item.recheck_connection_id,
            item.recheck_probe_kind,
            Trigger::Recheck {
                action_item_id: item.action_item_id.clone(),
            },
            self.now(),
        );
        Ok((item, job))
    }

    fn require_mutate(&self, role: Role) -> Result<(), EngineError> {
        if role.can_mutate() {
            Ok(())
        } else {
            Err(EngineError::Forbidden(role))
        }
    }

    /// Adds one RoPA row.
    pub fn add_data_flow(&self, role: Role, actor: &str, mut flow: DataFlowRecord) -> Result<DataFlowRecord, EngineError> {
        self.require_mutate(role)?;
        if flow.flow_id.is_empty() {
            flow.flow_id = new_id("flow");
        }
        self.store.insert(flow.clone())?;
        self.store.record_event(
            &flow.workspace_id,
            actor,
            "ropa.flow_added",
            EntityRef::new(EntityKind::DataFlowRecord, &flow.flow_id),
            self.now(),
        )?;
        Ok(flow)
    }

    /// Records an adversarial-testing outcome against a registered system.
    pub fn record_incident(
        &self,
        role: Role,
        actor: &str,
        ws: &WorkspaceId,
        system_id: &str,
        vector: AttackVector,
        outcome: IncidentOutcome,
    ) -> Result<IncidentRecord, EngineError> {
        self.require_mutate(role)?;
        let at = self.now();
        let incident = IncidentRecord {
            incident_id: new_id("inc"),
            workspace_id: ws.clone(),
            system_id: system_id.to_string(),
            vector,
            outcome,
            at,
        };
        let lock = self.workspace_lock(ws);
        let _guard = lock.lock().unwrap();
        self.store.modify(ws, system_id, |s: &mut AiSystem| {
            s.incident_history.push(incident.incident_id.clone());
            Ok::<_, EngineError>(())
        })?;
        self.store.insert(incident.clone())?;
        self.store.record_event(
            ws,
            actor,
            "incident.recorded",
            EntityRef::new(EntityKind::IncidentRecord, &incident.incident_id),
            at,
        )?;
        Ok(incident)
    }

    pub fn add_legal_agreement(
        &self,
        role: Role,
        actor: &str,
        ws: &WorkspaceId,
        kind: AgreementKind,
        counterparty: &str,
        effective_at: DateTime<Utc>,
    ) -> Result<LegalAgreement, EngineError> {
        self.require_mutate(role)?;
        let a = LegalAgreement {
            agreement_id: new_id("agr"),
            workspace_id: ws.clone(),
            kind,
            counterparty: counterparty.to_string(),
            effective_at,
        };
        self.store.insert(a.clone())?;
        self.store.record_event(
            ws,
            actor,
            "agreement.added",
            EntityRef::new(EntityKind::LegalAgreement, &a.agreement_id),
            self.now(),
        )?;
        Ok(a)
    }

    pub fn attest_process(
        &self,
        role: Role,
        actor: &str,
        ws: &WorkspaceId,
        process_name: &str,
    ) -> Result<ProcessAttestation, EngineError> {
        self.require_mutate(role)?;
        let at = self.now();
        let a = ProcessAttestation {
            attestation_id: new_id("att"),
            workspace_id: ws.clone(),
            process_name: process_name.to_string(),
            attested_by: actor.to_string(),
            at,
        };
        self.store.insert(a.clone())?;
        self.store.record_event(
            ws,
            actor,
            "process.attested",
            EntityRef::new(EntityKind::ProcessAttestation, &a.attestation_id),
            at,
        )?;
        Ok(a)
    }
}

/// Short human summary of a batch, e.g. for CLI output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostureLine {
    pub score: u8,
    pub classification: Classification,
    pub counts: SeverityCounts,
}

impl std::fmt::Display for PostureLine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Posture {}/100 ({}) — {} Critical, {} High, {} Medium",
            self.score,
            self.classification.label(),
            self.counts.critical,
            self.counts.high,
            self.counts.medium
        )
    }
}

impl From<&PostureSnapshot> for PostureLine {
    fn from(s: &PostureSnapshot) -> Self {
        Self {
            score: s.score,
            classification: s.classification,
            counts: s.counts,
        }
    }
}
