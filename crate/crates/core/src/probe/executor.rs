//! The per-job probe lifecycle.
//!
//! Order of operations for one job: load the connection, decrypt its
//! credential into an ephemeral buffer, run metadata-only checks, attach
//! severities and framework references, derive the status, append the
//! watermarked assertion, persist the probe run, fan out and open action
//! items, and finally wipe the credential. A provider failure writes a
//! failed probe run and no assertion.

use std::time::{Duration as StdDuration, Instant};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::checks::{run_check, CheckOutput};
use super::status::derive_status;
use crate::clock::new_id;
use crate::engine::Engine;
use crate::mapping::{fan_out, framework_refs, open_action_items, supersede_open_items, CoverageDelta, MappingError};
use crate::model::*;
use crate::sim::FleetError;
use crate::store::StoreError;
use crate::vault::VaultError;
use crate::watermark::compute_watermark;

/// Assertions stay valid for this long after execution.
pub const EVIDENCE_VALIDITY_DAYS: i64 = 90;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Trigger {
    Scheduled,
    Manual,
    Recheck { action_item_id: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeJob {
    pub job_id: String,
    pub workspace_id: WorkspaceId,
    pub connection_id: String,
    pub probe_kind: ProbeKind,
    pub enqueued_at: DateTime<Utc>,
    pub trigger: Trigger,
}

impl ProbeJob {
    pub fn new(
        ws: &WorkspaceId,
        connection_id: &str,
        probe_kind: ProbeKind,
        trigger: Trigger,
        at: DateTime<Utc>,
    ) -> Self {
        Self {
            job_id: new_id("job"),
            workspace_id: ws.clone(),
            connection_id: connection_id.to_string(),
            probe_kind,
            enqueued_at: at,
            trigger,
        }
    }
}

/// Retry schedule for transient provider outages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub retries: u32,
    pub backoff: StdDuration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 3,
            backoff: StdDuration::from_millis(100),
        }
    }
}

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("unknown connection `{0}`")]
    UnknownConnection(String),
    #[error("probe kind {kind:?} does not apply to a {provider} connection")]
    KindMismatch { kind: ProbeKind, provider: ProviderKind },
    #[error("probe run {probe_run_id} failed after {attempts} attempt(s): {source}")]
    Provider {
        probe_run_id: String,
        attempts: u32,
        #[source]
        source: FleetError,
    },
    #[error(transparent)]
    Vault(#[from] VaultError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error(transparent)]
    Engine(#[from] Box<crate::engine::EngineError>),
}

/// Everything one completed audit job produced.
#[derive(Debug, Clone)]
pub struct Execution {
    pub probe_run: ProbeRun,
    pub assertion: ControlAssertion,
    pub coverage: Vec<CoverageDelta>,
    pub action_items: Vec<ActionItem>,
}

fn fresh_assertion_id(engine: &Engine, pinned: Option<&String>) -> String {
    if let Some(id) = pinned {
        if !engine.store().assertion_exists(id) {
            return id.clone();
        }
    }
    loop {
        let id = format!("ea_{:07x}", rand::random::<u32>() & 0x0fff_ffff);
        if !engine.store().assertion_exists(&id) {
            return id;
        }
    }
}

/// Runs the audit checks with retries, returning the output and the number
/// of attempts made.
fn check_with_retries(
    engine: &Engine,
    job: &ProbeJob,
    credential: &[u8],
) -> Result<(CheckOutput, u32), (FleetError, u32)> {
    let fleet = engine.fleet(&job.workspace_id).map_err(|_| {
        let kind = super::checks::probe_provider(job.probe_kind).unwrap_or(ProviderKind::AwsIam);
        (FleetError::NotProvisioned(kind), 1)
    })?;
    let registry = engine.registry_view(&job.workspace_id).unwrap_or_default();
    let policy = engine.retry_policy();
    let mut attempts = 0;
    loop {
        attempts += 1;
        match run_check(job.probe_kind, &fleet, credential, &registry) {
            Ok(out) => return Ok((out, attempts)),
            Err(e @ FleetError::ProviderUnavailable(_)) if attempts <= policy.retries => {
                tracing::warn!(job = %job.job_id, attempt = attempts, error = %e, "provider unavailable, retrying");
                std::thread::sleep(policy.backoff);
            }
            Err(e) => return Err((e, attempts)),
        }
    }
}

/// Executes one audit job to completion. Discovery jobs are handled by the
/// discovery agent, not here.
pub fn execute_probe(engine: &Engine, job: &ProbeJob) -> Result<Execution, ProbeError> {
    let ws = &job.workspace_id;
    let conn: ProviderConnection = engine
        .store()
        .get(ws, &job.connection_id)
        .map_err(|_| ProbeError::UnknownConnection(job.connection_id.clone()))?;
    if conn.provider_kind.audit_probe() != job.probe_kind {
        return Err(ProbeError::KindMismatch {
            kind: job.probe_kind,
            provider: conn.provider_kind,
        });
    }
    let started_at = engine.now();
    let timer = Instant::now();
    let probe_run_id = new_id("run");
    tracing::info!(job = %job.job_id, workspace = %ws, probe = ?job.probe_kind, "probe started");

    engine
        .vault()
        .with_ephemeral(ws, &conn.credential_ref, |secret| {
            let result = check_with_retries(engine, job, secret.expose());
            let duration_ms = timer.elapsed().as_millis() as u64;
            let (out, attempts) = match result {
                Ok(ok) => ok,
                Err((source, attempts)) => {
                    engine.store().insert(ProbeRun {
                        probe_run_id: probe_run_id.clone(),
                        workspace_id: ws.clone(),
                        connection_id: conn.connection_id.clone(),
                        probe_kind: job.probe_kind,
                        started_at,
                        duration_ms,
                        outcome: ProbeRunOutcome::Failed,
                        systems_discovered: 0,
                        attempts,
                    })?;
                    tracing::warn!(job = %job.job_id, error = %source, "probe failed");
                    return Err(ProbeError::Provider {
                        probe_run_id: probe_run_id.clone(),
                        attempts,
                        source,
                    });
                }
            };
            record_assertion(engine, job, &conn, out, &probe_run_id, started_at, duration_ms, attempts)
        })?
}

#[allow(clippy::too_many_arguments)]
fn record_assertion(
    engine: &Engine,
    job: &ProbeJob,
    conn: &ProviderConnection,
    out: CheckOutput,
    probe_run_id: &str,
    started_at: DateTime<Utc>,
    duration_ms: u64,
    attempts: u32,
) -> Result<Execution, ProbeError> {
    let ws = &job.workspace_id;
    let catalog = engine.catalog();
    let matrix = engine.matrix();
    let workspace = engine.store().workspace(ws)?;
    let control_id = catalog
        .control_for_probe(job.probe_kind)
        .map(|c| c.control_id.clone())
        .unwrap_or_else(|| format!("ctl_unmapped_{}", conn.provider_kind.ledger_name().to_lowercase()));
    let refs = framework_refs(catalog, &workspace.active_frameworks, &control_id);
    let findings: Vec<Finding> = out
        .findings
        .iter()
        .map(|f| Finding {
            check_id: f.check_id.to_string(),
            severity: matrix.rule(f.check_id).map(|r| r.severity).unwrap_or(Severity::Medium),
            description: f.description.clone(),
            framework_refs: refs.clone(),
        })
        .collect();
    let status = derive_status(job.probe_kind, &findings);
    let remediation_ref = findings
        .iter()
        .map(|f| f.severity)
        .max()
        .and_then(|worst| findings.iter().find(|f| f.severity == worst))
        .and_then(|f| matrix.rule(&f.check_id))
        .map(|r| r.remediation_ref.clone());

    // Ledger append, fan-out and action items share the workspace's
    // serialization context.
    let lock = engine.workspace_lock(ws);
    let _guard = lock.lock().unwrap();
    let fixture = engine.fleet(ws).map_err(Box::new)?.snapshot();
    let assertion_id = fresh_assertion_id(engine, fixture.pinned_assertion_ids.get(&conn.provider_kind));
    let executed_at = started_at;
    let watermark = compute_watermark(&assertion_id, status.as_str(), ws.as_str()).expect("ids are non-empty");
    let assertion = ControlAssertion {
        assertion_id,
        workspace_id: ws.clone(),
        control_id,
        integration: conn.provider_kind,
        connection_id: conn.connection_id.clone(),
        probe_run_id: probe_run_id.to_string(),
        status,
        executed_at,
        expires_at: executed_at + Duration::days(EVIDENCE_VALIDITY_DAYS),
        credential_method: conn.credential_method,
        watermark,
        findings,
        remediation_ref,
        metadata_summary: out.metadata,
    };
    engine.store().ledger_append(assertion.clone(), "probe-worker")?;
    let probe_run = ProbeRun {
        probe_run_id: probe_run_id.to_string(),
        workspace_id: ws.clone(),
        connection_id: conn.connection_id.clone(),
        probe_kind: job.probe_kind,
        started_at,
        duration_ms,
        outcome: ProbeRunOutcome::Completed,
        systems_discovered: 0,
        attempts,
    };
    engine.store().insert(probe_run.clone())?;

    let coverage = match fan_out(catalog, &workspace.active_frameworks, &assertion) {
        Ok(d) => d,
        Err(MappingError::UnmappedControl(c)) => {
            tracing::warn!(control = %c, "assertion kept but control is unmapped");
            Vec::new()
        }
        Err(e) => return Err(e.into()),
    };
    let now = engine.now();
    supersede_open_items(engine.store(), &assertion, now)?;
    let action_items = match open_action_items(engine.store(), catalog, matrix, &assertion, now) {
        Ok(items) => items,
        Err(MappingError::UnmappedControl(_)) => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    tracing::info!(
        job = %job.job_id,
        assertion = %assertion.assertion_id,
        status = %assertion.status,
        findings = assertion.findings.len(),
        "probe completed"
    );
    Ok(Execution {
        probe_run,
        assertion,
        coverage,
        action_items,
    })
}
