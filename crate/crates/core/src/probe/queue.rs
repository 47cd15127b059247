//! Asynchronous probe job queue.
//!
//! `enqueue_*` returns job ids immediately; a pool of tokio workers takes
//! jobs off the queue, waits out the provider's simulated latency and runs
//! the blocking probe lifecycle on the blocking thread pool. Jobs enqueued
//! together form a batch; when the last job of a batch finishes, the batch
//! is finalized (posture snapshot, coverage observations, drift).

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::{mpsc, Notify};

use super::executor::{ProbeJob, Trigger};
use crate::clock::new_id;
use crate::discovery::{discovery_cycle, ObservationWindow};
use crate::engine::{Engine, EngineError};
use crate::model::*;

pub const WORKERS_ENV: &str = "TRUSTOS_WORKERS";
pub const DEFAULT_WORKERS: usize = 4;

#[derive(Debug, Error)]
pub enum QueueError {
    #[error("unknown connection `{0}`")]
    UnknownConnection(String),
    #[error("unknown job `{0}`")]
    UnknownJob(String),
    #[error("timed out waiting for job `{0}`")]
    Timeout(String),
    #[error("queue is shut down")]
    Closed,
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum JobState {
    Queued,
    Running,
    Completed {
        assertion_id: Option<String>,
        status: Option<AssertionStatus>,
        systems_discovered: Option<usize>,
    },
    Failed {
        error: String,
    },
}

impl JobState {
    pub fn is_terminal(&self) -> bool {
        matches!(self, JobState::Completed { .. } | JobState::Failed { .. })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobRecord {
    pub job: ProbeJob,
    pub batch_id: String,
    pub state: JobState,
    /// Set once every job in the batch is terminal and the batch's posture
    /// snapshot, coverage and drift have been recorded.
    pub batch_finalized: bool,
}

#[derive(Debug)]
struct Batch {
    workspace_id: WorkspaceId,
    remaining: usize,
    job_ids: Vec<String>,
}

#[derive(Default)]
struct Shared {
    jobs: Mutex<HashMap<String, JobRecord>>,
    batches: Mutex<HashMap<String, Batch>>,
    changed: Notify,
}

/// Worker count from `TRUSTOS_WORKERS`, default 4, minimum 1.
pub fn workers_from_env() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or(DEFAULT_WORKERS)
}

#[derive(Clone)]
pub struct ProbeQueue {
    engine: Arc<Engine>,
    tx: mpsc::UnboundedSender<String>,
    shared: Arc<Shared>,
}

impl std::fmt::Debug for ProbeQueue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProbeQueue").finish_non_exhaustive()
    }
}

impl ProbeQueue {
    /// Starts `workers` workers on the current tokio runtime.
    pub fn start(engine: Arc<Engine>, workers: usize) -> Self {
        let (tx, rx) = mpsc::unbounded_channel::<String>();
        let rx = Arc::new(tokio::sync::Mutex::new(rx));
        let shared = Arc::new(Shared::default());
        for w in 0..workers.max(1) {
            let rx = rx.clone();
            let engine = engine.clone();
            let shared = shared.clone();
            tokio::spawn(async move {
                loop {
                    let next = rx.lock().await.recv().await;
                    let Some(job_id) = next else { break };
                    run_job(&engine, &shared, &job_id, w).await;
                }
            });
        }
        Self { engine, tx, shared }
    }

    pub fn engine(&self) -> &Arc<Engine> {
        &self.engine
    }

    fn submit(&self, jobs: Vec<ProbeJob>) -> Result<Vec<String>, QueueError> {
        if jobs.is_empty() {
            return Ok(Vec::new());
        }
        let batch_id = new_id("batch");
        let ids: Vec<String> = jobs.iter().map(|j| j.job_id.clone()).collect();
        {
            let mut table = self.shared.jobs.lock().unwrap();
            let mut batches = self.shared.batches.lock().unwrap();
            batches.insert(
                batch_id.clone(),
                Batch {
                    workspace_id: jobs[0].workspace_id.clone(),
                    remaining: jobs.len(),
                    job_ids: ids.clone(),
                },
            );
            for job in jobs {
                table.insert(
                    job.job_id.clone(),
                    JobRecord {
                        job,
                        batch_id: batch_id.clone(),
                        state: JobState::Queued,
                        batch_finalized: false,
                    },
                );
            }
        }
        for id in &ids {
            self.tx.send(id.clone()).map_err(|_| QueueError::Closed)?;
        }
        Ok(ids)
    }

    /// Queues one audit job per connection. Validates every id first, so an
    /// unknown connection enqueues nothing.
    pub fn enqueue_scan(
        &self,
        ws: &WorkspaceId,
        connection_ids: &[String],
        trigger: Trigger,
    ) -> Result<Vec<String>, QueueError> {
        let jobs = self
            .engine
            .plan_jobs(ws, connection_ids, trigger)
            .map_err(|e| match e {
                EngineError::UnknownConnection(id) => QueueError::UnknownConnection(id),
                other => QueueError::Engine(other),
            })?;
        let ids = self.submit(jobs)?;
        tracing::info!(workspace = %ws, jobs = ids.len(), "scan enqueued");
        Ok(ids)
    }

    /// Queues a scan of every connection in the workspace.
    pub fn enqueue_full_scan(&self, ws: &WorkspaceId, trigger: Trigger) -> Result<Vec<String>, QueueError> {
        let ids = self.engine.all_connection_ids(ws)?;
        self.enqueue_scan(ws, &ids, trigger)
    }

    /// Queues a discovery cycle.
    pub fn enqueue_discovery(&self, ws: &WorkspaceId, trigger: Trigger) -> Result<String, QueueError> {
        let conn = self
            .engine
            .connections(ws)?
            .into_iter()
            .filter(|c| c.provider_kind.is_observability())
            .max_by_key(|c| c.provider_kind)
            .ok_or_else(|| QueueError::UnknownConnection("<observability>".into()))?;
        let job = ProbeJob::new(ws, &conn.connection_id, ProbeKind::DiscoveryCycle, trigger, self.engine.now());
        Ok(self.submit(vec![job])?.remove(0))
    }

    /// Closes an action item and queues exactly one re-check job for its
    /// connection. Returns the closed item and the job id.
    pub fn close_action_item(
        &self,
        ws: &WorkspaceId,
        action_item_id: &str,
        role: Role,
        actor: &str,
    ) -> Result<(ActionItem, String), QueueError> {
        let (item, job) = self.engine.close_action_item(ws, action_item_id, role, actor)?;
        let id = self.submit(vec![job])?.remove(0);
        tracing::info!(workspace = %ws, item = %action_item_id, job = %id, "recheck enqueued");
        Ok((item, id))
    }

    pub fn job(&self, job_id: &str) -> Option<JobRecord> {
        self.shared.jobs.lock().unwrap().get(job_id).cloned()
    }

    /// Jobs of one workspace, in no particular order.
    pub fn jobs_for(&self, ws: &WorkspaceId) -> Vec<JobRecord> {
        self.shared
            .jobs
            .lock()
            .unwrap()
            .values()
            .filter(|r| &r.job.workspace_id == ws)
            .cloned()
            .collect()
    }

    /// Waits until the job is terminal and its batch is finalized.
    pub async fn wait_for(&self, job_id: &str, timeout: Duration) -> Result<JobRecord, QueueError> {
        let deadline = tokio::time::Instant::now() + timeout;
        loop {
            let notified = self.shared.changed.notified();
            tokio::pin!(notified);
            notified.as_mut().enable();
            match self.job(job_id) {
                None => return Err(QueueError::UnknownJob(job_id.to_string())),
                Some(r) if r.state.is_terminal() && r.batch_finalized => return Ok(r),
                Some(_) => {}
            }
            if tokio::time::timeout_at(deadline, notified).await.is_err() {
                return Err(QueueError::Timeout(job_id.to_string()));
            }
        }
    }

    pub async fn wait_all(&self, job_ids: &[String], timeout: Duration) -> Result<Vec<JobRecord>, QueueError> {
        let mut out = Vec::with_capacity(job_ids.len());
        for id in job_ids {
            out.push(self.wait_for(id, timeout).await?);
        }
        Ok(out)
    }
}

fn set_state(shared: &Shared, job_id: &str, state: JobState) {
    if let Some(r) = shared.jobs.lock().unwrap().get_mut(job_id) {
        r.state = state;
    }
    shared.changed.notify_waiters();
}

async fn run_job(engine: &Arc<Engine>, shared: &Arc<Shared>, job_id: &str, worker: usize) {
    let Some(job) = shared.jobs.lock().unwrap().get(job_id).map(|r| r.job.clone()) else {
        return;
    };
    set_state(shared, job_id, JobState::Running);
    tracing::debug!(job = %job_id, worker, "job dequeued");

    if job.probe_kind != ProbeKind::DiscoveryCycle {
        if let Some(kind) = super::checks::probe_provider(job.probe_kind) {
            if let Ok(fleet) = engine.fleet(&job.workspace_id) {
                let latency = fleet.latency(kind);
                if !latency.is_zero() {
                    tokio::time::sleep(latency).await;
                }
            }
        }
    }

    let e = engine.clone();
    let j = job.clone();
    let state = tokio::task::spawn_blocking(move || {
        if j.probe_kind == ProbeKind::DiscoveryCycle {
            match discovery_cycle(&e, &j.workspace_id, ObservationWindow::FullHistory) {
                Ok(r) => JobState::Completed {
                    assertion_id: None,
                    status: None,
                    systems_discovered: Some(r.new_system_ids.len()),
                },
                Err(err) => failed("discovery", err),
            }
        } else {
            match e.execute(&j) {
                Ok(x) => JobState::Completed {
                    assertion_id: Some(x.assertion.assertion_id),
                    status: Some(x.assertion.status),
                    systems_discovered: None,
                },
                Err(err) => failed("probe", err),
            }
        }
    })
    .await
    .unwrap_or_else(|panic| JobState::Failed {
        error: format!("worker panicked: {panic}"),
    });
    set_state(shared, job_id, state);

    let batch_id = shared.jobs.lock().unwrap().get(job_id).map(|r| r.batch_id.clone());
    let Some(batch_id) = batch_id else { return };
    let done = {
        let mut batches = shared.batches.lock().unwrap();
        let b = batches.get_mut(&batch_id).expect("batch registered with its jobs");
        b.remaining -= 1;
        (b.remaining == 0).then(|| (b.workspace_id.clone(), b.job_ids.clone()))
    };
    if let Some((ws, ids)) = done {
        let e = engine.clone();
        let w = ws.clone();
        match tokio::task::spawn_blocking(move || e.finalize_batch(&w)).await {
            Ok(Ok(summary)) => {
                if let Some(s) = &summary.snapshot {
                    tracing::info!(workspace = %ws, score = s.score, drift = summary.drift.len(), "batch finalized");
                }
            }
            Ok(Err(err)) => tracing::error!(workspace = %ws, error = %err, "batch finalization failed"),
            Err(panic) => tracing::error!(workspace = %ws, error = %panic, "batch finalization panicked"),
        }
        {
            let mut table = shared.jobs.lock().unwrap();
            for id in ids {
                if let Some(r) = table.get_mut(&id) {
                    r.batch_finalized = true;
                }
            }
        }
        shared.changed.notify_waiters();
    }
}

fn failed(kind: &str, err: impl std::fmt::Display) -> JobState {
    tracing::warn!(kind, error = %err, "job failed");
    JobState::Failed { error: err.to_string() }
}
