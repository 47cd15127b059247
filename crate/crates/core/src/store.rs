//! Workspace-partitioned, append-only persistence.
//!
//! All state lives in in-memory tables guarded by one lock; every write is
//! mirrored to an optional JSON-lines journal that is replayed on open, so
//! state survives restarts and append order is preserved. Every read and
//! write names a workspace explicitly and the partition predicate is applied
//! here, never by callers.
//!
//! Evidence rows ([`ControlAssertion`]) and [`ActivityEvent`]s only
//! implement [`Entity`], not [`Mutable`], so there is no code path that
//! rewrites or deletes them:
//!
//! ```compile_fail
//! # use trustos_core::store::Store;
//! # use trustos_core::model::ActivityEvent;
//! fn rewrite(store: &Store, event: ActivityEvent) {
//!     store.put(event).unwrap();
//! }
//! ```
//!
//! ```compile_fail
//! # use trustos_core::store::Store;
//! # use trustos_core::model::WorkspaceId;
//! fn erase(store: &Store, ws: &WorkspaceId) {
//!     store.delete_event(ws, "evt_1").unwrap();
//! }
//! ```

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::new_id;
use crate::model::*;
use crate::watermark;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown workspace `{0}`")]
    UnknownWorkspace(String),
    #[error("workspace `{0}` already exists")]
    WorkspaceExists(String),
    #[error("workspace id must be non-empty")]
    EmptyWorkspaceId,
    #[error("assertion `{0}` already exists; evidence rows are immutable")]
    DuplicateAssertionId(String),
    #[error("duplicate {kind:?} id `{id}`")]
    Duplicate { kind: EntityKind, id: String },
    #[error("{kind:?} `{id}` not found in workspace")]
    NotFound { kind: EntityKind, id: String },
    #[error("assertion `{0}` carries a watermark that does not match its fields")]
    BadWatermark(String),
    #[error("journal i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("journal line {line}: {reason}")]
    CorruptJournal { line: usize, reason: String },
}

/// Entities that belong to exactly one workspace.
pub trait Scoped {
    fn workspace_id(&self) -> &WorkspaceId;
}

pub trait Entity: Scoped + Clone + Serialize + DeserializeOwned + Send + Sync + 'static {
    const KIND: EntityKind;
    fn id(&self) -> &str;
    #[doc(hidden)]
    fn rows(t: &Tables) -> &Vec<Self>;
    #[doc(hidden)]
    fn rows_mut(t: &mut Tables) -> &mut Vec<Self>;
}

/// Entities whose rows may be replaced in place (state machines such as
/// action items and registry entries).
pub trait Mutable: Entity {}

macro_rules! entities {
    ($( $ty:ident => $field:ident, $kind:ident, $idf:ident ; )*) => {
        #[doc(hidden)]
        #[derive(Default)]
        pub struct Tables {
            $( $field: Vec<$ty>, )*
        }

        $(
            impl Entity for $ty {
                const KIND: EntityKind = EntityKind::$kind;
                fn id(&self) -> &str { self.$idf.as_str() }
                fn rows(t: &Tables) -> &Vec<Self> { &t.$field }
                fn rows_mut(t: &mut Tables) -> &mut Vec<Self> { &mut t.$field }
            }
        )*

        fn replay_entry(tables: &mut Tables, entry: JournalEntry) -> Result<(), String> {
            match entry.kind {
                $( EntityKind::$kind => apply::<$ty>(tables, entry.op, entry.data), )*
            }
        }

        fn dump_tables(t: &Tables) -> serde_json::Value {
            let mut map = serde_json::Map::new();
            $( map.insert(stringify!($field).to_string(), serde_json::to_value(&t.$field).unwrap_or_default()); )*
            serde_json::Value::Object(map)
        }
    };
}

entities! {
    Workspace => workspaces, Workspace, workspace_id;
    UserAccount => users, UserAccount, user_id;
    ProviderConnection => connections, ProviderConnection, connection_id;
    EncryptedCredential => credentials, EncryptedCredential, credential_ref;
    ProbeRun => probe_runs, ProbeRun, probe_run_id;
    ControlAssertion => assertions, ControlAssertion, assertion_id;
    ActivityEvent => events, ActivityEvent, event_id;
    AiSystem => ai_systems, AiSystem, system_id;
    IncidentRecord => incidents, IncidentRecord, incident_id;
    DataFlowRecord => data_flows, DataFlowRecord, flow_id;
    LegalAgreement => agreements, LegalAgreement, agreement_id;
    ProcessAttestation => attestations, ProcessAttestation, attestation_id;
    PolicyDocument => documents, PolicyDocument, document_id;
    ActionItem => action_items, ActionItem, action_item_id;
    DriftEvent => drift_events, DriftEvent, drift_id;
    PostureSnapshot => posture_snapshots, PostureSnapshot, snapshot_id;
    CoverageObservation => coverage_observations, CoverageObservation, observation_id;
}


macro_rules! scoped {
    ($($ty:ty),* $(,)?) => {
        $( impl Scoped for $ty { fn workspace_id(&self) -> &WorkspaceId { &self.workspace_id } } )*
    };
}

scoped!(
    Workspace,
    UserAccount,
    ProviderConnection,
    EncryptedCredential,
    ProbeRun,
    ControlAssertion,
    ActivityEvent,
    AiSystem,
    IncidentRecord,
    DataFlowRecord,
    LegalAgreement,
    ProcessAttestation,
    PolicyDocument,
    ActionItem,
    DriftEvent,
    PostureSnapshot,
    CoverageObservation,
);

impl Mutable for AiSystem {}
impl Mutable for ActionItem {}
impl Mutable for Workspace {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum JournalOp {
    Insert,
    Put,
}

#[derive(Serialize, Deserialize)]
struct JournalEntry {
    op: JournalOp,
    kind: EntityKind,
    data: serde_json::Value,
}

fn apply<T: Entity>(tables: &mut Tables, op: JournalOp, data: serde_json::Value) -> Result<(), String> {
    let item: T = serde_json::from_value(data).map_err(|e| e.to_string())?;
    let rows = T::rows_mut(tables);
    match op {
        JournalOp::Insert => rows.push(item),
        JournalOp::Put => match rows.iter_mut().find(|r| r.id() == item.id()) {
            Some(slot) => *slot = item,
            None => rows.push(item),
        },
    }
    Ok(())
}

struct Journal {
    file: File,
    path: PathBuf,
}

pub struct Store {
    tables: RwLock<Tables>,
    journal: Mutex<Option<Journal>>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").finish_non_exhaustive()
    }
}

impl Store {
    pub fn in_memory() -> Self {
        Self {
            tables: RwLock::new(Tables::default()),
            journal: Mutex::new(None),
        }
    }

    /// Opens (or creates) a journal file and replays it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let mut tables = Tables::default();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: JournalEntry =
                    serde_json::from_str(&line).map_err(|e| StoreError::CorruptJournal {
                        line: i + 1,
                        reason: e.to_string(),
                    })?;
                replay_entry(&mut tables, entry)
                    .map_err(|reason| StoreError::CorruptJournal { line: i + 1, reason })?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            tables: RwLock::new(tables),
            journal: Mutex::new(Some(Journal { file, path })),
        })
    }

    pub fn journal_path(&self) -> Option<PathBuf> {
        self.journal.lock().unwrap().as_ref().map(|j| j.path.clone())
    }

    fn write_journal<T: Entity>(&self, op: JournalOp, item: &T) -> Result<(), StoreError> {
        let mut guard = self.journal.lock().unwrap();
        if let Some(j) = guard.as_mut() {
            let entry = JournalEntry {
                op,
                kind: T::KIND,
                data: serde_json::to_value(item).expect("entities serialize"),
            };
            let mut line = serde_json::to_string(&entry).expect("journal entry serializes");
            line.push('\n');
            j.file.write_all(line.as_bytes())?;
            j.file.flush()?;
        }
        Ok(())
    }

    fn check_workspace(tables: &Tables, ws: &WorkspaceId) -> Result<(), StoreError> {
        if tables.workspaces.iter().any(|w| &w.workspace_id == ws) {
            Ok(())
        } else {
            Err(StoreError::UnknownWorkspace(ws.to_string()))
        }
    }

    pub fn create_workspace(&self, workspace: Workspace) -> Result<(), StoreError> {
        if workspace.workspace_id.as_str().is_empty() {
            return Err(StoreError::EmptyWorkspaceId);
        }
        let mut t = self.tables.write().unwrap();
        if Self::check_workspace(&t, &workspace.workspace_id).is_ok() {
            return Err(StoreError::WorkspaceExists(workspace.workspace_id.to_string()));
        }
        self.write_journal(JournalOp::Insert, &workspace)?;
        t.workspaces.push(workspace);
        Ok(())
    }

    pub fn workspace_exists(&self, ws: &WorkspaceId) -> bool {
        Self::check_workspace(&self.tables.read().unwrap(), ws).is_ok()
    }

    pub fn workspace(&self, ws: &WorkspaceId) -> Result<Workspace, StoreError> {
        let t = self.tables.read().unwrap();
        t.workspaces
            .iter()
            .find(|w| &w.workspace_id == ws)
            .cloned()
            .ok_or_else(|| StoreError::UnknownWorkspace(ws.to_string()))
    }

    /// Ids of every workspace, in creation order. Operator use only.
    pub fn workspace_ids(&self) -> Vec<WorkspaceId> {
        let t = self.tables.read().unwrap();
        t.workspaces.iter().map(|w| w.workspace_id.clone()).collect()
    }

    fn insert_locked<T: Entity>(&self, t: &mut Tables, item: T) -> Result<(), StoreError> {
        Self::check_workspace(t, item.workspace_id())?;
        if T::rows(t).iter().any(|r| r.id() == item.id()) {
            return Err(if T::KIND == EntityKind::ControlAssertion {
                StoreError::DuplicateAssertionId(item.id().to_string())
            } else {
                StoreError::Duplicate {
                    kind: T::KIND,
                    id: item.id().to_string(),
                }
            });
        }
        self.write_journal(JournalOp::Insert, &item)?;
        T::rows_mut(t).push(item);
        Ok(())
    }

    /// Appends a new row. Fails if the workspace is unknown or the id is taken.
    pub fn insert<T: Entity>(&self, item: T) -> Result<(), StoreError> {
        let mut t = self.tables.write().unwrap();
        self.insert_locked(&mut t, item)
    }

    /// Builds and appends a row while holding the write lock; the builder sees
    /// the workspace's existing rows of the same kind (e.g. to assign the next
    /// version number).
    pub fn insert_computed<T: Entity>(
        &self,
        ws: &WorkspaceId,
        build: impl FnOnce(&[&T]) -> T,
    ) -> Result<T, StoreError> {
        let mut t = self.tables.write().unwrap();
        Self::check_workspace(&t, ws)?;
        let existing: Vec<&T> = T::rows(&t).iter().filter(|r| r.workspace_id() == ws).collect();
        let item = build(&existing);
        self.insert_locked(&mut t, item.clone())?;
        Ok(item)
    }

    /// Inserts or replaces a mutable row by id.
    pub fn put<T: Mutable>(&self, item: T) -> Result<(), StoreError> {
        let mut t = self.tables.write().unwrap();
        Self::check_workspace(&t, item.workspace_id())?;
        self.write_journal(JournalOp::Put, &item)?;
        let rows = T::rows_mut(&mut t);
        match rows.iter_mut().find(|r| r.id() == item.id()) {
            Some(slot) => *slot = item,
            None => rows.push(item),
        }
        Ok(())
    }

    /// Atomic read-modify-write of one mutable row. `f` may reject the change;
    /// nothing is written in that case.
    pub fn modify<T: Mutable, R, E: From<StoreError>>(
        &self,
        ws: &WorkspaceId,
        id: &str,
        f: impl FnOnce(&mut T) -> Result<R, E>,
    ) -> Result<(T, R), E> {
        let mut t = self.tables.write().unwrap();
        Self::check_workspace(&t, ws)?;
        let current = T::rows(&t)
            .iter()
            .find(|r| r.workspace_id() == ws && r.id() == id)
            .cloned()
            .ok_or_else(|| StoreError::NotFound {
                kind: T::KIND,
                id: id.to_string(),
            })?;
        let mut next = current;
        let r = f(&mut next)?;
        self.write_journal(JournalOp::Put, &next)?;
        let slot = T::rows_mut(&mut t)
            .iter_mut()
            .find(|r| r.workspace_id() == ws && r.id() == id)
            .expect("row present under lock");
        *slot = next.clone();
        Ok((next, r))
    }

    /// Every row of kind `T` in `ws` that satisfies `filter`, in append order.
    pub fn scoped_query<T: Entity>(
        &self,
        ws: &WorkspaceId,
        filter: impl Fn(&T) -> bool,
    ) -> Result<Vec<T>, StoreError> {
        let t = self.tables.read().unwrap();
        Self::check_workspace(&t, ws)?;
        Ok(T::rows(&t)
            .iter()
            .filter(|r| r.workspace_id() == ws && filter(r))
            .cloned()
            .collect())
    }

    pub fn all<T: Entity>(&self, ws: &WorkspaceId) -> Result<Vec<T>, StoreError> {
        self.scoped_query(ws, |_| true)
    }

    pub fn get<T: Entity>(&self, ws: &WorkspaceId, id: &str) -> Result<T, StoreError> {
        let t = self.tables.read().unwrap();
        Self::check_workspace(&t, ws)?;
        T::rows(&t)
            .iter()
            .find(|r| r.workspace_id() == ws && r.id() == id)
            .cloned()
            .ok_or_else(|| StoreError::NotFound {
                kind: T::KIND,
                id: id.to_string(),
            })
    }

    fn event_locked(
        &self,
        t: &mut Tables,
        ws: &WorkspaceId,
        actor: &str,
        verb: &str,
        subject: EntityRef,
        at: DateTime<Utc>,
    ) -> Result<String, StoreError> {
        let seq = t.events.iter().filter(|e| &e.workspace_id == ws).count() as u64 + 1;
        let event = ActivityEvent {
            event_id: new_id("evt"),
            workspace_id: ws.clone(),
            seq,
            actor: actor.to_string(),
            verb: verb.to_string(),
            subject,
            at,
        };
        let id = event.event_id.clone();
        self.insert_locked(t, event)?;
        Ok(id)
    }

    /// Appends an immutable activity event; events are totally ordered per
    /// workspace by `seq`.
    pub fn record_event(
        &self,
        ws: &WorkspaceId,
        actor: &str,
        verb: &str,
        subject: EntityRef,
        at: DateTime<Utc>,
    ) -> Result<String, StoreError> {
        let mut t = self.tables.write().unwrap();
        Self::check_workspace(&t, ws)?;
        self.event_locked(&mut t, ws, actor, verb, subject, at)
    }

    pub fn events(&self, ws: &WorkspaceId) -> Result<Vec<ActivityEvent>, StoreError> {
        let mut events: Vec<ActivityEvent> = self.all(ws)?;
        events.sort_by_key(|e| e.seq);
        Ok(events)
    }

    /// Appends an evidence row together with its activity event. A newer
    /// result for the same control and integration is a new row; existing
    /// rows are never touched.
    pub fn ledger_append(&self, assertion: ControlAssertion, actor: &str) -> Result<String, StoreError> {
        if !watermark::verify_assertion(&assertion) {
            return Err(StoreError::BadWatermark(assertion.assertion_id.clone()));
        }
        let mut t = self.tables.write().unwrap();
        let ws = assertion.workspace_id.clone();
        let id = assertion.assertion_id.clone();
        let at = assertion.executed_at;
        self.insert_locked(&mut t, assertion)?;
        self.event_locked(
            &mut t,
            &ws,
            actor,
            "evidence.appended",
            EntityRef::new(EntityKind::ControlAssertion, id.clone()),
            at,
        )?;
        Ok(id)
    }

    pub fn assertion_exists(&self, id: &str) -> bool {
        self.tables
            .read()
            .unwrap()
            .assertions
            .iter()
            .any(|a| a.assertion_id == id)
    }

    /// Current evidence: the latest row per (control, integration), by
    /// `executed_at` with append order breaking ties. Returned in first-seen
    /// order of the (control, integration) key.
    pub fn latest_assertions(&self, ws: &WorkspaceId) -> Result<Vec<ControlAssertion>, StoreError> {
        let rows: Vec<ControlAssertion> = self.all(ws)?;
        Ok(latest_per_key(rows))
    }

    /// Latest posture score of every workspace in a cohort. Workspace
    /// identities are not returned.
    pub fn cohort_scores(&self, cohort_key: &str) -> Vec<u8> {
        let t = self.tables.read().unwrap();
        t.workspaces
            .iter()
            .filter(|w| w.cohort_key.as_deref() == Some(cohort_key))
            .filter_map(|w| {
                t.posture_snapshots
                    .iter()
                    .filter(|s| s.workspace_id == w.workspace_id)
                    .max_by_key(|s| s.at)
                    .map(|s| s.score)
            })
            .collect()
    }

    /// JSON dump of every table, for auditing persisted state.
    pub fn dump(&self) -> serde_json::Value {
        dump_tables(&self.tables.read().unwrap())
    }
}

/// Keeps the latest row per (control, integration) key.
pub fn latest_per_key(rows: Vec<ControlAssertion>) -> Vec<ControlAssertion> {
    let mut order: Vec<(String, ProviderKind)> = Vec::new();
    let mut latest: HashMap<(String, ProviderKind), ControlAssertion> = HashMap::new();
    for a in rows {
        let key = (a.control_id.clone(), a.integration);
        match latest.get(&key) {
            None => {
                order.push(key.clone());
                latest.insert(key, a);
            }
            // Later append wins ties.
            Some(prev) if a.executed_at >= prev.executed_at => {
                latest.insert(key, a);
            }
            Some(_) => {}
        }
    }
    order.into_iter().filter_map(|k| latest.remove(&k)).collect()
}
