//! In-process simulated provider fleet.
//!
//! The fleet answers metadata queries from the loaded fixture and nothing
//! else: there are no mutation queries in [`QueryKind`]. Trace text is only
//! reachable through [`SimulatedFleet::scan_trace_text`], which lends it to a
//! closure and never returns it.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::fixture::ScenarioFixture;
use crate::model::ProviderKind;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FleetError {
    #[error("authentication failed for {0}")]
    AuthFailure(ProviderKind),
    #[error("query `{query}` is not supported by {provider}")]
    UnknownQuery { provider: ProviderKind, query: String },
    #[error("{0} is unavailable")]
    ProviderUnavailable(ProviderKind),
    #[error("{0} is not part of this scenario")]
    NotProvisioned(ProviderKind),
}

/// Metadata queries. Every variant is a read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum QueryKind {
    ListUsersMfa,
    GetPasswordPolicy,
    ListBuckets,
    GetBranchProtection,
    GetSignOnPolicy,
    GetWebhookConfig,
    GetProjectSettings,
    ListTraceMetadata,
    ListModels,
}

impl QueryKind {
    pub fn provider(self) -> ProviderKind {
        match self {
            QueryKind::ListUsersMfa | QueryKind::GetPasswordPolicy => ProviderKind::AwsIam,
            QueryKind::ListBuckets => ProviderKind::AwsS3,
            QueryKind::GetBranchProtection => ProviderKind::GitHub,
            QueryKind::GetSignOnPolicy => ProviderKind::Okta,
            QueryKind::GetWebhookConfig => ProviderKind::Stripe,
            QueryKind::GetProjectSettings => ProviderKind::Vercel,
            QueryKind::ListTraceMetadata => ProviderKind::TraceStore,
            QueryKind::ListModels => ProviderKind::ModelInventory,
        }
    }

    pub fn parse(s: &str) -> Option<QueryKind> {
        serde_json::from_value(Value::String(s.to_string())).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AccessLogEntry {
    pub provider_kind: ProviderKind,
    pub query_kind: String,
    pub read_only: bool,
}

// Metadata documents. Checks deserialize these from the returned JSON.

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IamUserMeta {
    pub mfa: bool,
    pub access_key_ages_days: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IamUsersDoc {
    pub users: Vec<IamUserMeta>,
    pub root_mfa: bool,
    pub stale_keys: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PasswordPolicyDoc {
    pub compliant: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketMeta {
    pub bucket: String,
    pub public: bool,
    pub encrypted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketsDoc {
    pub buckets: Vec<BucketMeta>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchProtectionDoc {
    pub branch_protection: bool,
    pub signed_commits: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignOnPolicyDoc {
    pub mfa_required: bool,
    pub session_lifetime_unlimited: bool,
    pub pct_users_without_mfa: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WebhookDoc {
    pub webhook_signing: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectSettingsDoc {
    pub https_only: bool,
}

/// Per-project trace metadata. Carries no logged text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceProjectMeta {
    pub project: String,
    pub trace_count: u32,
    pub tracing_enabled: bool,
    pub pii_scrubbing_in_logs: bool,
    pub evals_configured: bool,
    pub model_refs: Vec<String>,
    pub source_system_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceMetadataDoc {
    pub total_traces: u32,
    pub projects: Vec<TraceProjectMeta>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub name: String,
    pub fine_tuned: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ModelListDoc {
    pub region: String,
    pub foundation_models_available: u32,
    pub active_in_workspace: u32,
    pub fine_tuned_models_found: u32,
    pub models: Vec<ModelMeta>,
}

/// Token registered for a provider when none is supplied explicitly.
pub fn default_token(kind: ProviderKind, scenario_id: &str) -> String {
    format!("SIM-TOKEN-{}-{}", kind.ledger_name().replace('_', "-"), scenario_id)
}

pub struct SimulatedFleet {
    fixture: RwLock<Arc<ScenarioFixture>>,
    tokens: RwLock<HashMap<ProviderKind, Vec<u8>>>,
    access_log: Mutex<Vec<AccessLogEntry>>,
    outages: Mutex<HashMap<ProviderKind, u32>>,
}

impl std::fmt::Debug for SimulatedFleet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SimulatedFleet")
            .field("scenario_id", &self.snapshot().scenario_id)
            .finish_non_exhaustive()
    }
}

impl SimulatedFleet {
    pub fn new(fixture: ScenarioFixture) -> Self {
        let tokens = fixture
            .providers
            .kinds()
            .into_iter()
            .map(|k| (k, default_token(k, &fixture.scenario_id).into_bytes()))
            .collect();
        Self {
            fixture: RwLock::new(Arc::new(fixture)),
            tokens: RwLock::new(tokens),
            access_log: Mutex::new(Vec::new()),
            outages: Mutex::new(HashMap::new()),
        }
    }

    /// Replaces the registered token for one provider.
    pub fn set_token(&self, kind: ProviderKind, token: &[u8]) {
        self.tokens.write().unwrap().insert(kind, token.to_vec());
    }

    /// Current fixture state.
    pub fn snapshot(&self) -> Arc<ScenarioFixture> {
        self.fixture.read().unwrap().clone()
    }

    /// Swaps in a new fixture as a whole, as if the customer changed their
    /// infrastructure between scans. Registered tokens are kept.
    pub fn replace_fixture(&self, fixture: ScenarioFixture) {
        *self.fixture.write().unwrap() = Arc::new(fixture);
    }

    /// Makes the next `failures` queries to `kind` fail as unavailable.
    pub fn inject_outage(&self, kind: ProviderKind, failures: u32) {
        self.outages.lock().unwrap().insert(kind, failures);
    }

    pub fn latency(&self, kind: ProviderKind) -> Duration {
        Duration::from_millis(
            self.snapshot()
                .simulated_latency_ms
                .get(&kind)
                .copied()
                .unwrap_or(0),
        )
    }

    pub fn access_log(&self) -> Vec<AccessLogEntry> {
        self.access_log.lock().unwrap().clone()
    }

    fn authenticate(&self, kind: ProviderKind, credential: &[u8]) -> Result<(), FleetError> {
        if !self.snapshot().providers.kinds().contains(&kind) {
            return Err(FleetError::NotProvisioned(kind));
        }
        match self.tokens.read().unwrap().get(&kind) {
            Some(expected) if expected.as_slice() == credential => Ok(()),
            _ => Err(FleetError::AuthFailure(kind)),
        }
    }

    fn check_outage(&self, kind: ProviderKind) -> Result<(), FleetError> {
        let mut outages = self.outages.lock().unwrap();
        if let Some(n) = outages.get_mut(&kind) {
            if *n > 0 {
                *n -= 1;
                return Err(FleetError::ProviderUnavailable(kind));
            }
        }
        Ok(())
    }

    fn log(&self, kind: ProviderKind, query: &str) {
        self.access_log.lock().unwrap().push(AccessLogEntry {
            provider_kind: kind,
            query_kind: query.to_string(),
            read_only: true,
        });
    }

    /// Same as [`provider_query`](Self::provider_query) with the query named
    /// by string, for callers that accept query names from outside.
    pub fn provider_query_named(
        &self,
        kind: ProviderKind,
        credential: &[u8],
        query: &str,
    ) -> Result<Value, FleetError> {
        let q = QueryKind::parse(query).ok_or_else(|| FleetError::UnknownQuery {
            provider: kind,
            query: query.to_string(),
        })?;
        self.provider_query(kind, credential, q)
    }

    /// Answers one metadata query and records it in the access log.
    pub fn provider_query(
        &self,
        kind: ProviderKind,
        credential: &[u8],
        query: QueryKind,
    ) -> Result<Value, FleetError> {
        self.authenticate(kind, credential)?;
        let query_name = serde_json::to_value(query)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        if query.provider() != kind {
            return Err(FleetError::UnknownQuery {
                provider: kind,
                query: query_name,
            });
        }
        self.check_outage(kind)?;
        self.log(kind, &query_name);
        let fx = self.snapshot();
        let p = &fx.providers;
        let not_provisioned = || FleetError::NotProvisioned(kind);
        let doc = match query {
            QueryKind::ListUsersMfa => {
                let iam = p.iam.as_ref().ok_or_else(not_provisioned)?;
                let mut stale: Vec<u32> = iam
                    .users
                    .iter()
                    .flat_map(|u| u.access_keys.iter().map(|k| k.age_days))
                    .filter(|age| *age > STALE_KEY_DAYS)
                    .collect();
                stale.sort_unstable_by(|a, b| b.cmp(a));
                to_value(IamUsersDoc {
                    users: iam
                        .users
                        .iter()
                        .map(|u| IamUserMeta {
                            mfa: u.mfa_enabled,
                            access_key_ages_days: u.access_keys.iter().map(|k| k.age_days).collect(),
                        })
                        .collect(),
                    root_mfa: iam.root_mfa,
                    stale_keys: stale,
                })
            }
            QueryKind::GetPasswordPolicy => {
                let iam = p.iam.as_ref().ok_or_else(not_provisioned)?;
                to_value(PasswordPolicyDoc {
                    compliant: iam.password_policy_compliant,
                })
            }
            QueryKind::ListBuckets => {
                let buckets = p.s3.as_ref().ok_or_else(not_provisioned)?;
                to_value(BucketsDoc {
                    buckets: buckets
                        .iter()
                        .map(|b| BucketMeta {
                            bucket: b.bucket.clone(),
                            public: b.public,
                            encrypted: b.encrypted,
                        })
                        .collect(),
                })
            }
            QueryKind::GetBranchProtection => {
                let gh = p.github.as_ref().ok_or_else(not_provisioned)?;
                to_value(BranchProtectionDoc {
                    branch_protection: gh.branch_protection,
                    signed_commits: gh.signed_commits,
                })
            }
            QueryKind::GetSignOnPolicy => {
                let okta = p.okta.as_ref().ok_or_else(not_provisioned)?;
                let d = &okta.default_policy;
                to_value(SignOnPolicyDoc {
                    mfa_required: d.mfa_required,
                    session_lifetime_unlimited: d.session_lifetime_unlimited,
                    pct_users_without_mfa: d.pct_users_without_mfa,
                })
            }
            QueryKind::GetWebhookConfig => {
                let s = p.stripe.as_ref().ok_or_else(not_provisioned)?;
                to_value(WebhookDoc {
                    webhook_signing: s.webhook_signing,
                })
            }
            QueryKind::GetProjectSettings => {
                let v = p.vercel.as_ref().ok_or_else(not_provisioned)?;
                to_value(ProjectSettingsDoc {
                    https_only: v.https_only,
                })
            }
            QueryKind::ListTraceMetadata => {
                let traces = p.traces.as_ref().ok_or_else(not_provisioned)?;
                let mut projects: BTreeMap<&str, TraceProjectMeta> = BTreeMap::new();
                let mut refs: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
                let mut sources: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
                for t in traces {
                    let meta = projects.entry(&t.project).or_insert_with(|| TraceProjectMeta {
                        project: t.project.clone(),
                        trace_count: 0,
                        tracing_enabled: true,
                        pii_scrubbing_in_logs: true,
                        evals_configured: true,
                        model_refs: Vec::new(),
                        source_system_ids: Vec::new(),
                    });
                    meta.trace_count += 1;
                    meta.tracing_enabled &= t.tracing_enabled;
                    meta.pii_scrubbing_in_logs &= t.pii_scrubbing_in_logs;
                    meta.evals_configured &= t.evals_configured;
                    refs.entry(&t.project).or_default().insert(t.model_ref.clone());
                    sources.entry(&t.project).or_default().insert(t.source_system_id.clone());
                }
                let projects = projects
                    .into_iter()
                    .map(|(name, mut meta)| {
                        meta.model_refs = refs.remove(name).unwrap_or_default().into_iter().collect();
                        meta.source_system_ids =
                            sources.remove(name).unwrap_or_default().into_iter().collect();
                        meta
                    })
                    .collect();
                to_value(TraceMetadataDoc {
                    total_traces: traces.len() as u32,
                    projects,
                })
            }
            QueryKind::ListModels => {
                let inv = p.model_inventory.as_ref().ok_or_else(not_provisioned)?;
                to_value(ModelListDoc {
                    region: inv.region.clone(),
                    foundation_models_available: inv.foundation_models_available,
                    active_in_workspace: inv.active_models.len() as u32,
                    fine_tuned_models_found: inv.active_models.iter().filter(|m| m.fine_tuned).count() as u32,
                    models: inv
                        .active_models
                        .iter()
                        .map(|m| ModelMeta {
                            name: m.name.clone(),
                            fine_tuned: m.fine_tuned,
                        })
                        .collect(),
                })
            }
        };
        Ok(doc)
    }

    /// Lends the logged text of the given projects' traces to `scan`. The
    /// text is borrowed from the fixture and cannot outlive the call; only
    /// what `scan` computes from it is returned.
    pub fn scan_trace_text<R>(
        &self,
        credential: &[u8],
        projects: &[String],
        scan: impl FnOnce(&[&str]) -> R,
    ) -> Result<R, FleetError> {
        let kind = ProviderKind::TraceStore;
        self.authenticate(kind, credential)?;
        self.check_outage(kind)?;
        self.log(kind, "SCAN_TRACE_TEXT");
        let fx = self.snapshot();
        let traces = fx.providers.traces.as_ref().ok_or(FleetError::NotProvisioned(kind))?;
        let texts: Vec<&str> = traces
            .iter()
            .filter(|t| projects.contains(&t.project))
            .map(|t| t.logged_text.as_str())
            .collect();
        Ok(scan(&texts))
    }
}

/// Access keys older than this many days are stale.
pub const STALE_KEY_DAYS: u32 = 90;

fn to_value<T: Serialize>(doc: T) -> Value {
    serde_json::to_value(doc).expect("metadata documents serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::builder;

    fn acme() -> (SimulatedFleet, String) {
        let f = builder::acme_financial();
        let sid = f.scenario_id.clone();
        (SimulatedFleet::new(f), sid)
    }

    fn tok(kind: ProviderKind, sid: &str) -> Vec<u8> {
        default_token(kind, sid).into_bytes()
    }

    #[test]
    fn iam_users_document() {
        let (fleet, sid) = acme();
        let doc: IamUsersDoc = serde_json::from_value(
            fleet
                .provider_query(ProviderKind::AwsIam, &tok(ProviderKind::AwsIam, &sid), QueryKind::ListUsersMfa)
                .unwrap(),
        )
        .unwrap();
        assert_eq!(doc.users.iter().filter(|u| !u.mfa).count(), 3);
        assert!(doc.root_mfa);
        assert_eq!(doc.stale_keys, vec![203, 127]);
    }

    #[test]
    fn model_listing_document() {
        let (fleet, sid) = acme();
        let v = fleet
            .provider_query(
                ProviderKind::ModelInventory,
                &tok(ProviderKind::ModelInventory, &sid),
                QueryKind::ListModels,
            )
            .unwrap();
        assert_eq!(v["foundationModelsAvailable"], 31);
        assert_eq!(v["activeInWorkspace"], 4);
        assert_eq!(v["fineTunedModelsFound"], 1);
        assert_eq!(v["region"], "ap-southeast-2");
    }

    #[test]
    fn wrong_token_is_auth_failure() {
        let (fleet, _) = acme();
        assert_eq!(
            fleet.provider_query(ProviderKind::Okta, b"nope", QueryKind::GetSignOnPolicy),
            Err(FleetError::AuthFailure(ProviderKind::Okta))
        );
        assert!(fleet.access_log().is_empty());
    }

    #[test]
    fn query_for_other_provider_is_unknown() {
        let (fleet, sid) = acme();
        assert!(matches!(
            fleet.provider_query(ProviderKind::Okta, &tok(ProviderKind::Okta, &sid), QueryKind::ListBuckets),
            Err(FleetError::UnknownQuery { .. })
        ));
        assert!(matches!(
            fleet.provider_query_named(ProviderKind::Okta, &tok(ProviderKind::Okta, &sid), "DELETE_USER"),
            Err(FleetError::UnknownQuery { .. })
        ));
    }

    #[test]
    fn access_log_marks_reads() {
        let (fleet, sid) = acme();
        fleet
            .provider_query(ProviderKind::Stripe, &tok(ProviderKind::Stripe, &sid), QueryKind::GetWebhookConfig)
            .unwrap();
        let log = fleet.access_log();
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].provider_kind, ProviderKind::Stripe);
        assert_eq!(log[0].query_kind, "GET_WEBHOOK_CONFIG");
        assert!(log[0].read_only);
    }

    #[test]
    fn outage_then_recovery() {
        let (fleet, sid) = acme();
        fleet.inject_outage(ProviderKind::Vercel, 1);
        let t = tok(ProviderKind::Vercel, &sid);
        assert_eq!(
            fleet.provider_query(ProviderKind::Vercel, &t, QueryKind::GetProjectSettings),
            Err(FleetError::ProviderUnavailable(ProviderKind::Vercel))
        );
        assert!(fleet
            .provider_query(ProviderKind::Vercel, &t, QueryKind::GetProjectSettings)
            .is_ok());
    }

    #[test]
    fn queries_leave_state_unchanged_and_are_deterministic() {
        let (fleet, sid) = acme();
        let before = fleet.snapshot();
        let fleet = &fleet;
        let sid = sid.as_str();
        let run = || -> Vec<Value> {
            ProviderKind::ALL
                .into_iter()
                .flat_map(|k| {
                    let t = tok(k, sid);
                    [
                        QueryKind::ListUsersMfa,
                        QueryKind::GetPasswordPolicy,
                        QueryKind::ListBuckets,
                        QueryKind::GetBranchProtection,
                        QueryKind::GetSignOnPolicy,
                        QueryKind::GetWebhookConfig,
                        QueryKind::GetProjectSettings,
                        QueryKind::ListTraceMetadata,
                        QueryKind::ListModels,
                    ]
                    .into_iter()
                    .filter(move |q| q.provider() == k)
                    .map(move |q| fleet.provider_query(k, &t, q).unwrap())
                    .collect::<Vec<_>>()
                })
                .collect()
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
        assert_eq!(*before, *fleet.snapshot());
    }

    #[test]
    fn metadata_documents_carry_no_logged_text() {
        let (fleet, sid) = acme();
        let fx = fleet.snapshot();
        let texts: Vec<&str> = fx
            .providers
            .traces
            .as_ref()
            .unwrap()
            .iter()
            .map(|t| t.logged_text.as_str())
            .filter(|t| t.len() > 12)
            .collect();
        for k in ProviderKind::ALL {
            let t = tok(k, &sid);
            for q in [
                QueryKind::ListUsersMfa,
                QueryKind::ListBuckets,
                QueryKind::GetBranchProtection,
                QueryKind::GetSignOnPolicy,
                QueryKind::GetWebhookConfig,
                QueryKind::GetProjectSettings,
                QueryKind::ListTraceMetadata,
                QueryKind::ListModels,
            ] {
                if q.provider() != k {
                    continue;
                }
                let doc = fleet.provider_query(k, &t, q).unwrap().to_string();
                assert!(!doc.contains(builder::TRACE_SENTINEL));
                for text in &texts {
                    assert!(!doc.contains(text));
                }
            }
        }
    }
}
