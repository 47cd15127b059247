//! Scenario fixtures: declarative state of a simulated provider fleet.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Framework, ModelType, ProviderKind, RiskTier, Role};

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("cannot read fixture {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("fixture does not parse: {0}")]
    Parse(String),
    #[error("invalid fixture field `{field}`: {reason}")]
    Validation { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> FixtureError {
    FixtureError::Validation {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFixture {
    pub scenario_id: String,
    pub workspace_id: String,
    pub company_name: String,
    pub active_frameworks: Vec<Framework>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cohort_key: Option<String>,
    pub users: Vec<FixtureUser>,
    pub providers: Providers,
    pub declared_registry: Vec<DeclaredSystem>,
    /// Per-provider simulated probe latency; absent means zero.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub simulated_latency_ms: BTreeMap<ProviderKind, u64>,
    /// Assertion ids to use for the first probe of each provider.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub pinned_assertion_ids: BTreeMap<ProviderKind, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureUser {
    pub user_id: String,
    pub role: Role,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Providers {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iam: Option<IamState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s3: Option<Vec<BucketState>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub github: Option<GitHubState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub okta: Option<OktaState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stripe: Option<StripeState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vercel: Option<VercelState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub traces: Option<Vec<TraceRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_inventory: Option<ModelInventoryState>,
}

impl Providers {
    /// Provider kinds that have a block in this fixture, in canonical order.
    pub fn kinds(&self) -> Vec<ProviderKind> {
        ProviderKind::ALL
            .into_iter()
            .filter(|k| match k {
                ProviderKind::AwsIam => self.iam.is_some(),
                ProviderKind::AwsS3 => self.s3.is_some(),
                ProviderKind::GitHub => self.github.is_some(),
                ProviderKind::Okta => self.okta.is_some(),
                ProviderKind::Stripe => self.stripe.is_some(),
                ProviderKind::Vercel => self.vercel.is_some(),
                ProviderKind::TraceStore => self.traces.is_some(),
                ProviderKind::ModelInventory => self.model_inventory.is_some(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IamState {
    pub users: Vec<IamUser>,
    pub root_mfa: bool,
    pub password_policy_compliant: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IamUser {
    pub name: String,
    pub mfa_enabled: bool,
    pub access_keys: Vec<AccessKey>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccessKey {
    pub age_days: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BucketState {
    pub bucket: String,
    pub public: bool,
    pub encrypted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GitHubState {
    pub branch_protection: bool,
    pub signed_commits: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OktaState {
    pub default_policy: OktaPolicy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OktaPolicy {
    pub mfa_required: bool,
    pub session_lifetime_unlimited: bool,
    pub pct_users_without_mfa: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StripeState {
    pub webhook_signing: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VercelState {
    pub https_only: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub trace_id: String,
    pub source_system_id: String,
    pub project: String,
    pub tracing_enabled: bool,
    pub pii_scrubbing_in_logs: bool,
    pub evals_configured: bool,
    pub model_ref: String,
    /// Raw logged text. Only ever examined inside a probe worker.
    pub logged_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelInventoryState {
    pub region: String,
    pub foundation_models_available: u32,
    pub active_models: Vec<ActiveModel>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActiveModel {
    pub name: String,
    pub fine_tuned: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeclaredSystem {
    pub name: String,
    pub model_type: ModelType,
    pub risk_tier: RiskTier,
    pub deployment_env: String,
}

impl ScenarioFixture {
    pub fn from_json(text: &str) -> Result<Self, FixtureError> {
        let fixture: ScenarioFixture =
            serde_json::from_str(text).map_err(|e| FixtureError::Parse(e.to_string()))?;
        fixture.validate()?;
        Ok(fixture)
    }

    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("fixture serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<(), FixtureError> {
        for (field, value) in [
            ("scenario_id", &self.scenario_id),
            ("workspace_id", &self.workspace_id),
            ("company_name", &self.company_name),
        ] {
            if value.trim().is_empty() {
                return Err(invalid(field, "must be non-empty"));
            }
        }
        if self.active_frameworks.is_empty() {
            return Err(invalid("active_frameworks", "at least one framework is required"));
        }
        let kinds = self.providers.kinds();
        if kinds.is_empty() {
            return Err(invalid("providers", "no provider blocks present"));
        }

        let mut user_ids = HashSet::new();
        for (i, u) in self.users.iter().enumerate() {
            if u.user_id.trim().is_empty() {
                return Err(invalid(format!("users[{i}].user_id"), "must be non-empty"));
            }
            if !user_ids.insert(&u.user_id) {
                return Err(invalid(format!("users[{i}].user_id"), "duplicate user id"));
            }
        }

        let p = &self.providers;
        if let Some(iam) = &p.iam {
            for (i, u) in iam.users.iter().enumerate() {
                if u.name.trim().is_empty() {
                    return Err(invalid(format!("providers.iam.users[{i}].name"), "must be non-empty"));
                }
            }
        }
        if let Some(buckets) = &p.s3 {
            let mut names = HashSet::new();
            for (i, b) in buckets.iter().enumerate() {
                if b.bucket.trim().is_empty() {
                    return Err(invalid(format!("providers.s3[{i}].bucket"), "must be non-empty"));
                }
                if !names.insert(&b.bucket) {
                    return Err(invalid(format!("providers.s3[{i}].bucket"), "duplicate bucket name"));
                }
            }
        }
        if let Some(okta) = &p.okta {
            if okta.default_policy.pct_users_without_mfa > 100 {
                return Err(invalid(
                    "providers.okta.default_policy.pct_users_without_mfa",
                    format!("{} is outside 0..=100", okta.default_policy.pct_users_without_mfa),
                ));
            }
        }
        if let Some(traces) = &p.traces {
            let mut ids = HashSet::new();
            for (i, t) in traces.iter().enumerate() {
                for (name, v) in [
                    ("trace_id", &t.trace_id),
                    ("source_system_id", &t.source_system_id),
                    ("project", &t.project),
                    ("model_ref", &t.model_ref),
                ] {
                    if v.trim().is_empty() {
                        return Err(invalid(format!("providers.traces[{i}].{name}"), "must be non-empty"));
                    }
                }
                if !ids.insert(&t.trace_id) {
                    return Err(invalid(format!("providers.traces[{i}].trace_id"), "duplicate trace id"));
                }
            }
        }
        if let Some(inv) = &p.model_inventory {
            if inv.region.trim().is_empty() {
                return Err(invalid("providers.model_inventory.region", "must be non-empty"));
            }
            for (i, m) in inv.active_models.iter().enumerate() {
                if m.name.trim().is_empty() {
                    return Err(invalid(
                        format!("providers.model_inventory.active_models[{i}].name"),
                        "must be non-empty",
                    ));
                }
            }
        }

        let mut declared = BTreeSet::new();
        for (i, d) in self.declared_registry.iter().enumerate() {
            if d.name.trim().is_empty() {
                return Err(invalid(format!("declared_registry[{i}].name"), "must be non-empty"));
            }
            if d.risk_tier == RiskTier::Unclassified {
                return Err(invalid(
                    format!("declared_registry[{i}].risk_tier"),
                    "declared systems are active and must carry a risk tier",
                ));
            }
            if !declared.insert(&d.name) {
                return Err(invalid(format!("declared_registry[{i}].name"), "duplicate system name"));
            }
        }

        for kind in self.simulated_latency_ms.keys() {
            if !kinds.contains(kind) {
                return Err(invalid(
                    format!("simulated_latency_ms.{kind}"),
                    "no such provider block in this fixture",
                ));
            }
        }
        for (kind, id) in &self.pinned_assertion_ids {
            if !kinds.contains(kind) {
                return Err(invalid(
                    format!("pinned_assertion_ids.{kind}"),
                    "no such provider block in this fixture",
                ));
            }
            if !id.starts_with("ea_") || id.len() <= 3 {
                return Err(invalid(format!("pinned_assertion_ids.{kind}"), "must be `ea_` followed by an id"));
            }
        }
        Ok(())
    }
}

/// Reads, parses and validates a fixture file. Unknown keys are rejected.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioFixture, FixtureError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| FixtureError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ScenarioFixture::from_json(&text)
}
