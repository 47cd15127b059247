//! Provider checks: metadata queries in, raw findings and a counts-only
//! metadata summary out. Severities are attached later from the matrix.

use std::collections::BTreeSet;

use serde::de::DeserializeOwned;

use super::pii;
use crate::model::{ControlAssertion, MetaValue, MetadataSummary, ProbeKind, ProviderKind};
use crate::sim::fleet::*;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawFinding {
    pub check_id: &'static str,
    pub description: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CheckOutput {
    pub findings: Vec<RawFinding>,
    pub metadata: MetadataSummary,
}

/// Names in the workspace's AI registry.
#[derive(Debug, Clone, Default)]
pub struct RegistryView {
    /// Every registered name, whatever its review state.
    pub known: BTreeSet<String>,
    /// Names that have been reviewed and are active.
    pub active: BTreeSet<String>,
}

pub fn probe_provider(kind: ProbeKind) -> Option<ProviderKind> {
    ProviderKind::ALL.into_iter().find(|p| p.audit_probe() == kind)
}

fn finding(check_id: &'static str, description: impl Into<String>) -> RawFinding {
    RawFinding {
        check_id,
        description: description.into(),
    }
}

fn fetch<T: DeserializeOwned>(
    fleet: &SimulatedFleet,
    kind: ProviderKind,
    credential: &[u8],
    query: QueryKind,
) -> Result<T, FleetError> {
    let v = fleet.provider_query(kind, credential, query)?;
    Ok(serde_json::from_value(v).expect("fleet documents match their schema"))
}

fn flag(m: &mut MetadataSummary, k: &str, v: bool) {
    m.insert(k.to_string(), MetaValue::Flag(v));
}

fn count(m: &mut MetadataSummary, k: &str, v: impl Into<i64>) {
    m.insert(k.to_string(), MetaValue::Count(v.into()));
}

fn plural(n: usize, one: &str, many: &str) -> String {
    format!("{n} {}", if n == 1 { one } else { many })
}

/// Runs the audit check for `kind` with an already-decrypted credential.
pub fn run_check(
    kind: ProbeKind,
    fleet: &SimulatedFleet,
    credential: &[u8],
    registry: &RegistryView,
) -> Result<CheckOutput, FleetError> {
    let mut out = CheckOutput::default();
    let m = &mut out.metadata;
    let f = &mut out.findings;
    match kind {
        ProbeKind::IamAudit => {
            let p = ProviderKind::AwsIam;
            let users: IamUsersDoc = fetch(fleet, p, credential, QueryKind::ListUsersMfa)?;
            let policy: PasswordPolicyDoc = fetch(fleet, p, credential, QueryKind::GetPasswordPolicy)?;
            let without_mfa = users.users.iter().filter(|u| !u.mfa).count();
            count(m, "users_total", users.users.len() as i64);
            count(m, "users_without_mfa", without_mfa as i64);
            m.insert(
                "stale_access_key_ages_days".into(),
                MetaValue::Counts(users.stale_keys.iter().map(|d| *d as i64).collect()),
            );
            flag(m, "root_mfa", users.root_mfa);
            flag(m, "password_policy_compliant", policy.compliant);
            if !users.root_mfa {
                f.push(finding("iam.root_mfa_disabled", "Root account MFA disabled"));
            }
            if without_mfa > 0 {
                f.push(finding(
                    "iam.users_without_mfa",
                    format!("{} without MFA", plural(without_mfa, "IAM user", "IAM users")),
                ));
            }
            if !users.stale_keys.is_empty() {
                let ages: Vec<String> = users.stale_keys.iter().map(|d| format!("{d}d")).collect();
                f.push(finding(
                    "iam.stale_access_keys",
                    format!(
                        "{} ({})",
                        plural(users.stale_keys.len(), "stale access key", "stale access keys"),
                        ages.join(", ")
                    ),
                ));
            }
            if !policy.compliant {
                f.push(finding("iam.password_policy_gap", "Account password policy below baseline"));
            }
        }
        ProbeKind::S3Audit => {
            let doc: BucketsDoc = fetch(fleet, ProviderKind::AwsS3, credential, QueryKind::ListBuckets)?;
            let public = doc.buckets.iter().filter(|b| b.public).count();
            let unencrypted = doc.buckets.iter().filter(|b| !b.encrypted).count();
            count(m, "buckets_total", doc.buckets.len() as i64);
            count(m, "public_buckets", public as i64);
            count(m, "unencrypted_buckets", unencrypted as i64);
            for b in &doc.buckets {
                match (b.public, b.encrypted) {
                    (true, false) => f.push(finding(
                        "s3.bucket_public",
                        format!("Publicly accessible, unencrypted S3 bucket ({})", b.bucket),
                    )),
                    (true, true) => f.push(finding(
                        "s3.bucket_public",
                        format!("Publicly accessible S3 bucket ({})", b.bucket),
                    )),
                    (false, false) => f.push(finding(
                        "s3.bucket_unencrypted",
                        format!("Unencrypted S3 bucket ({})", b.bucket),
                    )),
                    (false, true) => {}
                }
            }
            if public > 0 {
                f.push(finding(
                    "s3.public_access_block_off",
                    "Account-level S3 public access block disabled",
                ));
            }
        }
        ProbeKind::GitHubAudit => {
            let doc: BranchProtectionDoc =
                fetch(fleet, ProviderKind::GitHub, credential, QueryKind::GetBranchProtection)?;
            flag(m, "branch_protection", doc.branch_protection);
            flag(m, "signed_commits", doc.signed_commits);
            if !doc.branch_protection {
                f.push(finding(
                    "github.branch_protection_missing",
                    "Default branch protection disabled",
                ));
            }
            if !doc.signed_commits {
                f.push(finding("github.unsigned_commits", "Signed commits not required"));
            }
        }
        ProbeKind::OktaAudit => {
            let doc: SignOnPolicyDoc = fetch(fleet, ProviderKind::Okta, credential, QueryKind::GetSignOnPolicy)?;
            flag(m, "mfa_required", doc.mfa_required);
            flag(m, "session_lifetime_unlimited", doc.session_lifetime_unlimited);
            count(m, "pct_users_without_mfa", doc.pct_users_without_mfa);
            if !doc.mfa_required {
                f.push(finding(
                    "okta.mfa_not_required",
                    format!(
                        "Okta default sign-on policy does not enforce MFA ({}% of users without MFA)",
                        doc.pct_users_without_mfa
                    ),
                ));
            }
            if doc.session_lifetime_unlimited {
                f.push(finding(
                    "okta.session_lifetime_unlimited",
                    "Okta default sign-on policy permits unlimited session lifetime",
                ));
            }
            if doc.pct_users_without_mfa > 0 {
                f.push(finding(
                    "okta.mfa_coverage_gap",
                    format!("{}% of Okta users not enrolled in MFA", doc.pct_users_without_mfa),
                ));
            }
        }
        ProbeKind::StripeAudit => {
            let doc: WebhookDoc = fetch(fleet, ProviderKind::Stripe, credential, QueryKind::GetWebhookConfig)?;
            flag(m, "webhook_signing", doc.webhook_signing);
            if !doc.webhook_signing {
                f.push(finding(
                    "stripe.webhook_signing_disabled",
                    "Stripe webhook signature verification disabled",
                ));
            }
        }
        ProbeKind::VercelAudit => {
            let doc: ProjectSettingsDoc =
                fetch(fleet, ProviderKind::Vercel, credential, QueryKind::GetProjectSettings)?;
            flag(m, "https_only", doc.https_only);
            if !doc.https_only {
                f.push(finding("vercel.https_not_enforced", "HTTPS not enforced on Vercel project"));
            }
        }
        ProbeKind::TracePiiAudit => {
            let doc: TraceMetadataDoc =
                fetch(fleet, ProviderKind::TraceStore, credential, QueryKind::ListTraceMetadata)?;
            let unscrubbed: Vec<String> = doc
                .projects
                .iter()
                .filter(|p| !p.pii_scrubbing_in_logs)
                .map(|p| p.project.clone())
                .collect();
            let counts = if unscrubbed.is_empty() {
                pii::PatternCounts::default()
            } else {
                fleet.scan_trace_text(credential, &unscrubbed, pii::scan_texts)?
            };
            let no_evals: Vec<&str> = doc
                .projects
                .iter()
                .filter(|p| !p.evals_configured)
                .map(|p| p.project.as_str())
                .collect();
            let unpinned =
                pii::unpinned_refs(doc.projects.iter().flat_map(|p| p.model_refs.iter().map(String::as_str)));
            let untraced = doc.projects.iter().filter(|p| !p.tracing_enabled).count();

            count(m, "traces_scanned", doc.total_traces);
            count(m, "projects", doc.projects.len() as i64);
            count(m, "projects_unscrubbed", unscrubbed.len() as i64);
            count(m, "projects_without_evals", no_evals.len() as i64);
            count(m, "projects_tracing_disabled", untraced as i64);
            count(m, "email_count", counts.email_count);
            count(m, "tfn_count", counts.tfn_count);
            count(m, "phone_count", counts.phone_count);
            count(m, "name_count", counts.name_count);
            count(m, "unpinned_model_refs", unpinned.len() as i64);

            if counts.total() > 0 {
                f.push(finding(
                    "trace.pii_in_logs",
                    format!(
                        "PII leaking unredacted into trace logs in {} ({} emails, {} TFNs, {} phone numbers, {} full names)",
                        unscrubbed.join(", "),
                        counts.email_count,
                        counts.tfn_count,
                        counts.phone_count,
                        counts.name_count
                    ),
                ));
            }
            if !no_evals.is_empty() {
                f.push(finding(
                    "trace.evals_unconfigured",
                    format!(
                        "Evaluations not configured for {} ({})",
                        plural(no_evals.len(), "project", "projects"),
                        no_evals.join(", ")
                    ),
                ));
            }
            if !unpinned.is_empty() {
                f.push(finding(
                    "trace.unpinned_model",
                    format!("Unpinned floating model alias {}", unpinned.join(", ")),
                ));
            }
        }
        ProbeKind::ModelInventoryAudit => {
            let doc: ModelListDoc =
                fetch(fleet, ProviderKind::ModelInventory, credential, QueryKind::ListModels)?;
            let gaps: Vec<&str> = doc
                .models
                .iter()
                .filter(|mm| mm.fine_tuned && !registry.active.contains(&mm.name))
                .map(|mm| mm.name.as_str())
                .collect();
            let undeclared_foundation: Vec<&str> = doc
                .models
                .iter()
                .filter(|mm| !mm.fine_tuned && !registry.known.contains(&mm.name))
                .map(|mm| mm.name.as_str())
                .collect();
            count(m, "foundation_models_available", doc.foundation_models_available);
            count(m, "active_in_workspace", doc.active_in_workspace);
            count(m, "fine_tuned_models_found", doc.fine_tuned_models_found);
            count(m, "registry_gaps", gaps.len() as i64);
            count(m, "undeclared_foundation_models", undeclared_foundation.len() as i64);
            if !gaps.is_empty() {
                f.push(finding(
                    "inventory.unregistered_fine_tuned_model",
                    format!(
                        "Fine-tuned model {} not declared in AI registry or not yet reviewed",
                        gaps.join(", ")
                    ),
                ));
            }
            if !undeclared_foundation.is_empty() {
                f.push(finding(
                    "inventory.unregistered_foundation_model",
                    format!(
                        "Active foundation model {} not declared in AI registry",
                        undeclared_foundation.join(", ")
                    ),
                ));
            }
        }
        ProbeKind::DiscoveryCycle => {
            unreachable!("discovery cycles are not audit checks")
        }
    }
    Ok(out)
}

fn meta_count(a: &ControlAssertion, k: &str) -> Option<i64> {
    match a.metadata_summary.get(k) {
        Some(MetaValue::Count(n)) => Some(*n),
        _ => None,
    }
}

/// One-line findings summary for display, e.g.
/// `3 users without MFA · 2 stale access keys (203d, 127d) · Root MFA: OK`.
pub fn summary_line(a: &ControlAssertion) -> String {
    if a.integration == ProviderKind::AwsIam {
        let mut parts = Vec::new();
        if let Some(n) = meta_count(a, "users_without_mfa") {
            parts.push(format!("{n} users without MFA"));
        }
        if let Some(MetaValue::Counts(ages)) = a.metadata_summary.get("stale_access_key_ages_days") {
            let list: Vec<String> = ages.iter().map(|d| format!("{d}d")).collect();
            if list.is_empty() {
                parts.push("0 stale access keys".into());
            } else {
                parts.push(format!("{} stale access keys ({})", list.len(), list.join(", ")));
            }
        }
        if let Some(MetaValue::Flag(root)) = a.metadata_summary.get("root_mfa") {
            parts.push(format!("Root MFA: {}", if *root { "OK" } else { "MISSING" }));
        }
        return parts.join(" · ");
    }
    if a.findings.is_empty() {
        return "No findings".into();
    }
    a.findings
        .iter()
        .map(|f| f.description.as_str())
        .collect::<Vec<_>>()
        .join(" · ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::builder;

    fn run(kind: ProbeKind, fixture: crate::sim::fixture::ScenarioFixture, registry: &RegistryView) -> CheckOutput {
        let sid = fixture.scenario_id.clone();
        let fleet = SimulatedFleet::new(fixture);
        let p = probe_provider(kind).unwrap();
        run_check(kind, &fleet, default_token(p, &sid).as_bytes(), registry).unwrap()
    }

    fn ids(out: &CheckOutput) -> Vec<&'static str> {
        out.findings.iter().map(|f| f.check_id).collect()
    }

    fn acme_registry() -> RegistryView {
        let f = builder::acme_financial();
        let names: BTreeSet<String> = f.declared_registry.iter().map(|d| d.name.clone()).collect();
        RegistryView {
            known: names.clone(),
            active: names,
        }
    }

    #[test]
    fn acme_iam() {
        let out = run(ProbeKind::IamAudit, builder::acme_financial(), &acme_registry());
        assert_eq!(
            ids(&out),
            ["iam.users_without_mfa", "iam.stale_access_keys", "iam.password_policy_gap"]
        );
        assert_eq!(out.findings[1].description, "2 stale access keys (203d, 127d)");
    }

    #[test]
    fn acme_s3() {
        let out = run(ProbeKind::S3Audit, builder::acme_financial(), &acme_registry());
        assert_eq!(
            ids(&out),
            ["s3.bucket_public", "s3.bucket_unencrypted", "s3.public_access_block_off"]
        );
        assert!(out.findings[0].description.contains("acme-dev-scratch"));
        assert!(out.findings[1].description.contains("acme-legacy-export"));
    }

    #[test]
    fn acme_okta_and_traces() {
        let out = run(ProbeKind::OktaAudit, builder::acme_financial(), &acme_registry());
        assert_eq!(
            ids(&out),
            ["okta.mfa_not_required", "okta.session_lifetime_unlimited", "okta.mfa_coverage_gap"]
        );
        let out = run(ProbeKind::TracePiiAudit, builder::acme_financial(), &acme_registry());
        assert_eq!(
            ids(&out),
            ["trace.pii_in_logs", "trace.evals_unconfigured", "trace.unpinned_model"]
        );
        assert_eq!(out.metadata["email_count"], MetaValue::Count(43));
        assert_eq!(out.metadata["traces_scanned"], MetaValue::Count(2847));
    }

    #[test]
    fn acme_inventory() {
        let out = run(ProbeKind::ModelInventoryAudit, builder::acme_financial(), &acme_registry());
        assert_eq!(
            ids(&out),
            [
                "inventory.unregistered_fine_tuned_model",
                "inventory.unregistered_foundation_model"
            ]
        );
        let mut reg = acme_registry();
        reg.known.insert("acme-custom-classifier-v1".into());
        let out = run(ProbeKind::ModelInventoryAudit, builder::acme_financial(), &reg);
        // Registered but still pending review keeps the gap open.
        assert_eq!(out.findings.len(), 2);
        reg.active.insert("acme-custom-classifier-v1".into());
        let out = run(ProbeKind::ModelInventoryAudit, builder::acme_financial(), &reg);
        assert_eq!(ids(&out), ["inventory.unregistered_foundation_model"]);
    }

    #[test]
    fn clean_workspace_has_no_findings() {
        let f = builder::clean_workspace();
        let names: BTreeSet<String> = f.declared_registry.iter().map(|d| d.name.clone()).collect();
        let reg = RegistryView {
            known: names.clone(),
            active: names,
        };
        for p in ProviderKind::ALL {
            let out = run(p.audit_probe(), builder::clean_workspace(), &reg);
            assert!(out.findings.is_empty(), "{p}: {:?}", out.findings);
        }
    }

    #[test]
    fn branch_protection_off_is_reported() {
        let mut f = builder::acme_financial();
        f.providers.github.as_mut().unwrap().branch_protection = false;
        let out = run(ProbeKind::GitHubAudit, f, &acme_registry());
        assert_eq!(
            ids(&out),
            ["github.branch_protection_missing", "github.unsigned_commits"]
        );
    }

    #[test]
    fn every_check_id_is_in_the_matrix() {
        let matrix = super::super::severity::SeverityMatrix::default();
        let mut f = builder::acme_financial();
        f.providers.iam.as_mut().unwrap().root_mfa = false;
        f.providers.github.as_mut().unwrap().branch_protection = false;
        f.providers.stripe.as_mut().unwrap().webhook_signing = false;
        f.providers.vercel.as_mut().unwrap().https_only = false;
        for p in ProviderKind::ALL {
            let out = run(p.audit_probe(), f.clone(), &RegistryView::default());
            for fi in out.findings {
                assert!(matrix.rule(fi.check_id).is_some(), "{}", fi.check_id);
            }
        }
    }
}
