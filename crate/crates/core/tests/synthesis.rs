mod common;

use trustos_core::model::*;
use trustos_core::probe::Trigger;
use trustos_core::sim::builder;
use trustos_core::synthesis::*;

fn scanned() -> (std::sync::Arc<trustos_core::engine::Engine>, WorkspaceId) {
    let (e, _c, ws) = common::provisioned(&builder::acme_financial());
    e.scan_now(&ws, Trigger::Manual).unwrap();
    (e, ws)
}

struct Failing;

impl DocumentGenerator for Failing {
    fn name(&self) -> &str {
        "failing"
    }
    fn generate(&self, _prompt: &str) -> Result<String, SynthesisError> {
        Err(SynthesisError::GeneratorFailure("upstream refused".into()))
    }
}

#[test]
fn soc2_evidence_is_the_two_passing_rows() {
    let (e, ws) = scanned();
    let ev = build_evidence_string(e.store(), e.catalog(), e.posture_config(), &ws, DocType::Soc2SystemDescription)
        .unwrap();
    assert_eq!(ev.lines.len(), 2);
    assert_eq!(ev.source_assertions, ["ea_6a2c11f", "ea_8b3d90c"]);

    // Every line joins back to a passing ledger row.
    let latest = e.store().latest_assertions(&ws).unwrap();
    for id in &ev.source_assertions {
        let a = latest.iter().find(|a| &a.assertion_id == id).unwrap();
        assert_eq!(a.status, AssertionStatus::Pass);
        assert!(ev.lines.contains(&evidence_claim(e.catalog(), a)));
    }

    let request = DocumentRequest {
        workspace_id: ws.clone(),
        doc_type: DocType::Soc2SystemDescription,
        company_name: "Acme Financial Services".into(),
    };
    let prompt = build_prompt(&request, &ev);
    let mut lines = prompt.lines();
    assert_eq!(lines.next(), Some("Act as an elite compliance auditor."));
    assert_eq!(
        lines.next(),
        Some("Write a SOC 2 system description for Acme Financial Services.")
    );
    assert_eq!(lines.next(), Some("Base it only on the following verified evidence:"));
    for l in &ev.lines {
        assert!(prompt.contains(l.as_str()));
    }
    assert_eq!(prompt, build_prompt(&request, &ev));
}

#[test]
fn executive_report_names_s3_and_okta_first() {
    let (e, ws) = scanned();
    let ev = build_evidence_string(e.store(), e.catalog(), e.posture_config(), &ws, DocType::ExecutiveTrustReport)
        .unwrap();
    assert!(ev.lines.contains(&"AWS S3: FAIL (2 critical)".to_string()));
    let doc = generate_document(
        e.store(),
        e.catalog(),
        e.posture_config(),
        &TemplateGenerator,
        &ws,
        DocType::ExecutiveTrustReport,
        e.now(),
    )
    .unwrap();
    let top = doc
        .content
        .split("## Top risk areas")
        .nth(1)
        .unwrap()
        .split("\n## ")
        .next()
        .unwrap();
    let first = top.lines().find(|l| l.starts_with("1. ")).unwrap();
    let second = top.lines().find(|l| l.starts_with("2. ")).unwrap();
    assert!(first.contains("AWS S3") && first.contains("acme-dev-scratch"), "{first}");
    assert!(second.contains("Okta") && second.contains("MFA"), "{second}");

    let report = executive_report(e.store(), e.catalog(), e.posture_config(), &ws, e.now()).unwrap();
    assert_eq!(report.posture.score, 61);
    assert_eq!(report.projected_score_after_criticals, 84);
    assert_eq!(report.top_risks[0].integration, ProviderKind::AwsS3);
    assert_eq!(report.top_risks[1].integration, ProviderKind::Okta);
    assert_eq!(report.recent_scans.len(), 8);
    assert_eq!(report.remediation.open, 12);
    assert!(report.to_markdown().contains("Posture **61/100** (Partially Compliant)"));
}

#[test]
fn versions_increment_and_failures_persist_nothing() {
    let (e, ws) = scanned();
    let gen = |g: &dyn DocumentGenerator| {
        generate_document(e.store(), e.catalog(), e.posture_config(), g, &ws, DocType::Soc2SystemDescription, e.now())
    };
    let v1 = gen(&TemplateGenerator).unwrap();
    let v2 = gen(&TemplateGenerator).unwrap();
    assert_eq!((v1.version, v2.version), (1, 2));
    assert_eq!(v1.content, v2.content, "template output is a function of ledger state");
    assert_eq!(v1.source_assertions, ["ea_6a2c11f", "ea_8b3d90c"]);

    assert!(matches!(gen(&Failing), Err(SynthesisError::GeneratorFailure(_))));
    let docs: Vec<PolicyDocument> = e.store().all(&ws).unwrap();
    assert_eq!(docs.len(), 2);

    // Versions are per document type.
    let other = generate_document(
        e.store(),
        e.catalog(),
        e.posture_config(),
        &TemplateGenerator,
        &ws,
        DocType::Iso42001Narrative,
        e.now(),
    )
    .unwrap();
    assert_eq!(other.version, 1);
}

#[test]
fn concurrent_generations_get_distinct_versions() {
    let (e, ws) = scanned();
    std::thread::scope(|s| {
        for _ in 0..8 {
            s.spawn(|| {
                generate_document(
                    e.store(),
                    e.catalog(),
                    e.posture_config(),
                    &TemplateGenerator,
                    &ws,
                    DocType::ControlPolicyDraft,
                    e.now(),
                )
                .unwrap()
            });
        }
    });
    let mut versions: Vec<u32> = e.store().all::<PolicyDocument>(&ws).unwrap().iter().map(|d| d.version).collect();
    versions.sort();
    assert_eq!(versions, (1..=8).collect::<Vec<_>>());
}

#[test]
fn empty_ledger_has_no_evidence() {
    let (e, _c, ws) = common::provisioned(&builder::clean_workspace());
    let err = generate_document(
        e.store(),
        e.catalog(),
        e.posture_config(),
        &TemplateGenerator,
        &ws,
        DocType::Soc2SystemDescription,
        e.now(),
    )
    .unwrap_err();
    assert!(matches!(err, SynthesisError::NoEvidence(_)));
}
