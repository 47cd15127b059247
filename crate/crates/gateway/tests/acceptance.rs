//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! A criterion listed in `KNOWN_CONFLICTS` still prints FAIL when it fails,
//! but does not fail the process. If such a criterion starts passing, the
//! process fails so the list is kept honest.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use chrono::{TimeZone, Utc};
use http_body_util::BodyExt;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use tower::ServiceExt;
use trustos_core::clock::{new_id, ManualClock};
use trustos_core::discovery::{discovery_cycle, ObservationWindow};
use trustos_core::engine::{Engine, PostureLine};
use trustos_core::intelligence::{benchmark, project_posture, Assumption, BenchmarkResult, PostureConfig};
use trustos_core::model::*;
use trustos_core::probe::executor::Trigger;
use trustos_core::probe::queue::{JobState, ProbeQueue};
use trustos_core::probe::run_pii_heuristics;
use trustos_core::sim::builder::{self, TRACE_SENTINEL};
use trustos_core::sim::ScenarioFixture;
use trustos_core::store::{Store, StoreError};
use trustos_core::synthesis::{
    build_evidence_string, build_prompt, evidence_claim, generate_document, DocType, DocumentRequest,
    TemplateGenerator,
};
use trustos_core::vault::MasterKey;
use trustos_gateway::auth::{tokens_for_fixture, TokenTable};
use trustos_gateway::export::{export_auditor_bundle, verify_bundle, Verdict};
use trustos_gateway::http::{router, AppState};

const ACME: &str = "ws_acme_fin_8821";
const CANARY: &str = "CANARY-SECRET-001";
const GOLDEN: &str = "golden evidence run";

/// Criteria whose reference values contradict each other.
const KNOWN_CONFLICTS: &[&str] = &[GOLDEN];

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

// ---------------------------------------------------------------- helpers

#[derive(Clone, Default)]
struct Capture(Arc<Mutex<Vec<u8>>>);

impl Write for Capture {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(buf);
        Ok(buf.len())
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

static LOGS: OnceLock<Capture> = OnceLock::new();

fn captured_logs() -> String {
    LOGS.get()
        .map(|c| String::from_utf8_lossy(&c.0.lock().unwrap()).into_owned())
        .unwrap_or_default()
}

fn hex(s: &str) -> String {
    s.bytes().map(|b| format!("{b:02x}")).collect()
}

fn clock() -> Arc<ManualClock> {
    Arc::new(ManualClock::new(Utc.with_ymd_and_hms(2026, 4, 6, 0, 14, 32).unwrap()))
}

fn engine_over(store: Store) -> (Arc<Engine>, Arc<ManualClock>) {
    let c = clock();
    (Arc::new(Engine::new(Arc::new(store), Some(MasterKey::generate()), c.clone())), c)
}

fn provisioned(fx: &ScenarioFixture) -> (Arc<Engine>, WorkspaceId) {
    let (e, _) = engine_over(Store::in_memory());
    let ws = e.provision(fx).unwrap();
    (e, ws)
}

fn scanned_acme() -> (Arc<Engine>, WorkspaceId) {
    let (e, ws) = provisioned(&builder::acme_financial());
    e.scan_now(&ws, Trigger::Manual).unwrap();
    (e, ws)
}

fn fixture_path(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

// -------------------------------------------------------------- criteria

struct Row {
    integration: ProviderKind,
    status: AssertionStatus,
    counts: (u32, u32, u32),
    tags: &'static [&'static str],
}

/// Reference per-integration results for the Acme run.
const REFERENCE: [Row; 8] = [
    Row { integration: ProviderKind::AwsIam, status: AssertionStatus::PartialPass, counts: (0, 2, 1), tags: &["SOC2 CC6.1", "SOC2 CC6.2"] },
    Row { integration: ProviderKind::AwsS3, status: AssertionStatus::Fail, counts: (2, 1, 0), tags: &["SOC2 CC6.7", "EUAIAct Art.10"] },
    Row { integration: ProviderKind::GitHub, status: AssertionStatus::Fail, counts: (1, 0, 1), tags: &["SOC2 CC8.1", "ISO27001 A.14"] },
    Row { integration: ProviderKind::Okta, status: AssertionStatus::Fail, counts: (1, 2, 0), tags: &["SOC2 CC6.1", "HIPAA §164.312"] },
    Row { integration: ProviderKind::Stripe, status: AssertionStatus::Pass, counts: (0, 0, 0), tags: &[] },
    Row { integration: ProviderKind::Vercel, status: AssertionStatus::Pass, counts: (0, 0, 0), tags: &[] },
    Row { integration: ProviderKind::TraceStore, status: AssertionStatus::Fail, counts: (1, 1, 1), tags: &["ISO42001 §9.1", "EUAIAct Art.14"] },
    Row { integration: ProviderKind::ModelInventory, status: AssertionStatus::Warn, counts: (0, 1, 1), tags: &["ISO42001 §6.1"] },
];

/// Tags emitted beyond the reference, from the catalog's wider mapping.
const EXTRA_TAGS: &[(ProviderKind, &str)] = &[(ProviderKind::Okta, "HIPAA §164.308")];

fn golden_run() -> Check {
    let t = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_trustos"))
        .env("RUST_LOG", "off")
        .args(["--at", "2026-04-06T00:14:32Z", "run-scenario"])
        .arg(fixture_path("acme_financial.json"))
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    ensure!(out.status.success(), "run-scenario exited {:?}", out.status.code());
    ensure!(elapsed < Duration::from_secs(10), "run-scenario took {elapsed:?}");
    let stdout = String::from_utf8_lossy(&out.stdout);
    let line = stdout.lines().last().unwrap_or_default();
    ensure!(
        line == "Posture 61/100 (Partially Compliant) — 4 Critical, 7 High, 4 Medium",
        "posture line was `{line}`"
    );

    let (e, ws) = provisioned(&builder::acme_financial());
    let (results, summary) = e.scan_now(&ws, Trigger::Manual).map_err(|e| e.to_string())?;
    ensure!(results.len() == 8, "{} assertions", results.len());
    let mut mismatches = Vec::new();
    for row in &REFERENCE {
        let Some(a) = results
            .iter()
            .filter_map(|r| r.as_ref().ok())
            .map(|x| &x.assertion)
            .find(|a| a.integration == row.integration)
        else {
            mismatches.push(format!("{}: no assertion", row.integration.display_name()));
            continue;
        };
        let c = a.counts();
        let got = (c.critical, c.high, c.medium);
        if a.status != row.status || got != row.counts {
            mismatches.push(format!(
                "{}: got {} {}/{}/{}, reference {} {}/{}/{}",
                row.integration.display_name(),
                a.status.as_str(),
                got.0,
                got.1,
                got.2,
                row.status.as_str(),
                row.counts.0,
                row.counts.1,
                row.counts.2
            ));
        }
        let tags: BTreeSet<String> = a
            .findings
            .iter()
            .flat_map(|f| f.framework_refs.iter().map(|r| r.to_string()))
            .filter(|t| !EXTRA_TAGS.contains(&(row.integration, t.as_str())))
            .collect();
        let want: BTreeSet<String> = row.tags.iter().map(|t| t.to_string()).collect();
        // A row whose status differs carries different findings; its tags
        // are covered by the status mismatch above.
        if tags != want && a.status == row.status {
            mismatches.push(format!("{}: tags {tags:?}, reference {want:?}", row.integration.display_name()));
        }
    }
    let snap = summary.snapshot.ok_or("no posture snapshot")?;
    let totals = (snap.counts.critical, snap.counts.high, snap.counts.medium);
    if (snap.score, snap.classification, totals) != (61, Classification::PartiallyCompliant, (4, 7, 4)) {
        mismatches.push(format!("posture {}", PostureLine::from(&snap)));
    }
    ensure!(mismatches.is_empty(), "{}", mismatches.join("; "));
    Ok(format!("8 rows, {line}, {elapsed:.2?}"))
}

fn projection() -> Check {
    let (e, ws) = provisioned(&builder::acme_financial());
    let (_, summary) = e.scan_now(&ws, Trigger::Manual).map_err(|e| e.to_string())?;
    let snap = summary.snapshot.ok_or("no posture snapshot")?;
    let now = snap.score;
    ensure!(snap.projected_score == 84, "snapshot projects {}", snap.projected_score);
    let after = project_posture(e.store(), e.posture_config(), &ws, Assumption::RemediateCriticals)
        .map_err(|e| e.to_string())?;
    ensure!(now == 61 && after == 84, "current {now}, projected {after}");
    Ok(format!("{now} -> {after} (Δ +{})", after - now))
}

fn shadow_discovery() -> Check {
    let (e, ws) = provisioned(&builder::acme_financial());
    let first = discovery_cycle(&e, &ws, ObservationWindow::FullHistory).map_err(|e| e.to_string())?;
    ensure!(first.new_system_ids.len() == 1, "first cycle registered {}", first.new_system_ids.len());
    let sys: AiSystem = e.store().get(&ws, &first.new_system_ids[0]).map_err(|e| e.to_string())?;
    ensure!(sys.name == "acme-custom-classifier-v1", "registered `{}`", sys.name);
    ensure!(sys.discovery_source == DiscoverySource::ObservabilityAutoDiscovered, "source {:?}", sys.discovery_source);
    ensure!(sys.review_status == ReviewStatus::PendingReview, "status {:?}", sys.review_status);
    let open: Vec<ActionItem> = e
        .store()
        .scoped_query(&ws, |i: &ActionItem| i.state == ActionState::Open)
        .map_err(|e| e.to_string())?;
    ensure!(open.len() == 1, "{} open items", open.len());
    let second = discovery_cycle(&e, &ws, ObservationWindow::FullHistory).map_err(|e| e.to_string())?;
    ensure!(second.new_system_ids.is_empty(), "second cycle registered {}", second.new_system_ids.len());
    Ok("1 system (acme-custom-classifier-v1, pending review), second cycle 0".into())
}

fn pii_heuristics() -> Check {
    let traces = builder::acme_financial().providers.traces.ok_or("no traces")?;
    let report = run_pii_heuristics(&traces);
    let got = report.counts.as_tuple();
    ensure!(got == (43, 7, 19, 112), "counts {got:?}");
    ensure!(
        report.unpinned_model_refs.iter().any(|m| m == "gpt-4o-latest"),
        "unpinned {:?}",
        report.unpinned_model_refs
    );
    Ok(format!("{got:?}, unpinned {:?}", report.unpinned_model_refs))
}

fn tamper_evidence() -> Check {
    let (e, ws) = scanned_acme();
    let csv = export_auditor_bundle(e.store(), e.catalog(), &ws, Role::Auditor).map_err(|e| e.to_string())?;
    let clean = verify_bundle(&csv, ACME).map_err(|e| e.to_string())?;
    ensure!(clean.rows.len() == 8 && clean.is_clean(), "clean export does not verify");

    let edited = csv.replacen("PARTIAL_PASS", "PASS", 1);
    let r = verify_bundle(&edited, ACME).map_err(|e| e.to_string())?;
    let flagged: Vec<_> = r.tampered().iter().map(|c| c.assertion_id.clone()).collect();
    ensure!(flagged == ["ea_7f3a91c"], "status edit flagged {flagged:?}");

    let rows: Vec<Vec<String>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(", ").map(String::from).collect())
        .collect();
    let header = csv.lines().next().unwrap().to_string();
    let statuses = ["PASS", "FAIL", "WARN", "PARTIAL_PASS", "UNTESTED"];
    let strategy = (
        0usize..rows.len(),
        any::<bool>(),
        prop_oneof![
            proptest::sample::select(statuses.to_vec()).prop_map(String::from),
            "[A-Za-z0-9_]{1,12}",
        ],
    );
    let cases = AtomicUsize::new(0);
    let detected = AtomicUsize::new(0);
    let mut runner = TestRunner::new(Config {
        cases: 1_000,
        failure_persistence: None,
        ..Config::default()
    });
    let result = runner.run(&strategy, |(row, id_cell, replacement)| {
        cases.fetch_add(1, Ordering::Relaxed);
        let mut rows = rows.clone();
        let col = if id_cell { 0 } else { 3 };
        let mut new = replacement;
        if new == rows[row][col] {
            new.push('X');
        }
        let target = rows[row][0].clone();
        rows[row][col] = new;
        let mut text = header.clone() + "\n";
        for r in &rows {
            text.push_str(&r.join(", "));
            text.push('\n');
        }
        let report = verify_bundle(&text, ACME).unwrap();
        let tampered: Vec<_> = report.rows.iter().filter(|r| r.verdict == Verdict::Tampered).collect();
        prop_assert_eq!(tampered.len(), 1);
        prop_assert_eq!(&tampered[0].row, &(row + 1));
        prop_assert!(id_cell || tampered[0].assertion_id == target);
        detected.fetch_add(1, Ordering::Relaxed);
        Ok(())
    });
    result.map_err(|e| format!("undetected mutation: {e}"))?;
    let (n, d) = (cases.into_inner(), detected.into_inner());
    ensure!(n == 1_000 && d == 1_000, "{d} of {n} detected");
    Ok(format!("{d}/{n} random id/status mutations detected"))
}

fn fan_out() -> Check {
    let (e, ws) = provisioned(&builder::acme_financial());
    let active = e.store().workspace(&ws).map_err(|e| e.to_string())?.active_frameworks;
    let (results, _) = e.scan_now(&ws, Trigger::Manual).map_err(|e| e.to_string())?;
    let s3 = results
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .find(|x| x.assertion.integration == ProviderKind::AwsS3)
        .ok_or("no S3 execution")?;
    let touched: BTreeSet<(Framework, String)> =
        s3.coverage.iter().map(|d| (d.framework, d.clause.clone())).collect();
    ensure!(touched.contains(&(Framework::Soc2, "CC6.7".into())), "S3 did not touch SOC2 CC6.7: {touched:?}");
    ensure!(touched.contains(&(Framework::EuAiAct, "Art.10".into())), "S3 did not touch EUAIAct Art.10: {touched:?}");
    ensure!(s3.action_items.len() == 2, "S3 opened {} items", s3.action_items.len());
    let runs: Vec<ProbeRun> = e.store().all(&ws).map_err(|e| e.to_string())?;
    ensure!(active.len() == 5, "{} active frameworks", active.len());
    ensure!(runs.len() == 8, "{} probe executions", runs.len());
    Ok(format!("S3 -> SOC2 CC6.7 + EUAIAct Art.10, 2 items; {} frameworks, 8 probe runs", active.len()))
}

fn isolation_population(store: &Store, w: [&WorkspaceId; 2], specs: &[(bool, u8, bool)]) {
    let at = Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap();
    for (i, (second, kind, flag)) in specs.iter().enumerate() {
        let ws = w[*second as usize];
        // Ids repeat across workspaces on purpose.
        let id = format!("e{}", i / 2);
        let r = match kind % 3 {
            0 => store.put(AiSystem {
                system_id: id.clone(),
                workspace_id: ws.clone(),
                name: format!("{ws}-{id}"),
                model_type: ModelType::Foundation,
                deployment_env: "prod".into(),
                risk_tier: RiskTier::Minimal,
                owner: None,
                discovery_source: DiscoverySource::Declared,
                review_status: if *flag { ReviewStatus::PendingReview } else { ReviewStatus::Active },
                linked_controls: BTreeSet::new(),
                incident_history: Vec::new(),
            }),
            1 => store.insert(DataFlowRecord {
                flow_id: id.clone(),
                workspace_id: ws.clone(),
                source_system: "crm".into(),
                processor: "llm".into(),
                destination: "warehouse".into(),
                pii_class: "contact".into(),
                lawful_basis: "contract".into(),
                jurisdiction: "AU".into(),
                transfer_mechanism: "none".into(),
            }),
            _ => store.insert(ActionItem {
                action_item_id: id.clone(),
                workspace_id: ws.clone(),
                source: ActionSource::Assertion("ea_0000000".into()),
                control_id: "ctl_iam_access".into(),
                requirement_id: "req_soc2_cc6_1".into(),
                owner: None,
                severity: Severity::High,
                remediation_description: "fix".into(),
                recheck_probe_kind: ProbeKind::IamAudit,
                recheck_connection_id: "conn".into(),
                state: if *flag { ActionState::Open } else { ActionState::Closed },
                opened_at: at,
                closed_at: None,
                closed_by: None,
            }),
        };
        match r {
            Ok(()) | Err(StoreError::Duplicate { .. }) => {}
            Err(e) => panic!("unexpected store error: {e}"),
        }
    }
}

fn tenant_isolation() -> Check {
    let cases = AtomicUsize::new(0);
    let mut runner = TestRunner::new(Config {
        cases: 10_000,
        failure_persistence: None,
        ..Config::default()
    });
    let strategy = prop::collection::vec((any::<bool>(), 0u8..3, any::<bool>()), 0..24);
    runner
        .run(&strategy, |specs| {
            cases.fetch_add(1, Ordering::Relaxed);
            let store = Store::in_memory();
            let at = Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap();
            for id in ["ws_one", "ws_two"] {
                store
                    .create_workspace(Workspace {
                        workspace_id: WorkspaceId::new(id),
                        name: id.into(),
                        active_frameworks: BTreeSet::new(),
                        cohort_key: None,
                        created_at: at,
                    })
                    .unwrap();
            }
            let w1 = WorkspaceId::new("ws_one");
            let w2 = WorkspaceId::new("ws_two");
            isolation_population(&store, [&w1, &w2], &specs);
            for me in [&w1, &w2] {
                let s: Vec<AiSystem> = store.scoped_query(me, |_: &AiSystem| true).unwrap();
                prop_assert!(s.iter().all(|x| &x.workspace_id == me && x.name.starts_with(me.as_str())));
                let f: Vec<DataFlowRecord> = store.scoped_query(me, |_: &DataFlowRecord| true).unwrap();
                prop_assert!(f.iter().all(|x| &x.workspace_id == me));
                let i: Vec<ActionItem> = store.scoped_query(me, |_: &ActionItem| true).unwrap();
                prop_assert!(i.iter().all(|x| &x.workspace_id == me));
            }
            Ok(())
        })
        .map_err(|e| format!("isolation violated: {e}"))?;
    let n = cases.into_inner();
    ensure!(n == 10_000, "only {n} cases ran");
    Ok(format!("{n} generated populations, 0 violations"))
}

fn credential_ephemerality() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let journal = dir.path().join("ledger.jsonl");
    let (e, _) = engine_over(Store::open(&journal).map_err(|e| e.to_string())?);
    let fx = builder::acme_financial();
    let tokens: BTreeMap<ProviderKind, Vec<u8>> = fx
        .providers
        .kinds()
        .into_iter()
        .map(|k| (k, CANARY.as_bytes().to_vec()))
        .collect();
    let ws = e.provision_with_tokens(&fx, &tokens).map_err(|e| e.to_string())?;
    let (results, _) = e.scan_now(&ws, Trigger::Manual).map_err(|e| e.to_string())?;
    ensure!(results.iter().all(|r| r.is_ok()), "a probe failed to authenticate with the canary");
    discovery_cycle(&e, &ws, ObservationWindow::FullHistory).map_err(|e| e.to_string())?;

    let texts = [
        ("store", e.store().dump().to_string()),
        ("journal", std::fs::read_to_string(&journal).map_err(|e| e.to_string())?),
        ("logs", captured_logs()),
    ];
    let mut hits = 0;
    for (name, text) in &texts {
        for needle in [CANARY.to_string(), hex(CANARY)] {
            let n = text.matches(needle.as_str()).count();
            if n > 0 {
                hits += n;
                eprintln!("canary found in {name}");
            }
        }
    }
    ensure!(hits == 0, "{hits} canary occurrences");

    let events = e.store().events(&ws).map_err(|e| e.to_string())?;
    let decrypted = events.iter().filter(|v| v.verb == "credential.decrypted").count();
    let zeroized = events.iter().filter(|v| v.verb == "credential.zeroized").count();
    ensure!(decrypted >= 8 && decrypted == zeroized, "{decrypted} decryptions, {zeroized} verified wipes");

    let mut buf = CANARY.as_bytes().to_vec();
    e.vault()
        .vault_store(&ws, ProviderKind::Stripe, &mut buf)
        .map_err(|e| e.to_string())?;
    ensure!(buf.iter().all(|b| *b == 0), "caller buffer not wiped");
    Ok(format!("0 occurrences in store, journal, logs; {zeroized}/{decrypted} secrets wiped"))
}

fn zero_ingress() -> Check {
    let (e, ws) = scanned_acme();
    discovery_cycle(&e, &ws, ObservationWindow::FullHistory).map_err(|e| e.to_string())?;
    let planted = e
        .fleet(&ws)
        .map_err(|e| e.to_string())?
        .snapshot()
        .providers
        .traces
        .iter()
        .flatten()
        .any(|t| t.logged_text.contains(TRACE_SENTINEL));
    ensure!(planted, "sentinel not planted in the fixture");

    let mut texts = Vec::new();
    for doc_type in DocType::ALL {
        let ev = build_evidence_string(e.store(), e.catalog(), e.posture_config(), &ws, doc_type)
            .map_err(|e| e.to_string())?;
        let request = DocumentRequest {
            workspace_id: ws.clone(),
            doc_type,
            company_name: "Acme Financial Services".into(),
        };
        texts.push(("prompt", build_prompt(&request, &ev)));
        let doc = generate_document(e.store(), e.catalog(), e.posture_config(), &TemplateGenerator, &ws, doc_type, e.now())
            .map_err(|e| e.to_string())?;
        texts.push(("document", doc.content));
    }
    texts.push(("ledger", e.store().dump().to_string()));
    texts.push((
        "export",
        export_auditor_bundle(e.store(), e.catalog(), &ws, Role::Auditor).map_err(|e| e.to_string())?,
    ));
    texts.push(("logs", captured_logs()));
    let leaks: Vec<&str> = texts
        .iter()
        .filter(|(_, t)| t.contains(TRACE_SENTINEL))
        .map(|(n, _)| *n)
        .collect();
    ensure!(leaks.is_empty(), "sentinel found in {leaks:?}");
    Ok(format!("0 occurrences across {} texts", texts.len()))
}

fn drift() -> Check {
    let (e, ws) = scanned_acme();
    let mut broken = builder::acme_financial();
    broken.providers.stripe.as_mut().ok_or("no stripe")?.webhook_signing = false;
    e.fleet(&ws).map_err(|e| e.to_string())?.replace_fixture(broken);
    let (_, s) = e.scan_now(&ws, Trigger::Scheduled).map_err(|e| e.to_string())?;
    ensure!(s.drift.len() == 1, "PASS->FAIL edit emitted {}", s.drift.len());

    let (e2, ws2) = scanned_acme();
    let (_, s2) = e2.scan_now(&ws2, Trigger::Scheduled).map_err(|e| e.to_string())?;
    ensure!(s2.drift.is_empty(), "identical scans emitted {}", s2.drift.len());
    Ok("1 event on PASS->FAIL, 0 on identical scans".into())
}

fn async_ack() -> Check {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(4)
        .enable_all()
        .build()
        .map_err(|e| e.to_string())?;
    rt.block_on(async {
        let mut fx = builder::acme_financial();
        fx.simulated_latency_ms = fx.providers.kinds().into_iter().map(|k| (k, 2_100)).collect();
        let (e, _) = provisioned(&fx);
        let tokens = tokens_for_fixture(&fx);
        let admin = tokens.iter().find(|t| t.role == Role::Administrator).unwrap().token.clone();
        let queue = ProbeQueue::start(e.clone(), 4);
        let app = router(AppState {
            queue: queue.clone(),
            tokens: Arc::new(TokenTable::new(tokens).unwrap()),
            generator: Arc::new(TemplateGenerator),
            static_dir: None,
        });
        let req = Request::post("/scans")
            .header("authorization", format!("Bearer {admin}"))
            .body(Body::empty())
            .unwrap();
        let t = Instant::now();
        let resp = app.oneshot(req).await.map_err(|e| e.to_string())?;
        let ack = t.elapsed();
        ensure!(resp.status() == StatusCode::ACCEPTED, "status {}", resp.status());
        let body = resp.into_body().collect().await.map_err(|e| e.to_string())?.to_bytes();
        let v: serde_json::Value = serde_json::from_slice(&body).map_err(|e| e.to_string())?;
        let ids: Vec<String> = serde_json::from_value(v["job_ids"].clone()).map_err(|e| e.to_string())?;
        ensure!(ids.len() == 8, "{} job ids", ids.len());
        ensure!(ack < Duration::from_secs(2), "ack took {ack:?}");
        let pending = ids.iter().filter(|id| !queue.job(id).unwrap().state.is_terminal()).count();
        let done = queue.wait_all(&ids, Duration::from_secs(60)).await.map_err(|e| e.to_string())?;
        let total = t.elapsed();
        ensure!(
            done.iter().all(|r| matches!(r.state, JobState::Completed { .. })),
            "not every job completed"
        );
        ensure!(total >= Duration::from_millis(2_100), "jobs finished in {total:?}");
        Ok(format!("ack {ack:.2?} with {pending}/8 jobs pending; all done at {total:.2?}"))
    })
}

fn synthesis_contract() -> Check {
    let (e, ws) = scanned_acme();
    let doc = generate_document(
        e.store(),
        e.catalog(),
        e.posture_config(),
        &TemplateGenerator,
        &ws,
        DocType::ExecutiveTrustReport,
        e.now(),
    )
    .map_err(|e| e.to_string())?;
    let section = doc
        .content
        .split("## Top risk areas")
        .nth(1)
        .and_then(|s| s.split("\n## ").next())
        .ok_or("no top risk section")?;
    let first = section.lines().find(|l| l.starts_with("1. ")).unwrap_or_default();
    let second = section.lines().find(|l| l.starts_with("2. ")).unwrap_or_default();
    ensure!(first.contains("AWS S3") && first.contains("acme-dev-scratch"), "first risk `{first}`");
    ensure!(second.contains("Okta") && second.contains("MFA"), "second risk `{second}`");

    let ev = build_evidence_string(e.store(), e.catalog(), e.posture_config(), &ws, DocType::Soc2SystemDescription)
        .map_err(|e| e.to_string())?;
    let latest = e.store().latest_assertions(&ws).map_err(|e| e.to_string())?;
    let mut want: Vec<String> = latest
        .iter()
        .filter(|a| a.status == AssertionStatus::Pass)
        .map(|a| evidence_claim(e.catalog(), a))
        .collect();
    let mut got = ev.lines.clone();
    want.sort();
    got.sort();
    ensure!(want.len() == 2 && got == want, "evidence {got:?}, expected {want:?}");

    let request = DocumentRequest {
        workspace_id: ws.clone(),
        doc_type: DocType::Soc2SystemDescription,
        company_name: "Acme Financial Services".into(),
    };
    let prompt = build_prompt(&request, &ev);
    let head: Vec<&str> = prompt.lines().take(3).collect();
    ensure!(
        head == [
            "Act as an elite compliance auditor.",
            "Write a SOC 2 system description for Acme Financial Services.",
            "Base it only on the following verified evidence:",
        ],
        "prompt starts {head:?}"
    );
    ensure!(ev.lines.iter().all(|l| prompt.contains(l.as_str())), "prompt is missing evidence");
    Ok("top risks S3 bucket, Okta MFA; 2 PASS claims; prompt template intact".into())
}

fn benchmarking() -> Check {
    const COHORT: &str = "series-a-fintech-au";
    let config = PostureConfig::default();
    let seed = |store: &Store, id: &str, score: u8| -> WorkspaceId {
        let ws = WorkspaceId::new(id);
        let at = Utc.with_ymd_and_hms(2026, 4, 1, 0, 0, 0).unwrap();
        store
            .create_workspace(Workspace {
                workspace_id: ws.clone(),
                name: id.into(),
                active_frameworks: BTreeSet::from([Framework::Soc2]),
                cohort_key: Some(COHORT.into()),
                created_at: at,
            })
            .unwrap();
        store
            .insert(PostureSnapshot {
                snapshot_id: new_id("ps"),
                workspace_id: ws.clone(),
                at,
                score,
                classification: config.classify(score),
                counts: SeverityCounts::default(),
                projected_score: score,
                integrations_scanned: 1,
                scoring_model: config.scoring_model.clone(),
            })
            .unwrap();
        ws
    };

    let small = Store::in_memory();
    let ids: Vec<WorkspaceId> = [61u8, 70, 80]
        .iter()
        .enumerate()
        .map(|(i, s)| seed(&small, &format!("ws_s{i}"), *s))
        .collect();
    match benchmark(&small, &config, &ids[0], COHORT).map_err(|e| e.to_string())? {
        BenchmarkResult::Refused { n: 3, .. } => {}
        other => return Err(format!("n=3 gave {other:?}")),
    }

    // Brute-force rank: count of cohort scores strictly below, over n.
    let oracle = |scores: &[u8], mine: u8| -> u8 {
        (scores.iter().filter(|s| **s < mine).count() * 100 / scores.len()) as u8
    };
    let scores = [40u8, 55, 61, 70, 80, 90];
    let store = Store::in_memory();
    let ids: Vec<WorkspaceId> = scores
        .iter()
        .enumerate()
        .map(|(i, s)| seed(&store, &format!("ws_b{i}"), *s))
        .collect();
    let mut ranks = Vec::new();
    for (ws, score) in ids.iter().zip(scores) {
        match benchmark(&store, &config, ws, COHORT).map_err(|e| e.to_string())? {
            BenchmarkResult::Ranked { percentile, .. } => {
                ensure!(percentile == oracle(&scores, score), "score {score}: percentile {percentile}");
                ranks.push(percentile);
            }
            other => return Err(format!("n=6 gave {other:?}")),
        }
    }
    Ok(format!("n=3 refused; n=6 percentiles {ranks:?} match the oracle"))
}

// ------------------------------------------------------------------ main

fn main() -> ExitCode {
    let cap = LOGS.get_or_init(Capture::default).clone();
    let _ = tracing_subscriber::fmt()
        .with_max_level(tracing::Level::TRACE)
        .with_ansi(false)
        .with_writer(move || cap.clone())
        .try_init();
    // Failing checks report through their result lines, not the panic hook.
    std::panic::set_hook(Box::new(|_| {}));

    let criteria: [Criterion; 13] = [
        (GOLDEN, golden_run),
        ("posture projection", projection),
        ("shadow discovery", shadow_discovery),
        ("pii heuristics", pii_heuristics),
        ("tamper evidence", tamper_evidence),
        ("multi-framework fan-out", fan_out),
        ("tenant isolation", tenant_isolation),
        ("credential ephemerality", credential_ephemerality),
        ("zero ingress", zero_ingress),
        ("drift", drift),
        ("async acknowledgement", async_ack),
        ("synthesis contract", synthesis_contract),
        ("benchmarking threshold", benchmarking),
    ];

    let mut unexpected = 0;
    let mut failed = 0;
    let mut known_failed = 0;
    println!("acceptance: {} criteria", criteria.len());
    for (name, f) in criteria.iter().copied() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let known = KNOWN_CONFLICTS.contains(&name);
        let elapsed = t.elapsed();
        match outcome {
            Ok(detail) => {
                println!("PASS  {name:<26} {detail} [{elapsed:.2?}]");
                if known {
                    println!("      {name} is listed as a known conflict but passed; update the list");
                    unexpected += 1;
                }
            }
            Err(why) => {
                failed += 1;
                let tag = if known { " (known conflict)" } else { "" };
                println!("FAIL  {name:<26} {why}{tag} [{elapsed:.2?}]");
                if known {
                    known_failed += 1;
                } else {
                    unexpected += 1;
                }
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed ({known_failed} known conflict)", criteria.len() - failed);
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
