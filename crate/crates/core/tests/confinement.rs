mod common;

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::{Arc, Mutex};

use trustos_core::discovery::{discovery_cycle, ObservationWindow};
use trustos_core::engine::Engine;
use trustos_core::model::*;
use trustos_core::probe::Trigger;
use trustos_core::sim::builder::{self, TRACE_SENTINEL};
use trustos_core::sim::fleet::default_token;
use trustos_core::sim::QueryKind;
use trustos_core::store::Store;
use trustos_core::synthesis::{
    build_evidence_string, build_prompt, generate_document, DocType, DocumentRequest, TemplateGenerator,
};
use trustos_core::vault::MasterKey;

const CANARY: &str = "CANARY-SECRET-001";

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

impl Capture {
    fn text(&self) -> String {
        String::from_utf8_lossy(&self.0.lock().unwrap()).into_owned()
    }
}

fn with_captured_logs<T>(f: impl FnOnce() -> T) -> (T, String) {
    let cap = Capture::default();
    let writer = cap.clone();
    let subscriber = tracing_subscriber::fmt()
        .with_max_level(tracing::Level::TRACE)
        .with_ansi(false)
        .with_writer(move || writer.clone())
        .finish();
    let out = tracing::subscriber::with_default(subscriber, f);
    (out, cap.text())
}

fn canary_tokens(fixture: &trustos_core::sim::ScenarioFixture) -> BTreeMap<ProviderKind, Vec<u8>> {
    fixture
        .providers
        .kinds()
        .into_iter()
        .map(|k| (k, CANARY.as_bytes().to_vec()))
        .collect()
}

#[test]
fn canary_credential_never_persists_or_logs() {
    let dir = tempfile::tempdir().unwrap();
    let journal = dir.path().join("journal.jsonl");
    let fixture = builder::acme_financial();
    let (_, clock) = common::engine();
    let engine = Arc::new(Engine::new(
        Arc::new(Store::open(&journal).unwrap()),
        Some(MasterKey::generate()),
        clock,
    ));

    let ((results, ws), logs) = with_captured_logs(|| {
        let ws = engine.provision_with_tokens(&fixture, &canary_tokens(&fixture)).unwrap();
        let (results, _) = engine.scan_now(&ws, Trigger::Manual).unwrap();
        discovery_cycle(&engine, &ws, ObservationWindow::FullHistory).unwrap();
        (results, ws)
    });
    // The canary is the real credential: every probe authenticated with it.
    assert!(results.iter().all(|r| r.is_ok()));

    let hex_canary = hex::encode(CANARY);
    let dump = engine.store().dump().to_string();
    let journal_text = std::fs::read_to_string(&journal).unwrap();
    for (name, text) in [("store", &dump), ("journal", &journal_text), ("logs", &logs)] {
        assert!(!text.contains(CANARY), "canary found in {name}");
        assert!(!text.contains(&hex_canary), "hex canary found in {name}");
    }
    assert!(!logs.is_empty());

    // Every decryption is paired with a verified wipe.
    let events = engine.store().events(&ws).unwrap();
    let decrypted = events.iter().filter(|e| e.verb == "credential.decrypted").count();
    let zeroized = events.iter().filter(|e| e.verb == "credential.zeroized").count();
    assert!(decrypted >= 8);
    assert_eq!(decrypted, zeroized);
}

#[test]
fn wrong_credential_is_rejected_without_leaking() {
    let fixture = builder::acme_financial();
    let (engine, _) = common::engine();
    let mut tokens = canary_tokens(&fixture);
    tokens.insert(ProviderKind::Okta, b"SIM-TOKEN-NOT-THE-ONE".to_vec());
    let ws = engine.provision_with_tokens(&fixture, &tokens).unwrap();
    engine.fleet(&ws).unwrap().set_token(ProviderKind::Okta, CANARY.as_bytes());
    let (results, _) = engine.scan_now(&ws, Trigger::Manual).unwrap();
    let failed: Vec<_> = results.iter().filter(|r| r.is_err()).collect();
    assert_eq!(failed.len(), 1);
    let runs: Vec<ProbeRun> = engine.store().all(&ws).unwrap();
    assert_eq!(runs.iter().filter(|r| r.outcome == ProbeRunOutcome::Failed).count(), 1);
    assert!(!engine.store().dump().to_string().contains("SIM-TOKEN-NOT-THE-ONE"));
}

#[test]
fn trace_text_never_leaves_the_probe() {
    let (e, _c, ws) = common::provisioned(&builder::acme_financial());
    let ((), logs) = with_captured_logs(|| {
        e.scan_now(&ws, Trigger::Manual).unwrap();
        discovery_cycle(&e, &ws, ObservationWindow::FullHistory).unwrap();
    });
    let fleet = e.fleet(&ws).unwrap();
    let planted = fleet
        .snapshot()
        .providers
        .traces
        .iter()
        .flatten()
        .any(|t| t.logged_text.contains(TRACE_SENTINEL));
    assert!(planted, "fixture must carry the sentinel for this test to mean anything");

    let mut texts = vec![e.store().dump().to_string(), logs];
    for doc_type in DocType::ALL {
        let ev = build_evidence_string(e.store(), e.catalog(), e.posture_config(), &ws, doc_type).unwrap();
        let request = DocumentRequest {
            workspace_id: ws.clone(),
            doc_type,
            company_name: "Acme Financial Services".into(),
        };
        texts.push(build_prompt(&request, &ev));
        let doc = generate_document(
            e.store(),
            e.catalog(),
            e.posture_config(),
            &TemplateGenerator,
            &ws,
            doc_type,
            e.now(),
        )
        .unwrap();
        texts.push(doc.content);
    }
    // Every metadata document the fleet can hand the engine.
    let scenario = fleet.snapshot().scenario_id.clone();
    for q in [
        QueryKind::ListUsersMfa,
        QueryKind::GetPasswordPolicy,
        QueryKind::ListBuckets,
        QueryKind::GetBranchProtection,
        QueryKind::GetSignOnPolicy,
        QueryKind::GetWebhookConfig,
        QueryKind::GetProjectSettings,
        QueryKind::ListTraceMetadata,
        QueryKind::ListModels,
    ] {
        let token = default_token(q.provider(), &scenario);
        let doc = fleet.provider_query(q.provider(), token.as_bytes(), q).unwrap();
        texts.push(doc.to_string());
    }
    for t in &texts {
        assert!(!t.contains(TRACE_SENTINEL));
    }
}
