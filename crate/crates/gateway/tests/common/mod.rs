#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use chrono::{TimeZone, Utc};
use http_body_util::BodyExt;
use tower::ServiceExt;
use trustos_core::clock::ManualClock;
use trustos_core::engine::Engine;
use trustos_core::model::{Role, WorkspaceId};
use trustos_core::probe::queue::ProbeQueue;
use trustos_core::sim::ScenarioFixture;
use trustos_core::store::Store;
use trustos_core::synthesis::{DocumentGenerator, TemplateGenerator};
use trustos_core::vault::MasterKey;
use trustos_gateway::auth::{tokens_for_fixture, ApiToken, TokenTable};
use trustos_gateway::http::{router, AppState};

pub struct Harness {
    pub app: Router,
    pub engine: Arc<Engine>,
    pub clock: Arc<ManualClock>,
    pub queue: ProbeQueue,
    pub tokens: Vec<ApiToken>,
}

pub struct Reply {
    pub status: StatusCode,
    pub content_type: Option<String>,
    pub body: String,
}

impl Reply {
    pub fn json(&self) -> serde_json::Value {
        serde_json::from_str(&self.body).unwrap_or_else(|e| panic!("not JSON ({e}): {}", self.body))
    }
}

/// Builds an app over the given fixtures. Must run inside a tokio runtime.
pub fn harness(fixtures: &[ScenarioFixture]) -> Harness {
    harness_with(fixtures, Arc::new(TemplateGenerator), None)
}

pub fn harness_with(
    fixtures: &[ScenarioFixture],
    generator: Arc<dyn DocumentGenerator>,
    static_dir: Option<PathBuf>,
) -> Harness {
    let clock = Arc::new(ManualClock::new(Utc.with_ymd_and_hms(2026, 4, 6, 0, 14, 32).unwrap()));
    let engine = Arc::new(Engine::new(
        Arc::new(Store::in_memory()),
        Some(MasterKey::generate()),
        clock.clone(),
    ));
    let mut tokens = Vec::new();
    for fx in fixtures {
        engine.provision(fx).unwrap();
        tokens.extend(tokens_for_fixture(fx));
    }
    let queue = ProbeQueue::start(engine.clone(), 4);
    let state = AppState {
        queue: queue.clone(),
        tokens: Arc::new(TokenTable::new(tokens.clone()).unwrap()),
        generator,
        static_dir,
    };
    Harness {
        app: router(state),
        engine,
        clock,
        queue,
        tokens,
    }
}

impl Harness {
    pub fn token(&self, ws: &str, role: Role) -> String {
        self.tokens
            .iter()
            .find(|t| t.workspace_id.as_str() == ws && t.role == role)
            .unwrap_or_else(|| panic!("no {role:?} token for {ws}"))
            .token
            .clone()
    }

    pub async fn call(&self, method: Method, uri: &str, token: Option<&str>, body: Option<&str>) -> Reply {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        if body.is_some() {
            req = req.header("content-type", "application/json");
        }
        let req = req.body(Body::from(body.unwrap_or("").to_string())).unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let content_type = resp
            .headers()
            .get("content-type")
            .map(|v| v.to_str().unwrap().to_string());
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        Reply {
            status,
            content_type,
            body: String::from_utf8(bytes.to_vec()).unwrap(),
        }
    }

    pub async fn get(&self, uri: &str, token: &str) -> Reply {
        self.call(Method::GET, uri, Some(token), None).await
    }

    pub async fn post(&self, uri: &str, token: &str, body: Option<&str>) -> Reply {
        self.call(Method::POST, uri, Some(token), body).await
    }

    /// Full scan through the API, waiting for every job and the batch.
    pub async fn scan(&self, ws: &str) -> Vec<String> {
        let admin = self.token(ws, Role::Administrator);
        let r = self.post("/scans", &admin, None).await;
        assert_eq!(r.status, StatusCode::ACCEPTED, "{}", r.body);
        let ids: Vec<String> = serde_json::from_value(r.json()["job_ids"].clone()).unwrap();
        self.queue.wait_all(&ids, Duration::from_secs(30)).await.unwrap();
        ids
    }

    pub fn ws(id: &str) -> WorkspaceId {
        WorkspaceId::new(id)
    }
}
