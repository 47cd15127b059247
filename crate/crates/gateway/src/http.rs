//! HTTP API over the engine services.
//!
//! Every route except the trust center and the static dashboard requires a
//! bearer token. The token fixes the caller's workspace and role; role
//! checks run before any entity lookup.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{FromRequestParts, Path, Query, State};
use axum::http::request::Parts;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;
use tower_http::trace::TraceLayer;
use trustos_core::discovery::{review_system, DiscoveryError};
use trustos_core::engine::{Engine, EngineError, PostureLine};
use trustos_core::intelligence::{compute_posture, IntelligenceError};
use trustos_core::mapping::{coverage_matrix, MappingError};
use trustos_core::model::*;
use trustos_core::probe::executor::Trigger;
use trustos_core::probe::queue::{JobRecord, ProbeQueue, QueueError};
use trustos_core::store::StoreError;
use trustos_core::synthesis::{executive_report, generate_document, DocType, DocumentGenerator, SynthesisError};

use crate::auth::{ApiToken, TokenTable};
use crate::export::{export_auditor_bundle, ExportError};
use crate::trust_center::trust_center;

pub const BIND_ADDR_ENV: &str = "TRUSTOS_BIND_ADDR";
pub const DISCOVERY_INTERVAL_ENV: &str = "TRUSTOS_DISCOVERY_INTERVAL";
pub const DEFAULT_BIND_ADDR: &str = "127.0.0.1:8080";

#[derive(Clone)]
pub struct AppState {
    pub queue: ProbeQueue,
    pub tokens: Arc<TokenTable>,
    pub generator: Arc<dyn DocumentGenerator>,
    pub static_dir: Option<PathBuf>,
}

impl AppState {
    fn engine(&self) -> &Arc<Engine> {
        self.queue.engine()
    }
}

/// JSON error body: `{"error": code, "message": text}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn unauthorized(message: &str) -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "unauthorized", message)
    }

    fn forbidden(role: Role) -> Self {
        Self::new(
            StatusCode::FORBIDDEN,
            "forbidden",
            format!("role {role:?} may not perform this action"),
        )
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn internal(message: impl Into<String>) -> Self {
        let message = message.into();
        tracing::error!(%message, "request failed");
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    message: &'a str,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.code,
            message: &self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::UnknownWorkspace(_) | StoreError::NotFound { .. } => Self::not_found(e.to_string()),
            other => Self::internal(other.to_string()),
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Forbidden(role) => Self::forbidden(role),
            EngineError::UnknownConnection(_) => Self::not_found(e.to_string()),
            EngineError::NoFleet(_) => Self::new(StatusCode::CONFLICT, "no_fleet", e.to_string()),
            EngineError::Store(s) => s.into(),
            EngineError::Mapping(m) => m.into(),
            EngineError::Intelligence(i) => i.into(),
            other => Self::internal(other.to_string()),
        }
    }
}

impl From<MappingError> for ApiError {
    fn from(e: MappingError) -> Self {
        match e {
            MappingError::Forbidden(role) => Self::forbidden(role),
            MappingError::AlreadyClosed(_) => Self::new(StatusCode::CONFLICT, "already_closed", e.to_string()),
            MappingError::Store(s) => s.into(),
            other => Self::internal(other.to_string()),
        }
    }
}

impl From<IntelligenceError> for ApiError {
    fn from(e: IntelligenceError) -> Self {
        match e {
            IntelligenceError::NoEvidence(_) => Self::new(StatusCode::CONFLICT, "no_evidence", e.to_string()),
            IntelligenceError::Store(s) => s.into(),
            other => Self::internal(other.to_string()),
        }
    }
}

impl From<QueueError> for ApiError {
    fn from(e: QueueError) -> Self {
        match e {
            QueueError::UnknownConnection(_) | QueueError::UnknownJob(_) => Self::not_found(e.to_string()),
            QueueError::Engine(inner) => inner.into(),
            other => Self::internal(other.to_string()),
        }
    }
}

impl From<DiscoveryError> for ApiError {
    fn from(e: DiscoveryError) -> Self {
        match e {
            DiscoveryError::Forbidden(role) => Self::forbidden(role),
            DiscoveryError::InvalidTier => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_tier", e.to_string()),
            DiscoveryError::NotPending(_) => Self::new(StatusCode::CONFLICT, "not_pending", e.to_string()),
            DiscoveryError::NoObservabilityConnection => {
                Self::new(StatusCode::CONFLICT, "no_observability_connection", e.to_string())
            }
            DiscoveryError::Store(s) => s.into(),
            DiscoveryError::Engine(inner) => inner.into(),
            DiscoveryError::Mapping(m) => m.into(),
            other => Self::internal(other.to_string()),
        }
    }
}

impl From<SynthesisError> for ApiError {
    fn from(e: SynthesisError) -> Self {
        match e {
            SynthesisError::NoEvidence(_) => Self::new(StatusCode::CONFLICT, "no_evidence", e.to_string()),
            SynthesisError::UnknownDocType(_) => Self::bad_request(e.to_string()),
            SynthesisError::GeneratorFailure(_) => Self::new(StatusCode::BAD_GATEWAY, "generator_failure", e.to_string()),
            SynthesisError::Store(s) => s.into(),
            SynthesisError::Intelligence(i) => i.into(),
        }
    }
}

impl From<ExportError> for ApiError {
    fn from(e: ExportError) -> Self {
        match e {
            ExportError::Forbidden(role) => Self::forbidden(role),
            ExportError::Store(s) => s.into(),
            other => Self::internal(other.to_string()),
        }
    }
}

/// Authenticated caller resolved from `Authorization: Bearer <token>`.
#[derive(Debug, Clone)]
pub struct Caller(pub ApiToken);

impl Caller {
    fn ws(&self) -> &WorkspaceId {
        &self.0.workspace_id
    }

    fn require_mutate(&self) -> Result<(), ApiError> {
        if self.0.role.can_mutate() {
            Ok(())
        } else {
            Err(ApiError::forbidden(self.0.role))
        }
    }
}

impl FromRequestParts<AppState> for Caller {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, Self::Rejection> {
        let value = parts
            .headers
            .get(header::AUTHORIZATION)
            .ok_or_else(|| ApiError::unauthorized("missing bearer token"))?
            .to_str()
            .map_err(|_| ApiError::unauthorized("malformed authorization header"))?;
        let token = value
            .strip_prefix("Bearer ")
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .ok_or_else(|| ApiError::unauthorized("missing bearer token"))?;
        state
            .tokens
            .resolve(token)
            .cloned()
            .map(Caller)
            .ok_or_else(|| ApiError::unauthorized("unknown token"))
    }
}

/// Parses an optional JSON body; an empty body yields the default.
fn optional_json<T: DeserializeOwned + Default>(body: &Bytes) -> Result<T, ApiError> {
    if body.iter().all(|b| b.is_ascii_whitespace()) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

fn required_json<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

pub fn router(state: AppState) -> Router {
    let mut app = Router::new()
        .route("/scans", post(post_scans))
        .route("/jobs/{id}", get(get_job))
        .route("/discovery", post(post_discovery))
        .route("/posture", get(get_posture))
        .route("/assertions", get(get_assertions))
        .route("/action-items", get(get_action_items))
        .route("/action-items/{id}/close", post(close_action_item))
        .route("/registry", get(get_registry))
        .route("/registry/{id}/review", post(review_registry_entry))
        .route("/coverage/{framework}", get(get_coverage))
        .route("/reports/executive", get(get_executive_report))
        .route("/documents", post(post_documents))
        .route("/trust-center/{workspace}", get(get_trust_center))
        .route("/export.csv", get(get_export));
    if let Some(dir) = &state.static_dir {
        app = app.nest_service("/app", ServeDir::new(dir).append_index_html_on_directories(true));
    }
    app.layer(TraceLayer::new_for_http()).with_state(state)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScanRequest {
    connection_ids: Option<Vec<String>>,
}

#[derive(Debug, Serialize)]
struct JobsAccepted {
    job_ids: Vec<String>,
}

async fn post_scans(State(st): State<AppState>, caller: Caller, body: Bytes) -> Result<Response, ApiError> {
    caller.require_mutate()?;
    let req: ScanRequest = optional_json(&body)?;
    let ids = match req.connection_ids {
        Some(ids) => st.queue.enqueue_scan(caller.ws(), &ids, Trigger::Manual)?,
        None => st.queue.enqueue_full_scan(caller.ws(), Trigger::Manual)?,
    };
    Ok((StatusCode::ACCEPTED, Json(JobsAccepted { job_ids: ids })).into_response())
}

async fn get_job(State(st): State<AppState>, caller: Caller, Path(id): Path<String>) -> Result<Json<JobRecord>, ApiError> {
    st.queue
        .job(&id)
        .filter(|r| &r.job.workspace_id == caller.ws())
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("unknown job `{id}`")))
}

#[derive(Debug, Serialize)]
struct JobAccepted {
    job_id: String,
}

async fn post_discovery(State(st): State<AppState>, caller: Caller) -> Result<Response, ApiError> {
    caller.require_mutate()?;
    let id = st
        .queue
        .enqueue_discovery(caller.ws(), Trigger::Manual)
        .map_err(|e| match e {
            QueueError::UnknownConnection(_) => DiscoveryError::NoObservabilityConnection.into(),
            other => ApiError::from(other),
        })?;
    Ok((StatusCode::ACCEPTED, Json(JobAccepted { job_id: id })).into_response())
}

#[derive(Debug, Serialize)]
pub struct PostureView {
    pub score: u8,
    pub classification: String,
    pub counts: SeverityCounts,
    pub projected_score: u8,
    pub integrations_scanned: u32,
    pub summary: String,
    pub at: chrono::DateTime<chrono::Utc>,
}

async fn get_posture(State(st): State<AppState>, caller: Caller) -> Result<Json<PostureView>, ApiError> {
    let e = st.engine();
    let snap = compute_posture(e.store(), e.posture_config(), caller.ws(), e.now())?;
    Ok(Json(PostureView {
        score: snap.score,
        classification: snap.classification.label().to_string(),
        counts: snap.counts,
        projected_score: snap.projected_score,
        integrations_scanned: snap.integrations_scanned,
        summary: PostureLine::from(&snap).to_string(),
        at: snap.at,
    }))
}

#[derive(Debug, Default, Deserialize)]
struct AssertionQuery {
    #[serde(default)]
    history: bool,
}

/// Latest assertion per (control, integration), or the whole ledger with
/// `?history=true`.
async fn get_assertions(
    State(st): State<AppState>,
    caller: Caller,
    Query(q): Query<AssertionQuery>,
) -> Result<Json<Vec<ControlAssertion>>, ApiError> {
    let store = st.engine().store();
    let mut rows = if q.history {
        store.scoped_query::<ControlAssertion>(caller.ws(), |_| true)?
    } else {
        store.latest_assertions(caller.ws())?
    };
    rows.sort_by(|a, b| a.assertion_id.cmp(&b.assertion_id));
    Ok(Json(rows))
}

#[derive(Debug, Default, Deserialize)]
struct ActionItemQuery {
    state: Option<String>,
}

async fn get_action_items(
    State(st): State<AppState>,
    caller: Caller,
    Query(q): Query<ActionItemQuery>,
) -> Result<Json<Vec<ActionItem>>, ApiError> {
    let want = match q.state.as_deref().map(str::to_ascii_lowercase).as_deref() {
        None | Some("all") => None,
        Some("open") => Some(ActionState::Open),
        Some("closed") => Some(ActionState::Closed),
        Some(other) => return Err(ApiError::bad_request(format!("unknown state filter `{other}`"))),
    };
    let mut items = st
        .engine()
        .store()
        .scoped_query::<ActionItem>(caller.ws(), |i| want.is_none_or(|s| i.state == s))?;
    items.sort_by(|a, b| (a.opened_at, &a.action_item_id).cmp(&(b.opened_at, &b.action_item_id)));
    Ok(Json(items))
}

#[derive(Debug, Serialize)]
struct CloseResponse {
    item: ActionItem,
    recheck_job_id: String,
}

async fn close_action_item(
    State(st): State<AppState>,
    caller: Caller,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    caller.require_mutate()?;
    let (item, job_id) = st
        .queue
        .close_action_item(caller.ws(), &id, caller.0.role, &caller.0.user_id)?;
    Ok((
        StatusCode::ACCEPTED,
        Json(CloseResponse {
            item,
            recheck_job_id: job_id,
        }),
    )
        .into_response())
}

#[derive(Debug, Serialize)]
struct RegistryResponse {
    active: Vec<AiSystem>,
    pending_review: Vec<AiSystem>,
}

async fn get_registry(State(st): State<AppState>, caller: Caller) -> Result<Json<RegistryResponse>, ApiError> {
    let mut systems: Vec<AiSystem> = st.engine().store().all(caller.ws())?;
    systems.sort_by(|a, b| a.name.cmp(&b.name));
    let (active, pending_review) = systems
        .into_iter()
        .partition(|s| s.review_status == ReviewStatus::Active);
    Ok(Json(RegistryResponse { active, pending_review }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReviewRequest {
    owner: String,
    risk_tier: RiskTier,
}

async fn review_registry_entry(
    State(st): State<AppState>,
    caller: Caller,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<AiSystem>, ApiError> {
    caller.require_mutate()?;
    let req: ReviewRequest = required_json(&body)?;
    if req.owner.trim().is_empty() {
        return Err(ApiError::bad_request("owner must be non-empty"));
    }
    let sys = review_system(
        st.engine(),
        caller.ws(),
        &id,
        caller.0.role,
        &caller.0.user_id,
        req.owner.trim(),
        req.risk_tier,
    )?;
    Ok(Json(sys))
}

#[derive(Debug, Serialize)]
struct CoverageResponse {
    framework: Framework,
    display_name: &'static str,
    catalog_version: String,
    met: Vec<String>,
    failed: Vec<String>,
    untested: Vec<String>,
    met_pct: f64,
}

async fn get_coverage(
    State(st): State<AppState>,
    caller: Caller,
    Path(framework): Path<String>,
) -> Result<Json<CoverageResponse>, ApiError> {
    let e = st.engine();
    let fw = Framework::parse(&framework).ok_or_else(|| ApiError::not_found(format!("unknown framework `{framework}`")))?;
    let mut matrix = coverage_matrix(e.store(), e.catalog(), caller.ws())?;
    let cov = matrix
        .frameworks
        .remove(&fw)
        .ok_or_else(|| ApiError::not_found(format!("framework `{}` is not active in this workspace", fw.display_name())))?;
    Ok(Json(CoverageResponse {
        framework: fw,
        display_name: fw.display_name(),
        catalog_version: matrix.catalog_version,
        met_pct: cov.met_pct(),
        met: cov.met,
        failed: cov.failed,
        untested: cov.untested,
    }))
}

#[derive(Debug, Default, Deserialize)]
struct ReportQuery {
    format: Option<String>,
}

async fn get_executive_report(
    State(st): State<AppState>,
    caller: Caller,
    Query(q): Query<ReportQuery>,
) -> Result<Response, ApiError> {
    let e = st.engine();
    let report = executive_report(e.store(), e.catalog(), e.posture_config(), caller.ws(), e.now())?;
    match q.format.as_deref() {
        None | Some("json") => Ok(Json(report).into_response()),
        Some("markdown") | Some("md") => Ok((
            [(header::CONTENT_TYPE, "text/markdown; charset=utf-8")],
            report.to_markdown(),
        )
            .into_response()),
        Some(other) => Err(ApiError::bad_request(format!("unknown format `{other}`"))),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocumentRequestBody {
    doc_type: String,
}

async fn post_documents(State(st): State<AppState>, caller: Caller, body: Bytes) -> Result<Response, ApiError> {
    caller.require_mutate()?;
    let req: DocumentRequestBody = required_json(&body)?;
    let doc_type = DocType::parse(&req.doc_type)?;
    let engine = st.engine().clone();
    let generator = st.generator.clone();
    let ws = caller.ws().clone();
    let doc = tokio::task::spawn_blocking(move || {
        generate_document(
            engine.store(),
            engine.catalog(),
            engine.posture_config(),
            generator.as_ref(),
            &ws,
            doc_type,
            engine.now(),
        )
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok((StatusCode::CREATED, Json(doc)).into_response())
}

async fn get_trust_center(State(st): State<AppState>, Path(workspace): Path<String>) -> Result<Response, ApiError> {
    let e = st.engine();
    let ws = WorkspaceId::new(&workspace);
    let summary = trust_center(e.store(), e.catalog(), e.posture_config(), &ws, e.now())?;
    Ok(Json(summary).into_response())
}

async fn get_export(State(st): State<AppState>, caller: Caller) -> Result<Response, ApiError> {
    if !caller.0.role.can_export() {
        return Err(ApiError::forbidden(caller.0.role));
    }
    let e = st.engine();
    let csv = export_auditor_bundle(e.store(), e.catalog(), caller.ws(), caller.0.role)?;
    let disposition = format!("attachment; filename=\"{}_evidence.csv\"", caller.ws());
    Ok((
        [
            (header::CONTENT_TYPE, "text/csv; charset=utf-8".to_string()),
            (header::CONTENT_DISPOSITION, disposition),
        ],
        csv,
    )
        .into_response())
}

/// `TRUSTOS_DISCOVERY_INTERVAL` in seconds; 0 or unset disables the timer.
pub fn discovery_interval_from_env() -> Result<Option<Duration>, String> {
    match std::env::var(DISCOVERY_INTERVAL_ENV) {
        Err(_) => Ok(None),
        Ok(v) => parse_interval(&v),
    }
}

pub fn parse_interval(v: &str) -> Result<Option<Duration>, String> {
    let secs: u64 = v
        .trim()
        .parse()
        .map_err(|_| format!("{DISCOVERY_INTERVAL_ENV} must be a whole number of seconds, got `{v}`"))?;
    Ok((secs > 0).then(|| Duration::from_secs(secs)))
}

/// Queues a discovery cycle for every attached workspace on each tick.
pub fn spawn_discovery_timer(queue: ProbeQueue, every: Duration) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        let mut ticker = tokio::time::interval(every);
        ticker.tick().await;
        loop {
            ticker.tick().await;
            for ws in queue.engine().attached_workspaces() {
                match queue.enqueue_discovery(&ws, Trigger::Scheduled) {
                    Ok(job) => tracing::info!(workspace = %ws, %job, "scheduled discovery queued"),
                    Err(QueueError::UnknownConnection(_)) => {}
                    Err(err) => tracing::warn!(workspace = %ws, %err, "scheduled discovery not queued"),
                }
            }
        }
    })
}

/// Serves until ctrl-c.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "gateway listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_parsing() {
        assert_eq!(parse_interval("0").unwrap(), None);
        assert_eq!(parse_interval(" 30 ").unwrap(), Some(Duration::from_secs(30)));
        assert!(parse_interval("soon").is_err());
    }
}
