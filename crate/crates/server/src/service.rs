//! The HTTP service: JSON API under `/api/v1`, optional static UI at `/`.
//!
//! Routes are registered per endpoint template; each handler checks that the
//! addressed block exists and that its kind owns the operation, so the set of
//! answering endpoints is exactly [`generate_routes`](crate::routes::generate_routes).

use std::collections::{BTreeMap, HashMap};
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr, SocketAddr};
use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use axum::body::Bytes;
use axum::extract::{FromRequest, FromRequestParts, OriginalUri, Path, Query, Request, State};
use axum::http::request::Parts;
use axum::http::{HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Extension, Json, Router};
use glassflow_core::control::{AggregationStrategy, BiasConfig, BoundaryPredicate};
use glassflow_core::graph::{export_topology, AuditContext, BlockKind, Pipeline, RunOptions, AUDIT_STREAM};
use glassflow_core::models::{Predictor, Relabel};
use glassflow_core::payload::{ClassScores, FeatureVector};
use glassflow_core::xai::{explain_block, explain_pipeline, what_if_pipeline, ExplainParams, Method, WhatIfRequest};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use thiserror::Error;
use tokio::sync::oneshot;
use tower_http::services::ServeDir;

use crate::agent::tools::{CALL_ID_HEADER, TOOL_HEADER};
use crate::agent::{run_conversation, AgentError, ChatEndpoint, ChatTurn, HttpToolExecutor, SecretString};
use crate::error::{ApiError, ErrorCode};
use crate::manifest::generate_tool_manifest;
use crate::openapi::openapi_document;
use crate::routes::{HttpMethod, Operation, API_PREFIX};

/// Header naming the human author of an operator request.
pub const AUTHOR_HEADER: &str = "x-glassflow-author";

/// A chat endpoint plus its loop limit.
#[derive(Clone)]
pub struct AgentRuntime {
    pub endpoint: Arc<dyn ChatEndpoint>,
    pub max_tool_rounds: usize,
}

#[derive(Clone, Default)]
pub struct ServeOptions {
    /// Directory served at `/`.
    pub ui_dir: Option<PathBuf>,
    /// Static bearer token required on every `/api/v1` request.
    pub token: Option<SecretString>,
    pub agent: Option<AgentRuntime>,
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    BindFailure {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
}

type History = Arc<tokio::sync::Mutex<Vec<ChatTurn>>>;

pub struct AppState {
    pipeline: Arc<Pipeline>,
    token: Option<SecretString>,
    agent: Option<AgentRuntime>,
    conversations: parking_lot::Mutex<HashMap<String, History>>,
    /// Loopback origin the agent's tool calls go to; set once bound.
    base_url: OnceLock<String>,
}

impl AppState {
    pub fn new(pipeline: Arc<Pipeline>, opts: &ServeOptions) -> Arc<AppState> {
        Arc::new(AppState {
            pipeline,
            token: opts.token.clone().filter(|t| !t.is_empty()),
            agent: opts.agent.clone(),
            conversations: parking_lot::Mutex::new(HashMap::new()),
            base_url: OnceLock::new(),
        })
    }
}

/// Builds the application router.
pub fn router(state: Arc<AppState>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/graph", get(get_graph))
        .route("/pipeline/execute", post(execute))
        .route("/pipeline/whatif", post(whatif))
        .route("/pipeline/explain/{method}", post(explain_whole_pipeline))
        .route("/trace", get(list_trace))
        .route("/tools", get(get_tools))
        .route("/openapi", get(get_openapi))
        .route("/control/status", get(control_status))
        .route("/control/shutdown", post(trigger_shutdown))
        .route("/control/clear", post(clear_shutdown))
        .route("/chat", post(chat))
        .route("/blocks/{id}/predict", post(predict))
        .route("/blocks/{id}/explain/{method}", post(explain_model))
        .route("/blocks/{id}/retrain", post(retrain))
        .route("/blocks/{id}/rules", get(list_rules).post(create_rule))
        .route("/blocks/{id}/rules/{rule_id}", put(update_rule).delete(delete_rule))
        .route("/blocks/{id}/offsets", get(get_offsets).put(set_offsets))
        .route("/blocks/{id}/predicate", get(get_predicate).put(set_predicate))
        .route("/blocks/{id}/strategy", get(get_strategy).put(set_strategy))
        .fallback(unknown_route)
        .method_not_allowed_fallback(unknown_route)
        .layer(middleware::from_fn_with_state(state.clone(), agent_audit))
        .layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state);
    let app = Router::new().nest(API_PREFIX, api);
    match ui_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir).append_index_html_on_directories(true)),
        None => app.fallback(unknown_route),
    }
}

/// A running service.
pub struct ServiceHandle {
    local_addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<std::io::Result<()>>,
}

impl ServiceHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    /// `http://host:port` reachable from this machine.
    pub fn base_url(&self) -> String {
        loopback_url(self.local_addr)
    }

    /// Stops accepting connections, lets in-flight requests finish, and
    /// waits for the server task.
    pub async fn close(mut self) -> std::io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.task.await {
            Ok(r) => r,
            Err(e) => Err(std::io::Error::other(e)),
        }
    }
}

fn loopback_url(addr: SocketAddr) -> String {
    let ip = match addr.ip() {
        IpAddr::V4(v4) if v4.is_unspecified() => IpAddr::V4(Ipv4Addr::LOCALHOST),
        IpAddr::V6(v6) if v6.is_unspecified() => IpAddr::V6(Ipv6Addr::LOCALHOST),
        ip => ip,
    };
    format!("http://{}", SocketAddr::new(ip, addr.port()))
}

/// Binds `addr` and serves the pipeline until the handle is closed.
pub async fn serve(addr: SocketAddr, pipeline: Arc<Pipeline>, opts: ServeOptions) -> Result<ServiceHandle, ServeError> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ServeError::BindFailure { addr, source })?;
    let local_addr = listener
        .local_addr()
        .map_err(|source| ServeError::BindFailure { addr, source })?;
    let state = AppState::new(pipeline, &opts);
    let _ = state.base_url.set(loopback_url(local_addr));
    let app = router(state, opts.ui_dir.clone());
    let (tx, rx) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
    });
    tracing::info!(%local_addr, "serving");
    Ok(ServiceHandle {
        local_addr,
        shutdown: Some(tx),
        task,
    })
}

// ---------------------------------------------------------------------------
// Extractors and middleware

/// JSON body whose errors use the API envelope. An empty body reads as `{}`.
pub struct ApiJson<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for ApiJson<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let bytes = Bytes::from_request(req, state)
            .await
            .map_err(|e| ApiError::invalid_request(format!("cannot read body: {e}")))?;
        parse_body(&bytes).map(ApiJson)
    }
}

/// Parses a JSON body; an empty body reads as `{}`. Block handlers parse
/// after the route-level checks so a wrong endpoint is a 404, not a 400.
fn parse_body<T: DeserializeOwned>(bytes: &[u8]) -> ApiResult<T> {
    let bytes: &[u8] = if bytes.iter().all(u8::is_ascii_whitespace) { b"{}" } else { bytes };
    serde_json::from_slice(bytes).map_err(|e| ApiError::invalid_request(format!("invalid JSON body: {e}")))
}

/// Who is calling: an agent tool call (tool and call-id headers) or an
/// operator (author header, default `operator`).
pub struct Caller(pub AuditContext);

impl<S: Send + Sync> FromRequestParts<S> for Caller {
    type Rejection = std::convert::Infallible;

    async fn from_request_parts(parts: &mut Parts, _: &S) -> Result<Self, Self::Rejection> {
        Ok(Caller(caller_context(&parts.headers)))
    }
}

fn header<'h>(headers: &'h HeaderMap, name: &str) -> Option<&'h str> {
    headers
        .get(name)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|s| !s.is_empty())
}

fn caller_context(headers: &HeaderMap) -> AuditContext {
    match header(headers, TOOL_HEADER) {
        Some(tool) => AuditContext::agent(tool, header(headers, CALL_ID_HEADER).unwrap_or_default()),
        None => AuditContext::operator(header(headers, AUTHOR_HEADER).unwrap_or("operator")),
    }
}

/// Response marker: the handler already wrote an audit event.
#[derive(Clone, Copy)]
struct Audited;

async fn require_token(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let presented = header(req.headers(), "authorization").and_then(|v| v.strip_prefix("Bearer "));
        if presented.map(str::trim) != Some(token.expose()) {
            return ApiError::new(ErrorCode::Unauthorized, "missing or invalid bearer token").into_response();
        }
    }
    next.run(req).await
}

/// Agent calls must name a manifest tool bound to the requested endpoint.
/// Each one lands in the audit stream exactly once: mutating handlers audit
/// successful writes themselves; everything else is recorded here.
async fn agent_audit(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    let Some(tool_name) = header(req.headers(), TOOL_HEADER).map(str::to_string) else {
        return next.run(req).await;
    };
    let ctx = caller_context(req.headers());
    let path = req
        .extensions()
        .get::<OriginalUri>()
        .map_or_else(|| req.uri().path().to_string(), |u| u.path().to_string());
    let method = HttpMethod::parse(req.method().as_str());
    let manifest = generate_tool_manifest(state.pipeline.graph());
    let Some(tool) = manifest
        .into_iter()
        .find(|t| t.name == tool_name && Some(t.http.method) == method && path_matches(&t.http.path, &path))
    else {
        return ApiError::invalid_request(format!("`{tool_name}` is not a manifest tool for this endpoint"))
            .with_detail(json!({"tool": tool_name}))
            .into_response();
    };
    let resp = next.run(req).await;
    if resp.extensions().get::<Audited>().is_none() {
        state.pipeline.record_tool_call(
            &ctx,
            tool.block_id.as_deref(),
            json!({"method": tool.http.method, "path": path, "status": resp.status().as_u16()}),
        );
    }
    resp
}

fn path_matches(template: &str, path: &str) -> bool {
    let want: Vec<&str> = template.split('/').collect();
    let got: Vec<&str> = path.split('/').collect();
    want.len() == got.len()
        && want
            .iter()
            .zip(&got)
            .all(|(w, g)| (w.starts_with('{') && w.ends_with('}') && !g.is_empty()) || w == g)
}

async fn unknown_route(OriginalUri(uri): OriginalUri, method: axum::http::Method) -> ApiError {
    ApiError::new(ErrorCode::UnknownRoute, format!("no route for {method} {}", uri.path()))
        .with_detail(json!({"method": method.as_str(), "path": uri.path()}))
}

// ---------------------------------------------------------------------------
// Helpers

type ApiResult<T> = Result<T, ApiError>;

/// Checks that block `id` exists and its kind serves `op`.
fn check_block(state: &AppState, id: &str, op: Operation) -> ApiResult<BlockKind> {
    let spec = state.pipeline.graph().spec(id).map_err(|_| ApiError::unknown_block(id))?;
    if !Operation::for_kind(spec.kind).contains(&op) {
        return Err(ApiError::new(
            ErrorCode::UnsupportedOperation,
            format!("block `{id}` ({}) has no `{}` operation", spec.kind, op.name()),
        )
        .with_detail(json!({"block": id, "kind": spec.kind})));
    }
    Ok(spec.kind)
}

fn parse_method(segment: &str) -> ApiResult<Method> {
    Method::from_segment(segment).ok_or_else(|| {
        ApiError::new(ErrorCode::UnknownMethod, format!("unknown explanation method `{segment}`"))
            .with_detail(json!({"method": segment, "allowed": Method::ALL.map(|m| m.segment())}))
    })
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(ErrorCode::Internal, format!("worker failed: {e}")))?
}

fn input_vector(pipeline: &Pipeline, features: &BTreeMap<String, f64>) -> ApiResult<FeatureVector> {
    Ok(match pipeline.graph().input_schema() {
        Some(schema) => FeatureVector::conform(schema, features.iter().map(|(k, v)| (k.as_str(), *v)))?,
        None => FeatureVector::from_pairs("input", features.iter().map(|(k, v)| (k.clone(), *v)))?,
    })
}

/// Features for a model block: its own schema, or the pipeline input schema
/// projected onto it.
fn model_vector(pipeline: &Pipeline, block: &str, features: &BTreeMap<String, f64>) -> ApiResult<FeatureVector> {
    let state = pipeline.graph().model_state(block)?;
    let schema = state.feature_schema();
    match FeatureVector::conform(schema, features.iter().map(|(k, v)| (k.as_str(), *v))) {
        Ok(v) => Ok(v),
        Err(own) => match pipeline.graph().input_schema() {
            Some(input) if !Arc::ptr_eq(input, schema) => {
                let full = FeatureVector::conform(input, features.iter().map(|(k, v)| (k.as_str(), *v)))
                    .map_err(|_| ApiError::from(own))?;
                Ok(full.project(schema)?)
            }
            _ => Err(own.into()),
        },
    }
}

fn scores_object(scores: &ClassScores) -> Value {
    Value::Object(scores.iter().map(|(l, p)| (l.to_string(), json!(p))).collect())
}

fn to_json<T: serde::Serialize>(v: &T) -> ApiResult<Value> {
    serde_json::to_value(v).map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))
}

// ---------------------------------------------------------------------------
// Request bodies

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FeaturesBody {
    features: BTreeMap<String, f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WhatIfBody {
    features: BTreeMap<String, f64>,
    #[serde(default)]
    overrides: BTreeMap<String, f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExplainBody {
    features: BTreeMap<String, f64>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    n_samples: Option<usize>,
    #[serde(default)]
    exhaustive: bool,
    #[serde(default)]
    kernel_width: Option<f64>,
    #[serde(default)]
    ridge_lambda: Option<f64>,
    #[serde(default)]
    background_size: Option<usize>,
    #[serde(default)]
    target_class: Option<String>,
}

impl ExplainBody {
    fn params(&self) -> ExplainParams {
        ExplainParams {
            seed: self.seed,
            n_samples: self.n_samples,
            exhaustive: self.exhaustive,
            kernel_width: self.kernel_width,
            ridge_lambda: self.ridge_lambda,
            background_size: self.background_size,
            target_class: self.target_class.clone(),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RetrainBody {
    relabels: Vec<Relabel>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ShutdownBody {
    #[serde(default)]
    reason: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EmptyBody {}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChatBody {
    message: String,
    #[serde(default)]
    conversation_id: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TraceQuery {
    #[serde(default)]
    run_id: Option<String>,
}

// ---------------------------------------------------------------------------
// Pipeline-level handlers

async fn get_graph(State(state): State<Arc<AppState>>) -> ApiResult<Json<Value>> {
    Ok(Json(to_json(&export_topology(state.pipeline.graph()))?))
}

async fn execute(State(state): State<Arc<AppState>>, ApiJson(body): ApiJson<FeaturesBody>) -> ApiResult<Json<Value>> {
    let pipeline = state.pipeline.clone();
    blocking(move || {
        let input = input_vector(&pipeline, &body.features)?;
        let report = pipeline.execute_with(&input, &RunOptions::default())?;
        let mut out = to_json(&report.outcome)?;
        out["trace_ref"] = json!(report.outcome.run_id);
        if let Some(scores) = &report.scores {
            out["scores"] = scores_object(scores);
        }
        Ok(Json(out))
    })
    .await
}

async fn whatif(State(state): State<Arc<AppState>>, ApiJson(body): ApiJson<WhatIfBody>) -> ApiResult<Json<Value>> {
    let pipeline = state.pipeline.clone();
    blocking(move || {
        let base = input_vector(&pipeline, &body.features)?;
        let result = what_if_pipeline(
            &pipeline,
            &WhatIfRequest {
                base,
                overrides: body.overrides,
            },
        )?;
        Ok(Json(to_json(&result)?))
    })
    .await
}

async fn explain_whole_pipeline(
    State(state): State<Arc<AppState>>,
    Path(method): Path<String>,
    body: Bytes,
) -> ApiResult<Response> {
    let method = parse_method(&method)?;
    let body: ExplainBody = parse_body(&body)?;
    let pipeline = state.pipeline.clone();
    blocking(move || {
        let x = input_vector(&pipeline, &body.features)?;
        let explanation = explain_pipeline(pipeline.graph(), method, &x, &body.params())?;
        Ok(Json(explanation).into_response())
    })
    .await
}

async fn list_trace(State(state): State<Arc<AppState>>, query: Result<Query<TraceQuery>, axum::extract::rejection::QueryRejection>) -> ApiResult<Json<Value>> {
    let Query(query) = query.map_err(|e| ApiError::invalid_request(e.body_text()))?;
    let store = state.pipeline.store();
    match query.run_id {
        None => Ok(Json(json!({"runs": store.runs()}))),
        Some(run_id) => match store.run(&run_id) {
            Some(events) => Ok(Json(json!({"run_id": run_id, "events": events}))),
            None => Err(ApiError::new(ErrorCode::UnknownRun, format!("no stored run `{run_id}`"))
                .with_detail(json!({"run_id": run_id, "audit_stream": AUDIT_STREAM}))),
        },
    }
}

async fn get_tools(State(state): State<Arc<AppState>>) -> ApiResult<Json<Value>> {
    Ok(Json(to_json(&generate_tool_manifest(state.pipeline.graph()))?))
}

async fn get_openapi(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(openapi_document(state.pipeline.graph()))
}

async fn control_status(State(state): State<Arc<AppState>>) -> ApiResult<Json<Value>> {
    Ok(Json(to_json(&state.pipeline.shutdown_status())?))
}

async fn trigger_shutdown(
    State(state): State<Arc<AppState>>,
    Caller(ctx): Caller,
    ApiJson(body): ApiJson<ShutdownBody>,
) -> ApiResult<(Extension<Audited>, Json<Value>)> {
    let reason = body.reason.unwrap_or_else(|| "emergency stop".into());
    let ack = state.pipeline.trigger_shutdown(&ctx, &reason);
    Ok((Extension(Audited), Json(to_json(&ack)?)))
}

async fn clear_shutdown(
    State(state): State<Arc<AppState>>,
    Caller(ctx): Caller,
    ApiJson(_): ApiJson<EmptyBody>,
) -> ApiResult<(Extension<Audited>, Json<Value>)> {
    let ack = state.pipeline.clear_shutdown(&ctx);
    Ok((Extension(Audited), Json(to_json(&ack)?)))
}

async fn chat(State(state): State<Arc<AppState>>, ApiJson(body): ApiJson<ChatBody>) -> ApiResult<Json<Value>> {
    let Some(agent) = state.agent.clone() else {
        return Err(ApiError::new(
            ErrorCode::AgentUnavailable,
            "no agent is configured; set the agent environment variables",
        ));
    };
    let base_url = state
        .base_url
        .get()
        .cloned()
        .ok_or_else(|| ApiError::new(ErrorCode::AgentUnavailable, "service address is not known yet"))?;
    let conversation_id = match body.conversation_id {
        Some(id) if valid_conversation_id(&id) => id,
        Some(id) => {
            return Err(ApiError::invalid_request("conversation_id must be 1-64 characters of [A-Za-z0-9_-]")
                .with_detail(json!({"conversation_id": id})))
        }
        None => glassflow_core::graph::new_run_id(),
    };
    let history = state.conversations.lock().entry(conversation_id.clone()).or_default().clone();
    // One loop per conversation at a time.
    let mut turns = history.lock().await;
    let executor = HttpToolExecutor::new(&base_url, state.token.clone())
        .map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))?;
    let manifest = generate_tool_manifest(state.pipeline.graph());
    let conversation = run_conversation(
        agent.endpoint.as_ref(),
        &executor,
        &manifest,
        &body.message,
        turns.clone(),
        agent.max_tool_rounds,
    )
    .await
    .map_err(agent_error)?;
    *turns = conversation.turns.clone();
    Ok(Json(json!({
        "conversation_id": conversation_id,
        "turns": conversation.turns,
        "truncated": conversation.truncated,
    })))
}

fn valid_conversation_id(id: &str) -> bool {
    (1..=64).contains(&id.len()) && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn agent_error(e: AgentError) -> ApiError {
    let code = match &e {
        AgentError::EndpointUnreachable(_) | AgentError::EndpointError { .. } | AgentError::InvalidReply(_) => {
            ErrorCode::AgentEndpointUnreachable
        }
        AgentError::ScriptExhausted => ErrorCode::AgentUnavailable,
        AgentError::EmptyManifest | AgentError::Config(_) => ErrorCode::Internal,
    };
    ApiError::new(code, e.to_string())
}

// ---------------------------------------------------------------------------
// Block-level handlers

async fn predict(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    check_block(&state, &id, Operation::Predict)?;
    let body: FeaturesBody = parse_body(&body)?;
    let pipeline = state.pipeline.clone();
    blocking(move || {
        let x = model_vector(&pipeline, &id, &body.features)?;
        let model = pipeline.graph().model_state(&id)?;
        let scores = model.predict_proba(&x).map_err(|e| ApiError::from(glassflow_core::graph::GraphError::Model(e)))?;
        Ok(Json(json!({
            "block": id,
            "label": scores.top_label(),
            "scores": scores_object(&scores),
        })))
    })
    .await
}

async fn explain_model(
    State(state): State<Arc<AppState>>,
    Path((id, method)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult<Response> {
    check_block(&state, &id, Operation::Explain(Method::Lime))?;
    let method = parse_method(&method)?;
    let body: ExplainBody = parse_body(&body)?;
    let pipeline = state.pipeline.clone();
    blocking(move || {
        let x = model_vector(&pipeline, &id, &body.features)?;
        let explanation = explain_block(pipeline.graph(), &id, method, &x, &body.params())?;
        Ok(Json(explanation).into_response())
    })
    .await
}

async fn retrain(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Caller(ctx): Caller,
    body: Bytes,
) -> ApiResult<(Extension<Audited>, Json<Value>)> {
    check_block(&state, &id, Operation::Retrain)?;
    let body: RetrainBody = parse_body(&body)?;
    let pipeline = state.pipeline.clone();
    blocking(move || {
        let report = pipeline.retrain(&ctx, &id, &body.relabels)?;
        Ok((Extension(Audited), Json(to_json(&report)?)))
    })
    .await
}

async fn list_rules(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    check_block(&state, &id, Operation::ListRules)?;
    Ok(Json(state.pipeline.graph().list_rules(&id)?))
}

async fn create_rule(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Caller(ctx): Caller,
    body: Bytes,
) -> ApiResult<(StatusCode, Extension<Audited>, Json<Value>)> {
    check_block(&state, &id, Operation::CreateRule)?;
    let body: Value = parse_body(&body)?;
    let rule = state.pipeline.create_rule(&ctx, &id, body)?;
    Ok((StatusCode::CREATED, Extension(Audited), Json(rule)))
}

async fn update_rule(
    State(state): State<Arc<AppState>>,
    Path((id, rule_id)): Path<(String, String)>,
    Caller(ctx): Caller,
    body: Bytes,
) -> ApiResult<(Extension<Audited>, Json<Value>)> {
    check_block(&state, &id, Operation::UpdateRule)?;
    let body: Value = parse_body(&body)?;
    let rule = state.pipeline.update_rule(&ctx, &id, &rule_id, body)?;
    Ok((Extension(Audited), Json(rule)))
}

async fn delete_rule(
    State(state): State<Arc<AppState>>,
    Path((id, rule_id)): Path<(String, String)>,
    Caller(ctx): Caller,
) -> ApiResult<(Extension<Audited>, Json<Value>)> {
    check_block(&state, &id, Operation::DeleteRule)?;
    let rule = state.pipeline.delete_rule(&ctx, &id, &rule_id)?;
    Ok((Extension(Audited), Json(rule)))
}

/// Parses a control document; serde messages become `invalid_config`.
fn control_doc<T: DeserializeOwned>(body: Value, what: &str) -> ApiResult<T> {
    if !body.is_object() {
        return Err(ApiError::new(ErrorCode::InvalidConfig, format!("{what} must be a JSON object")));
    }
    serde_json::from_value(body).map_err(|e| ApiError::new(ErrorCode::InvalidConfig, format!("invalid {what}: {e}")))
}

/// Rejects fields the document type does not know.
fn no_unknown_fields(body: &Value, known: &[&str], what: &str) -> ApiResult<()> {
    if let Some(map) = body.as_object() {
        if let Some(k) = map.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(ApiError::new(ErrorCode::InvalidConfig, format!("unknown field `{k}` in {what}")));
        }
    }
    Ok(())
}

async fn get_offsets(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    check_block(&state, &id, Operation::GetOffsets)?;
    Ok(Json(to_json(&*state.pipeline.graph().bias_config(&id)?)?))
}

async fn set_offsets(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Caller(ctx): Caller,
    body: Bytes,
) -> ApiResult<(Extension<Audited>, Json<Value>)> {
    check_block(&state, &id, Operation::SetOffsets)?;
    let body: Value = parse_body(&body)?;
    no_unknown_fields(&body, &["offsets", "active", "rationale"], "bias configuration")?;
    let cfg: BiasConfig = control_doc(body, "bias configuration")?;
    let after = state.pipeline.set_bias_config(&ctx, &id, cfg)?;
    Ok((Extension(Audited), Json(to_json(&*after)?)))
}

async fn get_predicate(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    check_block(&state, &id, Operation::GetPredicate)?;
    Ok(Json(to_json(&*state.pipeline.graph().boundary(&id)?)?))
}

async fn set_predicate(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Caller(ctx): Caller,
    body: Bytes,
) -> ApiResult<(Extension<Audited>, Json<Value>)> {
    check_block(&state, &id, Operation::SetPredicate)?;
    let body: Value = parse_body(&body)?;
    no_unknown_fields(&body, &["condition", "action", "description"], "boundary predicate")?;
    let pred: BoundaryPredicate = control_doc(body, "boundary predicate")?;
    let after = state.pipeline.set_boundary(&ctx, &id, pred)?;
    Ok((Extension(Audited), Json(to_json(&*after)?)))
}

async fn get_strategy(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    check_block(&state, &id, Operation::GetStrategy)?;
    Ok(Json(to_json(&*state.pipeline.graph().strategy(&id)?)?))
}

async fn set_strategy(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Caller(ctx): Caller,
    body: Bytes,
) -> ApiResult<(Extension<Audited>, Json<Value>)> {
    check_block(&state, &id, Operation::SetStrategy)?;
    let body: Value = parse_body(&body)?;
    no_unknown_fields(&body, &["strategy", "weights"], "aggregation strategy")?;
    let strategy: AggregationStrategy = control_doc(body, "aggregation strategy")?;
    let after = state.pipeline.set_strategy(&ctx, &id, strategy)?;
    Ok((Extension(Audited), Json(to_json(&*after)?)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loopback_for_unspecified_addresses() {
        assert_eq!(loopback_url("0.0.0.0:8080".parse().unwrap()), "http://127.0.0.1:8080");
        assert_eq!(loopback_url("[::]:81".parse().unwrap()), "http://[::1]:81");
        assert_eq!(loopback_url("10.0.0.2:1".parse().unwrap()), "http://10.0.0.2:1");
    }

    #[test]
    fn caller_attribution() {
        let mut h = HeaderMap::new();
        assert_eq!(caller_context(&h), AuditContext::operator("operator"));
        h.insert(AUTHOR_HEADER, "alice".parse().unwrap());
        assert_eq!(caller_context(&h), AuditContext::operator("alice"));
        h.insert(TOOL_HEADER, "get_graph".parse().unwrap());
        h.insert(CALL_ID_HEADER, "c1".parse().unwrap());
        assert_eq!(caller_context(&h), AuditContext::agent("get_graph", "c1"));
    }

    #[test]
    fn conversation_ids() {
        assert!(valid_conversation_id("abc-1_2"));
        assert!(!valid_conversation_id(""));
        assert!(!valid_conversation_id("a/b"));
        assert!(!valid_conversation_id(&"x".repeat(65)));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let ok: ApiResult<()> = no_unknown_fields(&json!({"strategy": "majority_vote"}), &["strategy", "weights"], "s");
        assert!(ok.is_ok());
        let bad = no_unknown_fields(&json!({"stratgy": 1}), &["strategy"], "s").unwrap_err();
        assert_eq!(bad.code, ErrorCode::InvalidConfig);
    }
}
