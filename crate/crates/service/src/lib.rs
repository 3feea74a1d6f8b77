//! HTTP API over analysis sessions.
//!
//! A session holds one uploaded program, its issues and a bounded history
//! of earlier versions. Bodies are JSON; programs are returned as
//! base64-encoded `.sb3` archives. `docs/api.md` lists every endpoint.

pub mod session;

use std::future::Future;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path, Query, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::{Any, CorsLayer};

use litterbox_core::blocktext::print_target;
use litterbox_core::lint::Issue;
use litterbox_core::llm::{AnalyzeMode, AskScope, Assistant, FixOutcome, LlmConfig, LlmError};
use litterbox_core::model::{Program, ScriptId};
use litterbox_core::sb3::{load_sb3, save_sb3, Sb3Error};

use session::{Session, SessionStore};

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub port: u16,
    pub max_upload_bytes: usize,
    pub session_ttl: Duration,
    pub history_depth: usize,
    /// Allowed browser origin, or `*` for any.
    pub cors_origin: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            port: 8080,
            max_upload_bytes: 10 * 1024 * 1024,
            session_ttl: Duration::from_secs(3600),
            history_depth: 16,
            cors_origin: None,
        }
    }
}

impl ServiceConfig {
    /// Reads the `server.*` keys. `server.session-ttl` is in seconds.
    pub fn from_settings(settings: &LlmConfig) -> Result<Self, String> {
        fn parse<T: std::str::FromStr>(settings: &LlmConfig, key: &str, default: T) -> Result<T, String> {
            match settings.get(key) {
                None => Ok(default),
                Some(v) => v.parse().map_err(|_| format!("invalid value `{v}` for `{key}`")),
            }
        }
        let d = Self::default();
        Ok(ServiceConfig {
            port: parse(settings, "server.port", d.port)?,
            max_upload_bytes: parse(settings, "server.max-upload-bytes", d.max_upload_bytes)?,
            session_ttl: Duration::from_secs(parse(settings, "server.session-ttl", d.session_ttl.as_secs())?),
            history_depth: parse(settings, "server.history-depth", d.history_depth)?,
            cors_origin: settings.get("server.cors-origin").map(str::to_string),
        })
    }
}

struct Inner {
    sessions: SessionStore,
    /// The error message when the LLM settings are unusable.
    assistant: Result<Assistant, String>,
    provider: String,
    model: String,
    config: ServiceConfig,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(assistant: Result<Assistant, String>, config: ServiceConfig) -> Self {
        let (provider, model) = match &assistant {
            Ok(a) => (a.provider().name().to_string(), a.code_params.model.clone()),
            Err(_) => ("none".to_string(), String::new()),
        };
        AppState(Arc::new(Inner {
            sessions: SessionStore::new(config.session_ttl),
            assistant,
            provider,
            model,
            config,
        }))
    }

    /// Builds the state from settings. Unusable LLM settings leave the
    /// service running in a degraded mode where only the static analysis
    /// works.
    pub fn from_settings(settings: &LlmConfig, config: ServiceConfig) -> Self {
        let assistant = settings.build_assistant(None).map_err(|e| e.to_string());
        let mut state = Self::new(assistant, config);
        if state.0.assistant.is_err() {
            let inner = Arc::get_mut(&mut state.0).expect("state is not shared yet");
            inner.provider = settings.get("llm.provider").unwrap_or("none").to_string();
            inner.model = settings.model().to_string();
        }
        state
    }

    pub fn session_count(&self) -> usize {
        self.0.sessions.len()
    }
}

pub fn router(state: AppState) -> Router {
    let limit = state.0.config.max_upload_bytes;
    let cors = state.0.config.cors_origin.clone();
    let mut app = Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/issues/{issue}/explain", post(explain))
        .route("/sessions/{id}/issues/{issue}/fix", post(fix))
        .route("/sessions/{id}/ask", post(ask))
        .route("/sessions/{id}/analyze", post(analyze))
        .route("/sessions/{id}/complete", post(complete))
        .route("/sessions/{id}/revert", post(revert))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state);
    if let Some(origin) = cors {
        let layer = CorsLayer::new().allow_methods(Any).allow_headers(Any);
        let layer = if origin == "*" {
            layer.allow_origin(Any)
        } else {
            match HeaderValue::from_str(&origin) {
                Ok(v) => layer.allow_origin(v),
                Err(_) => layer,
            }
        };
        app = app.layer(layer);
    }
    app
}

/// Serves until `shutdown` completes.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

/// Completes on Ctrl-C or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
    extra: Option<Value>,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            kind,
            message: message.into(),
            extra: None,
        }
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("unknown {what} `{id}`"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({"error": self.kind, "message": self.message});
        if let Some(Value::Object(extra)) = self.extra {
            body.as_object_mut().unwrap().extend(extra);
        }
        (self.status, Json(body)).into_response()
    }
}

impl From<LlmError> for ApiError {
    fn from(e: LlmError) -> Self {
        let message = e.to_string();
        match e {
            LlmError::ProviderUnavailable(_) => ApiError::new(StatusCode::BAD_GATEWAY, "provider_unavailable", message),
            LlmError::EmptyResponse => ApiError::new(StatusCode::BAD_GATEWAY, "empty_response", message),
            LlmError::NothingUsable { dropped, attempts_used } => ApiError {
                extra: Some(json!({"dropped": dropped, "attempts_used": attempts_used})),
                ..ApiError::new(StatusCode::CONFLICT, "nothing_usable", message)
            },
            LlmError::TargetScriptMissing {
                dropped, attempts_used, ..
            } => ApiError {
                extra: Some(json!({"dropped": dropped, "attempts_used": attempts_used})),
                ..ApiError::new(StatusCode::CONFLICT, "target_script_missing", message)
            },
            LlmError::EmptyQuestion => ApiError::new(StatusCode::BAD_REQUEST, "empty_question", message),
            LlmError::UnknownSprite(_) => ApiError::new(StatusCode::BAD_REQUEST, "unknown_sprite", message),
            LlmError::UnknownScript(_) => ApiError::new(StatusCode::NOT_FOUND, "not_found", message),
            LlmError::Unprintable(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "unprintable", message),
        }
    }
}

impl From<Sb3Error> for ApiError {
    fn from(e: Sb3Error) -> Self {
        let kind = match e {
            Sb3Error::Schema { .. } => "schema_error",
            _ => "malformed_archive",
        };
        ApiError::new(StatusCode::BAD_REQUEST, kind, e.to_string())
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TargetCode {
    pub target: String,
    pub text: String,
    /// Scripts left out because they have no text form.
    pub skipped: Vec<ScriptId>,
}

fn code_of(program: &Program) -> Vec<TargetCode> {
    program
        .targets()
        .map(|t| {
            let (text, skipped) = print_target(t);
            TargetCode {
                target: t.name.clone(),
                text,
                skipped,
            }
        })
        .collect()
}

fn encode(program: &Program) -> ApiResult<String> {
    let bytes = save_sb3(program).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    Ok(base64::engine::general_purpose::STANDARD.encode(bytes))
}

fn session_view(id: &str, session: &Session, with_program: bool) -> ApiResult<Value> {
    let mut body = json!({
        "session_id": id,
        "issues": session.issues,
        "code": code_of(&session.current),
        "history_depth": session.history.len(),
    });
    if with_program {
        body["program"] = json!(encode(&session.current)?);
    }
    Ok(body)
}

impl AppState {
    fn session(&self, id: &str) -> ApiResult<Arc<tokio::sync::Mutex<Session>>> {
        self.0.sessions.get(id).ok_or_else(|| ApiError::not_found("session", id))
    }

    fn assistant(&self, language: Option<&str>) -> ApiResult<Assistant> {
        let assistant = self
            .0
            .assistant
            .clone()
            .map_err(|e| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "llm_not_configured", e))?;
        Ok(match language.filter(|l| !l.trim().is_empty()) {
            Some(l) => assistant.with_language(l),
            None => assistant,
        })
    }
}

/// Runs a blocking LLM call off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, LlmError> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(ApiError::from)
}

async fn health(State(state): State<AppState>) -> Json<Value> {
    let inner = &state.0;
    let mut body = json!({
        "status": if inner.assistant.is_ok() { "ok" } else { "degraded" },
        "provider": inner.provider,
        "model": inner.model,
    });
    if let Err(e) = &inner.assistant {
        body["detail"] = json!(e);
    }
    Json(body)
}

async fn upload_bytes(request: Request) -> ApiResult<Bytes> {
    let multipart = request
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    if !multipart {
        return Bytes::from_request(request, &())
            .await
            .map_err(|e| ApiError::new(e.status(), "bad_upload", e.body_text()));
    }
    let mut form = Multipart::from_request(request, &())
        .await
        .map_err(|e| ApiError::new(e.status(), "bad_upload", e.body_text()))?;
    while let Some(field) = form
        .next_field()
        .await
        .map_err(|e| ApiError::new(e.status(), "bad_upload", e.body_text()))?
    {
        if field.file_name().is_some() || field.name() == Some("file") {
            return field
                .bytes()
                .await
                .map_err(|e| ApiError::new(e.status(), "bad_upload", e.body_text()));
        }
    }
    Err(ApiError::new(StatusCode::BAD_REQUEST, "bad_upload", "the form has no file field"))
}

async fn create_session(State(state): State<AppState>, request: Request) -> ApiResult<(StatusCode, Json<Value>)> {
    let bytes = upload_bytes(request).await?;
    let program = load_sb3(&bytes)?;
    let session = Session::new(program, state.0.config.history_depth);
    let body = session_view("", &session, false)?;
    let id = state.0.sessions.insert(session);
    let mut body = body;
    body["session_id"] = json!(id);
    Ok((StatusCode::CREATED, Json(body)))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let session = state.session(&id)?;
    let session = session.lock().await;
    Ok(Json(session_view(&id, &session, true)?))
}

#[derive(Debug, Default, Deserialize)]
pub struct LanguageQuery {
    pub language: Option<String>,
}

fn find_issue(session: &Session, id: &str) -> ApiResult<Issue> {
    session
        .issues
        .iter()
        .find(|i| i.id == id)
        .cloned()
        .ok_or_else(|| ApiError::not_found("issue", id))
}

async fn explain(
    State(state): State<AppState>,
    Path((id, issue_id)): Path<(String, String)>,
    Query(query): Query<LanguageQuery>,
) -> ApiResult<Json<Issue>> {
    let session = state.session(&id)?;
    let mut session = session.lock().await;
    let issue = find_issue(&session, &issue_id)?;
    let assistant = state.assistant(query.language.as_deref())?;
    let program = session.current.clone();
    let explained = blocking(move || assistant.explain_issue(&program, &issue)).await?;
    if let Some(cached) = session.issues.iter_mut().find(|i| i.id == issue_id) {
        *cached = explained.clone();
    }
    Ok(Json(explained))
}

fn outcome_view(id: &str, session: &Session, outcome: &FixOutcome) -> ApiResult<Value> {
    let mut body = session_view(id, session, true)?;
    body["outcome"] = json!(outcome.summary());
    Ok(body)
}

async fn fix(
    State(state): State<AppState>,
    Path((id, issue_id)): Path<(String, String)>,
    Query(query): Query<LanguageQuery>,
) -> ApiResult<Json<Value>> {
    let session = state.session(&id)?;
    let mut session = session.lock().await;
    let issue = find_issue(&session, &issue_id)?;
    let assistant = state.assistant(query.language.as_deref())?;
    let program = session.current.clone();
    let outcome = blocking(move || assistant.fix_issue(&program, &issue)).await?;
    session.replace(outcome.updated.clone());
    Ok(Json(outcome_view(&id, &session, &outcome)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScopeKind {
    #[default]
    Program,
    Sprite,
}

#[derive(Debug, Deserialize)]
pub struct AskRequest {
    #[serde(default)]
    pub question: String,
    #[serde(default)]
    pub scope: ScopeKind,
    pub sprite: Option<String>,
    pub language: Option<String>,
}

async fn ask(State(state): State<AppState>, Path(id): Path<String>, Json(body): Json<AskRequest>) -> ApiResult<Json<Value>> {
    let session = state.session(&id)?;
    let session = session.lock().await;
    if body.question.trim().is_empty() {
        return Err(LlmError::EmptyQuestion.into());
    }
    let scope = match (body.scope, body.sprite) {
        (ScopeKind::Program, _) => AskScope::Program,
        (ScopeKind::Sprite, Some(name)) => AskScope::Sprite(name),
        (ScopeKind::Sprite, None) => {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "unknown_sprite", "scope `sprite` needs a `sprite` name"))
        }
    };
    let assistant = state.assistant(body.language.as_deref())?;
    let program = session.current.clone();
    let question = body.question;
    let answer = blocking(move || assistant.ask(&program, &question, &scope)).await?;
    Ok(Json(json!({"answer": answer})))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeKind {
    #[default]
    NewIssues,
    Perfumes,
}

#[derive(Debug, Deserialize)]
pub struct AnalyzeRequest {
    pub target: String,
    #[serde(default)]
    pub mode: ModeKind,
    pub language: Option<String>,
}

async fn analyze(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<AnalyzeRequest>,
) -> ApiResult<Json<Value>> {
    let session = state.session(&id)?;
    let session = session.lock().await;
    let mode = match body.mode {
        ModeKind::NewIssues => AnalyzeMode::NewIssues,
        ModeKind::Perfumes => AnalyzeMode::Perfumes,
    };
    let assistant = state.assistant(body.language.as_deref())?;
    let program = session.current.clone();
    let target = body.target;
    let report = blocking(move || assistant.analyze(&program, &target, mode)).await?;
    Ok(Json(json!(report)))
}

#[derive(Debug, Deserialize)]
pub struct CompleteRequest {
    pub script_id: ScriptId,
    pub language: Option<String>,
}

async fn complete(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<CompleteRequest>,
) -> ApiResult<Json<Value>> {
    let session = state.session(&id)?;
    let mut session = session.lock().await;
    let assistant = state.assistant(body.language.as_deref())?;
    let program = session.current.clone();
    let script = body.script_id;
    let outcome = blocking(move || assistant.complete_script(&program, &script)).await?;
    session.replace(outcome.updated.clone());
    Ok(Json(outcome_view(&id, &session, &outcome)?))
}

async fn revert(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let session = state.session(&id)?;
    let mut session = session.lock().await;
    if !session.revert() {
        return Err(ApiError::new(StatusCode::CONFLICT, "nothing_to_revert", "the session has no earlier version"));
    }
    Ok(Json(session_view(&id, &session, true)?))
}
