//! JSON-over-HTTP front end. Handlers parse the body, hand the work to a
//! blocking thread and serialize the result with [`ops::to_json`].

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::Router;
use gazeforge_core::optimizer::CorrectionOptions;
use gazeforge_core::GaussianMixtureSpec;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::config::Config;
use crate::error::{AppError, Result};
use crate::ops::{self, Engine};
use crate::session::SessionStore;

pub struct AppState {
    pub engine: Engine,
    pub sessions: SessionStore,
}

type Shared = State<Arc<AppState>>;

pub fn router(state: Arc<AppState>, cors_origin: &str) -> Router {
    let origin = if cors_origin == "*" {
        AllowOrigin::any()
    } else {
        match HeaderValue::from_str(cors_origin) {
            Ok(v) => AllowOrigin::exact(v),
            Err(_) => {
                log::warn!("ignoring unusable CORS origin {cors_origin:?}");
                AllowOrigin::list([])
            }
        }
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods([Method::GET, Method::POST, Method::PUT])
        .allow_headers([header::CONTENT_TYPE]);
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", get(list_sessions).post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/spec", get(get_spec).put(put_spec))
        .route("/sessions/{id}/prompt", put(put_prompt))
        .route("/sessions/{id}/render", post(session_render))
        .route("/sessions/{id}/correct", post(session_correct))
        .route("/sessions/{id}/generate", post(session_generate))
        .route("/render", post(render))
        .route("/correct", post(correct))
        .route("/eval", post(eval))
        .route("/eval-video", post(eval_video))
        .route("/retarget", post(retarget))
        .route("/suppress", post(suppress))
        .route("/generate", post(generate))
        .route("/predict", post(predict))
        .layer(cors)
        .with_state(state)
}

fn json_response(status: StatusCode, body: Vec<u8>) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

pub fn error_response(e: &AppError) -> Response {
    let status = StatusCode::from_u16(e.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    if status.is_server_error() {
        log::error!("{e}");
    }
    json_response(status, ops::to_json(&e.to_json()))
}

/// Runs `f` off the async executor and renders its outcome.
async fn blocking<T, F>(status: StatusCode, f: F) -> Response
where
    T: Serialize + Send + 'static,
    F: FnOnce() -> Result<T> + Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(Ok(v)) => json_response(status, ops::to_json(&v)),
        Ok(Err(e)) => error_response(&e),
        Err(e) => error_response(&AppError::Unavailable(format!("worker failed: {e}"))),
    }
}

/// Syntax errors are 400; well-formed JSON of the wrong shape is 422.
pub fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T> {
    serde_json::from_slice(body).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => AppError::Core(e.into()),
        _ => AppError::usage(format!("request body: {e}")),
    })
}

/// Like [`parse_body`], with an empty body meaning `T::default()`.
fn parse_optional<T: DeserializeOwned + Default>(body: &[u8]) -> Result<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        Ok(T::default())
    } else {
        parse_body(body)
    }
}

macro_rules! try_parse {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(err) => return error_response(&err),
        }
    };
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Health {
    status: &'static str,
    version: &'static str,
    index: IndexStatus,
    embedder: String,
    sessions: usize,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct IndexStatus {
    loaded: bool,
    records: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    embedder_id: Option<String>,
}

async fn healthz(State(s): Shared) -> Response {
    let index = match &s.engine.index {
        Some(ix) => IndexStatus {
            loaded: true,
            records: ix.len(),
            embedder_id: Some(ix.embedder_id().to_string()),
        },
        None => IndexStatus {
            loaded: false,
            records: 0,
            embedder_id: None,
        },
    };
    let health = Health {
        status: "ok",
        version: env!("CARGO_PKG_VERSION"),
        index,
        embedder: s.engine.embedder.id(),
        sessions: s.sessions.ids().len(),
    };
    json_response(StatusCode::OK, ops::to_json(&health))
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct NewSession {
    #[serde(default)]
    prompt: String,
    #[serde(default)]
    spec: Option<GaussianMixtureSpec>,
}

async fn list_sessions(State(s): Shared) -> Response {
    json_response(StatusCode::OK, ops::to_json(&s.sessions.ids()))
}

async fn create_session(State(s): Shared, body: Bytes) -> Response {
    let req: NewSession = try_parse!(parse_optional(&body));
    blocking(StatusCode::CREATED, move || s.sessions.create(req.prompt, req.spec)).await
}

async fn get_session(State(s): Shared, Path(id): Path<String>) -> Response {
    blocking(StatusCode::OK, move || s.sessions.get(&id)).await
}

async fn get_spec(State(s): Shared, Path(id): Path<String>) -> Response {
    blocking(StatusCode::OK, move || Ok(s.sessions.get(&id)?.spec)).await
}

async fn put_spec(State(s): Shared, Path(id): Path<String>, body: Bytes) -> Response {
    let spec: GaussianMixtureSpec = try_parse!(parse_body(&body));
    blocking(StatusCode::OK, move || {
        spec.validate()?;
        s.sessions.update(&id, |st| {
            st.spec = spec;
            Ok(st.spec.clone())
        })
    })
    .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PromptBody {
    prompt: String,
}

async fn put_prompt(State(s): Shared, Path(id): Path<String>, body: Bytes) -> Response {
    let req: PromptBody = try_parse!(parse_body(&body));
    blocking(StatusCode::OK, move || {
        s.sessions.update(&id, |st| {
            st.prompt = req.prompt;
            Ok(st.clone())
        })
    })
    .await
}

#[derive(Debug, Deserialize)]
struct Size {
    w: Option<usize>,
    h: Option<usize>,
}

async fn session_render(State(s): Shared, Path(id): Path<String>, Query(size): Query<Size>) -> Response {
    blocking(StatusCode::OK, move || s.sessions.with(&id, |st| ops::render(&st.spec, size.w, size.h))).await
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct SessionCorrect {
    /// Replaces the session prompt when given.
    #[serde(default)]
    prompt: Option<String>,
    #[serde(default)]
    options: CorrectionOptions,
}

async fn session_correct(State(s): Shared, Path(id): Path<String>, body: Bytes) -> Response {
    let req: SessionCorrect = try_parse!(parse_optional(&body));
    blocking(StatusCode::OK, move || {
        let state = s.clone();
        s.sessions.update(&id, move |st| {
            if let Some(p) = req.prompt {
                st.prompt = p;
            }
            let result = ops::correct(&state.engine, &st.spec, &st.prompt, &req.options)?;
            st.last_correction = Some(result.clone());
            Ok(result)
        })
    })
    .await
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct SessionGenerate {
    width: Option<u32>,
    height: Option<u32>,
    #[serde(default)]
    seed: u64,
    steps: Option<u32>,
}

async fn session_generate(State(s): Shared, Path(id): Path<String>, body: Bytes) -> Response {
    let req: SessionGenerate = try_parse!(parse_optional(&body));
    blocking(StatusCode::OK, move || {
        let st = s.sessions.get(&id)?;
        let gen = ops::GenerateRequest {
            prompt: st.prompt,
            conditioning: None,
            spec: Some(st.spec),
            width: req.width,
            height: req.height,
            seed: req.seed,
            steps: req.steps,
        };
        ops::generate(&s.engine, &gen)
    })
    .await
}

async fn render(body: Bytes) -> Response {
    let req: ops::RenderRequest = try_parse!(parse_body(&body));
    blocking(StatusCode::OK, move || ops::render(&req.spec, req.w, req.h)).await
}

async fn correct(State(s): Shared, body: Bytes) -> Response {
    let req: ops::CorrectRequest = try_parse!(parse_body(&body));
    blocking(StatusCode::OK, move || ops::correct(&s.engine, &req.spec, &req.prompt, &req.options)).await
}

async fn eval(body: Bytes) -> Response {
    let req: ops::EvalRequest = try_parse!(parse_body(&body));
    blocking(StatusCode::OK, move || ops::eval(&req)).await
}

async fn eval_video(body: Bytes) -> Response {
    let req: ops::EvalVideoRequest = try_parse!(parse_body(&body));
    blocking(StatusCode::OK, move || ops::eval_video(&req.target.decode()?, &req.achieved.decode()?)).await
}

async fn retarget(body: Bytes) -> Response {
    let req: ops::RetargetRequest = try_parse!(parse_body(&body));
    blocking(StatusCode::OK, move || ops::retarget(&req)).await
}

async fn suppress(body: Bytes) -> Response {
    let req: ops::SuppressRequest = try_parse!(parse_body(&body));
    blocking(StatusCode::OK, move || ops::suppress(&req)).await
}

async fn generate(State(s): Shared, body: Bytes) -> Response {
    let req: ops::GenerateRequest = try_parse!(parse_body(&body));
    blocking(StatusCode::OK, move || ops::generate(&s.engine, &req)).await
}

async fn predict(State(s): Shared, body: Bytes) -> Response {
    let req: ops::PredictRequest = try_parse!(parse_body(&body));
    blocking(StatusCode::OK, move || {
        let bytes = ops::decode_b64("imageB64", &req.image_b64)?;
        ops::predict(&s.engine, &bytes)
    })
    .await
}

pub fn build_state(config: &Config) -> Result<Arc<AppState>> {
    let engine = Engine::from_config(config)?;
    let sessions = match &config.data_dir {
        Some(dir) => SessionStore::open(dir)?,
        None => SessionStore::in_memory(),
    };
    Ok(Arc::new(AppState { engine, sessions }))
}

/// Serves until Ctrl-C.
pub fn run(config: &Config) -> Result<()> {
    let state = build_state(config)?;
    let app = router(state, &config.cors_origin);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| AppError::Unavailable(format!("runtime: {e}")))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((config.host.as_str(), config.port))
            .await
            .map_err(|e| AppError::Unavailable(format!("bind {}:{}: {e}", config.host, config.port)))?;
        let addr = listener.local_addr().map_err(|e| AppError::Unavailable(e.to_string()))?;
        log::info!("listening on http://{addr}");
        eprintln!("gazeforge listening on http://{addr}");
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| AppError::Unavailable(format!("server: {e}")))
    })
}
