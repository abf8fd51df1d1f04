//! JSON over HTTP. Every body carries `schema_version`; errors are
//! `{"schema_version", "error": {"code", "message"}}` with a stable code.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use botdyn::Discriminant;
use serde::Serialize;
use serde_json::{json, Value};

use crate::analysis::{self, CertifyRequest, GameRequest, OriginSpec, ReachRequest, SynthesizeRequest};
use crate::error::{ApiError, ApiResult};
use crate::jobs::JobPool;
use crate::session::{SessionConfig, SessionStore};
use crate::store::ModelStore;
use crate::SCHEMA_VERSION;

#[derive(Clone)]
pub struct AppState {
    pub models: Arc<ModelStore>,
    pub sessions: Arc<SessionStore>,
    pub jobs: Arc<JobPool>,
}

impl AppState {
    pub fn new(models: ModelStore, default_seed: u64, workers: usize, queue: usize) -> ApiResult<Self> {
        Ok(AppState { models: Arc::new(models), sessions: Arc::new(SessionStore::new(default_seed)), jobs: JobPool::new(workers, queue)? })
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/models", get(list_models))
        .route("/v1/sessions", get(list_sessions).post(create_session))
        .route("/v1/sessions/{id}", axum::routing::delete(delete_session))
        .route("/v1/sessions/{id}/turn", post(turn))
        .route("/v1/sessions/{id}/snapshot", get(snapshot))
        .route("/v1/sessions/{id}/transcript", get(transcript))
        .route("/v1/reach", post(reach))
        .route("/v1/certify", post(certify))
        .route("/v1/synthesize", post(synthesize))
        .route("/v1/game", post(game))
        .route("/v1/jobs/{id}", get(job))
        .with_state(state)
}

/// Adds `schema_version` to an object payload.
pub fn envelope(payload: impl Serialize) -> Value {
    let mut v = serde_json::to_value(payload).unwrap_or(Value::Null);
    match v.as_object_mut() {
        Some(obj) => {
            obj.insert("schema_version".into(), json!(SCHEMA_VERSION));
            v
        }
        None => json!({ "schema_version": SCHEMA_VERSION, "data": v }),
    }
}

struct Reply(StatusCode, Value);

impl IntoResponse for Reply {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(json!({ "schema_version": SCHEMA_VERSION, "error": self }))).into_response()
    }
}

type HttpResult = Result<Reply, ApiError>;

fn ok(payload: impl Serialize) -> HttpResult {
    Ok(Reply(StatusCode::OK, envelope(payload)))
}

fn body<T>(b: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    b.map(|Json(t)| t).map_err(|e| ApiError::bad_request(e.body_text()))
}

async fn blocking<R: Send + 'static>(f: impl FnOnce() -> ApiResult<R> + Send + 'static) -> ApiResult<R> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::new(500, "internal", e.to_string()))?
}

async fn list_models(State(s): State<AppState>) -> HttpResult {
    ok(json!({ "models": s.models.list() }))
}

async fn list_sessions(State(s): State<AppState>) -> HttpResult {
    ok(json!({ "sessions": s.sessions.list() }))
}

async fn create_session(State(s): State<AppState>, b: Result<Json<SessionConfig>, JsonRejection>) -> HttpResult {
    let cfg = body(b)?;
    let id = blocking(move || s.sessions.create(&s.models, &cfg)).await?;
    Ok(Reply(StatusCode::CREATED, envelope(json!({ "session": id }))))
}

async fn delete_session(State(s): State<AppState>, Path(id): Path<u64>) -> HttpResult {
    s.sessions.remove(id)?;
    ok(json!({ "deleted": id }))
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurnRequest {
    pub tokens: Vec<String>,
}

async fn turn(State(s): State<AppState>, Path(id): Path<u64>, b: Result<Json<TurnRequest>, JsonRejection>) -> HttpResult {
    let req = body(b)?;
    let reply = blocking(move || s.sessions.with(id, |sess| sess.user_turn(&req.tokens))).await?;
    ok(reply)
}

async fn snapshot(State(s): State<AppState>, Path(id): Path<u64>) -> HttpResult {
    let snap = blocking(move || s.sessions.with(id, |sess| sess.snapshot())).await?;
    ok(snap)
}

async fn transcript(State(s): State<AppState>, Path(id): Path<u64>) -> HttpResult {
    let text = s.sessions.with(id, |sess| Ok(sess.transcript().to_file_string(sess.model().alphabet())))?;
    ok(json!({ "transcript": text }))
}

fn submit<T: Serialize>(s: &AppState, f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> HttpResult {
    let id = s.jobs.submit(move || f().map(|r| serde_json::to_value(r).unwrap_or(Value::Null)))?;
    Ok(Reply(StatusCode::ACCEPTED, envelope(json!({ "job": id }))))
}

async fn reach(State(s): State<AppState>, b: Result<Json<ReachRequest>, JsonRejection>) -> HttpResult {
    let req = body(b)?;
    // resolve the model and origin now, so the job sees the session as it is
    let (model, origin) = match (&req.model, req.session) {
        (Some(m), None) => {
            let model = s.models.get(m)?;
            let origin = req.origin.as_ref().ok_or_else(|| ApiError::bad_request("origin required with a model"))?;
            let o = origin.resolve(model.alphabet())?;
            (model, o)
        }
        (None, Some(id)) => s.sessions.with(id, |sess| {
            let model = sess.model().clone();
            let o = match &req.origin {
                Some(o) => o.resolve(model.alphabet())?,
                None => session_origin(sess.context().window(), model.alphabet()).resolve(model.alphabet())?,
            };
            Ok((model, o))
        })?,
        _ => return Err(ApiError::bad_request("give exactly one of model and session")),
    };
    let t = analysis::parse_temperature(req.temperature.as_deref())?;
    submit(&s, move || analysis::reach(&model, &origin, req.horizon, req.theta, t, req.monte_carlo))
}

/// The unfinished sentence at the end of a session window, or the content prior when
/// the window is empty or ends a sentence.
fn session_origin(window: &[botdyn::TokenId], a: &botdyn::Alphabet) -> OriginSpec {
    let tail: Vec<botdyn::TokenId> = window.iter().rev().take_while(|&&t| t != a.eos()).copied().collect();
    let prompt: Vec<String> = tail.iter().rev().filter(|&&t| t != a.pad()).map(|&t| a.symbol(t).to_string()).collect();
    if prompt.is_empty() {
        OriginSpec::Prior("content".into())
    } else {
        OriginSpec::Prompt(prompt)
    }
}

async fn certify(State(s): State<AppState>, b: Result<Json<CertifyRequest>, JsonRejection>) -> HttpResult {
    let req = body(b)?;
    let model = s.models.get(&req.model)?;
    submit(&s, move || analysis::certify(&model, req.ell, req.property.as_deref(), req.fixings.as_ref()))
}

async fn synthesize(State(s): State<AppState>, b: Result<Json<SynthesizeRequest>, JsonRejection>) -> HttpResult {
    let req = body(b)?;
    let model = s.models.get(&req.model)?;
    submit(&s, move || analysis::synthesize(&model, &req))
}

async fn game(State(s): State<AppState>, b: Result<Json<GameRequest>, JsonRejection>) -> HttpResult {
    let req = body(b)?;
    let model = s.models.get(&req.model)?;
    submit(&s, move || analysis::game(&model, &req))
}

async fn job(State(s): State<AppState>, Path(id): Path<u64>) -> HttpResult {
    let state = s.jobs.get(id)?;
    ok(json!({ "job": id, "state": state }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_stamps_objects_and_wraps_the_rest() {
        assert_eq!(envelope(json!({"a": 1})), json!({"a": 1, "schema_version": SCHEMA_VERSION}));
        assert_eq!(envelope(vec![1, 2]), json!({"schema_version": SCHEMA_VERSION, "data": [1, 2]}));
    }

    #[test]
    fn session_origin_takes_the_open_sentence() {
        let a = botdyn::Alphabet::toy(4);
        // a b EOS PAD
        assert_eq!(session_origin(&[3, 3, 0, 1], &a), OriginSpec::Prompt(vec!["a".into(), "b".into()]));
        assert_eq!(session_origin(&[0, 2, 1, 0], &a), OriginSpec::Prompt(vec!["b".into(), "a".into()]));
        assert_eq!(session_origin(&[0, 1, 0, 2], &a), OriginSpec::Prior("content".into()));
        assert_eq!(session_origin(&[3, 3, 3, 3], &a), OriginSpec::Prior("content".into()));
    }
}
