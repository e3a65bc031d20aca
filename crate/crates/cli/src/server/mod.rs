//! HTTP session API.
//!
//! ```text
//! POST /api/sessions                 {condition?}            -> {session_id, n_trials, condition_hidden}
//! GET  /api/sessions/{id}/trial                              -> {trial_index, ai_prediction_color, ai_confidence, dot_colors}
//! POST /api/sessions/{id}/judgment   {judged_correct, ...}   -> {was_human_correct, ai_was_correct, score_delta, bonus_accrued, finished}
//! GET  /api/sessions/{id}/export                             -> trial CSV
//! ```

pub mod session;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::Rng;
use serde::Deserialize;
use serde_json::json;

use trustcal_core::confidence::{build_pool, Condition, StimulusPool};
use trustcal_core::datastore::{ConditionChoice, SessionConfig};
use trustcal_core::rng::{self, SimRng, StreamKind};

pub use session::{Feedback, Judgment, Session, SessionError, SessionState, TrialView};

/// Sessions untouched for this long are dropped.
pub const IDLE_TIMEOUT: Duration = Duration::from_secs(24 * 60 * 60);

pub struct AppState {
    config: SessionConfig,
    pools: HashMap<Condition, Arc<StimulusPool>>,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    /// Draws session ids and random condition assignments.
    assigner: Mutex<(SimRng, u64)>,
    idle_timeout: Duration,
}

impl AppState {
    pub fn new(config: SessionConfig) -> trustcal_core::Result<Self> {
        config.validate()?;
        let pools = Condition::ALL
            .iter()
            .map(|&c| Ok((c, Arc::new(build_pool(&c.spec(), config.pool_size, config.seed)?))))
            .collect::<trustcal_core::Result<_>>()?;
        Ok(AppState {
            assigner: Mutex::new((rng::stream(config.seed, StreamKind::Server, 0), 0)),
            config,
            pools,
            sessions: Mutex::new(HashMap::new()),
            idle_timeout: IDLE_TIMEOUT,
        })
    }

    pub fn with_idle_timeout(mut self, timeout: Duration) -> Self {
        self.idle_timeout = timeout;
        self
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().expect("sessions lock").len()
    }

    fn evict_idle(&self) {
        let now = Instant::now();
        self.sessions.lock().expect("sessions lock").retain(|_, s| match s.try_lock() {
            Ok(s) => now.duration_since(s.last_active) < self.idle_timeout,
            Err(_) => true,
        });
    }

    fn create(&self, choice: ConditionChoice) -> Arc<Mutex<Session>> {
        self.evict_idle();
        let (id, condition, index) = {
            let mut guard = self.assigner.lock().expect("assigner lock");
            let (rng, counter) = &mut *guard;
            let condition = match choice {
                ConditionChoice::Fixed(c) => c,
                ConditionChoice::Random => Condition::ALL[rng.random_range(0..4)],
            };
            let id = format!("{:016x}", rng.random::<u64>());
            *counter += 1;
            (id, condition, *counter)
        };
        let session = Session::new(
            id.clone(),
            self.config.clone(),
            condition,
            Arc::clone(&self.pools[&condition]),
            rng::stream(self.config.seed, StreamKind::Session, index),
        );
        let session = Arc::new(Mutex::new(session));
        self.sessions.lock().expect("sessions lock").insert(id, Arc::clone(&session));
        session
    }

    fn get(&self, id: &str) -> Option<Arc<Mutex<Session>>> {
        self.sessions.lock().expect("sessions lock").get(id).cloned()
    }
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn not_found(id: &str) -> Response {
    error(StatusCode::NOT_FOUND, format!("unknown session `{id}`"))
}

fn conflict(e: SessionError) -> Response {
    error(StatusCode::CONFLICT, e.message())
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    #[serde(default)]
    condition: Option<String>,
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let request: CreateRequest = if body.iter().all(u8::is_ascii_whitespace) {
        CreateRequest::default()
    } else {
        match serde_json::from_slice(&body) {
            Ok(r) => r,
            Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed body: {e}")),
        }
    };
    let choice = match request.condition.as_deref() {
        None => state.config.condition,
        Some("random") => ConditionChoice::Random,
        Some(label) => match label.parse::<Condition>() {
            Ok(c) => ConditionChoice::Fixed(c),
            Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
        },
    };
    let session = state.create(choice);
    let session = session.lock().expect("session lock");
    (
        StatusCode::CREATED,
        Json(json!({
            "session_id": session.id,
            "n_trials": session.config.n_trials,
            "condition_hidden": true,
        })),
    )
        .into_response()
}

async fn get_trial(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    let Some(session) = state.get(&id) else {
        return not_found(&id);
    };
    let mut session = session.lock().expect("session lock");
    match session.trial() {
        Ok(view) => Json(view).into_response(),
        Err(e) => conflict(e),
    }
}

async fn post_judgment(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> Response {
    let Some(session) = state.get(&id) else {
        return not_found(&id);
    };
    let judgment: Judgment = match serde_json::from_slice(&body) {
        Ok(j) => j,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed body: {e}")),
    };
    let mut session = session.lock().expect("session lock");
    match session.judge(judgment) {
        Ok(feedback) => Json(feedback).into_response(),
        Err(e) => conflict(e),
    }
}

async fn export(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    let Some(session) = state.get(&id) else {
        return not_found(&id);
    };
    let csv = session.lock().expect("session lock").export_csv();
    ([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv).into_response()
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}/trial", get(get_trial))
        .route("/api/sessions/{id}/judgment", post(post_judgment))
        .route("/api/sessions/{id}/export", get(export))
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    serve_on(listener, state).await
}

/// Serves on an already-bound listener.
pub async fn serve_on(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
