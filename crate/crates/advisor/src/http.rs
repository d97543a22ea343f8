use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{json, Value};

use crate::config::CreateRequest;
use crate::error::ApiError;
use crate::session::{Event, LoggedEvent, RankRow, Recommendation, Session};
use crate::store::{now_ms, Store};
use alt_planner_core::policy::Decision;
use alt_planner_core::{Observation, PosteriorState};

type Shared = State<Arc<Store>>;

pub fn routes(store: Arc<Store>) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/import", post(import_session))
        .route("/sessions/{id}", get(get_state))
        .route("/sessions/{id}/recommendation", get(get_recommendation))
        .route(
            "/sessions/{id}/recommendation/void",
            post(void_recommendation),
        )
        .route("/sessions/{id}/observations", post(post_observation))
        .route("/sessions/{id}/export", get(export_session))
        .with_state(store)
}

fn parse_body<T: for<'de> Deserialize<'de>>(
    body: &[u8],
    status: fn(String) -> ApiError,
) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| status(e.to_string()))
}

fn new_session_id() -> String {
    format!("{:032x}", rand::random::<u128>())
}

#[derive(Serialize)]
struct Created {
    session_id: String,
}

async fn create_session(
    State(store): Shared,
    body: Bytes,
) -> Result<(StatusCode, Json<Created>), ApiError> {
    let req: CreateRequest = parse_body(&body, ApiError::BadRequest)?;
    let config = req.resolve()?;
    let id = new_session_id();
    store.insert(Session::created(&id, config, now_ms())?)?;
    tracing::info!(session = %id, "created session");
    Ok((StatusCode::CREATED, Json(Created { session_id: id })))
}

async fn list_sessions(State(store): Shared) -> Json<Value> {
    Json(json!({ "sessions": store.ids() }))
}

#[derive(Serialize)]
struct RecommendationView {
    design: alt_planner_core::DesignPoint,
    cell: alt_planner_core::policy::GridCell,
    ei_value: Option<f64>,
    best_index: usize,
    ranking: Vec<RankRow>,
}

/// Serves the outstanding recommendation, creating one if none is pending.
async fn get_recommendation(
    State(store): Shared,
    Path(id): Path<String>,
) -> Result<Json<RecommendationView>, ApiError> {
    let handle = store.get(&id)?;
    let mut session = handle.lock().expect("session lock poisoned");
    if session.outstanding.is_none() {
        let event = session.propose()?;
        let ev = session.next_event(event, now_ms());
        store.append(&mut session, ev)?;
    }
    let Recommendation {
        cell,
        design,
        ei_value,
    } = session.outstanding.clone().expect("just ensured");
    Ok(Json(RecommendationView {
        design,
        cell,
        ei_value,
        best_index: session.best_index()?,
        ranking: session.ranking()?,
    }))
}

async fn void_recommendation(
    State(store): Shared,
    Path(id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    let handle = store.get(&id)?;
    let mut session = handle.lock().expect("session lock poisoned");
    let rec = session
        .outstanding
        .clone()
        .ok_or_else(|| ApiError::Conflict("no outstanding recommendation".into()))?;
    let ev = session.next_event(Event::Voided { cell: rec.cell }, now_ms());
    store.append(&mut session, ev)?;
    Ok(Json(json!({ "voided": rec })))
}

/// Accepts `null` as a value while still requiring the key.
fn required_nullable<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Option<f64>>, D::Error> {
    Option::<f64>::deserialize(d).map(Some)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ObservationBody {
    /// Time to failure, or `null` when the unit survived to `tau`.
    #[serde(default, deserialize_with = "required_nullable")]
    lifetime: Option<Option<f64>>,
    #[serde(default)]
    tau: Option<f64>,
}

#[derive(Serialize)]
struct ObservationView {
    observation: Observation,
    censored: bool,
    decision: Decision,
    ranking: Vec<RankRow>,
}

async fn post_observation(
    State(store): Shared,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<ObservationView>, ApiError> {
    let body: ObservationBody = parse_body(&body, ApiError::Unprocessable)?;
    let lifetime = body.lifetime.ok_or_else(|| {
        ApiError::Unprocessable("lifetime: required (null for a censored run)".into())
    })?;
    let handle = store.get(&id)?;
    let mut session = handle.lock().expect("session lock poisoned");
    let observation = session.observation(lifetime, body.tau)?;
    let ev = session.next_event(
        Event::Observed {
            observation: observation.clone(),
        },
        now_ms(),
    );
    store.append(&mut session, ev)?;
    let decision = session.decide()?;
    let ev = session.next_event(Event::Decided { decision }, now_ms());
    store.append(&mut session, ev)?;
    Ok(Json(ObservationView {
        censored: observation.is_censored(),
        observation,
        decision,
        ranking: session.ranking()?,
    }))
}

#[derive(Serialize)]
struct StateView<'a> {
    session_id: &'a str,
    config: &'a crate::config::SessionConfig,
    belief: &'a PosteriorState,
    ranking: Vec<RankRow>,
    best_index: usize,
    decision: Option<Decision>,
    outstanding: Option<&'a Recommendation>,
    observations: usize,
    events: &'a [LoggedEvent],
}

async fn get_state(State(store): Shared, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let handle = store.get(&id)?;
    let session = handle.lock().expect("session lock poisoned");
    let view = StateView {
        session_id: &session.id,
        config: &session.config,
        belief: &session.belief,
        ranking: session.ranking()?,
        best_index: session.best_index()?,
        decision: session.decision,
        outstanding: session.outstanding.as_ref(),
        observations: session.data.len() - session.config.history.len(),
        events: &session.events,
    };
    Ok(Json(
        serde_json::to_value(view).map_err(|e| ApiError::Unprocessable(e.to_string()))?,
    ))
}

/// Portable form of a session: its id and complete event log.
#[derive(Debug, Serialize, Deserialize)]
pub struct SessionExport {
    pub session_id: String,
    pub events: Vec<LoggedEvent>,
}

async fn export_session(
    State(store): Shared,
    Path(id): Path<String>,
) -> Result<Json<SessionExport>, ApiError> {
    let handle = store.get(&id)?;
    let session = handle.lock().expect("session lock poisoned");
    Ok(Json(SessionExport {
        session_id: session.id.clone(),
        events: session.events.clone(),
    }))
}

/// Recreates a session from an export, keeping its id.
async fn import_session(
    State(store): Shared,
    body: Bytes,
) -> Result<(StatusCode, Json<Created>), ApiError> {
    let export: SessionExport = parse_body(&body, ApiError::BadRequest)?;
    let session = Session::replay(&export.session_id, export.events)?;
    store.insert(session)?;
    Ok((
        StatusCode::CREATED,
        Json(Created {
            session_id: export.session_id,
        }),
    ))
}
