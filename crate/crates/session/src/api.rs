//! HTTP endpoints, all under `/api/v1`, with JSON bodies.
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/sessions` | create a session, returns the P1 payload |
//! | GET | `/sessions` | list sessions |
//! | GET | `/sessions/{id}` | full session record |
//! | GET | `/sessions/{id}/payload` | keyframe awaiting a reward |
//! | POST | `/sessions/{id}/rewards` | submit one reward |
//! | POST | `/sessions/{id}/abandon` | end a session early |
//! | GET | `/sessions/{id}/phases/{phase}/trajectory?r1=&r2=` | learned and optimal rollouts |
//!
//! Errors are `{"error": {"code", "message"}}` with status 404 (unknown
//! session), 409 (out-of-order submission, phase not yet scored), 410
//! (session completed or abandoned), 422 (invalid body or values).

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use rlfd_core::experiment::{ExperimentResult, Group};
use rlfd_core::record::{RevealMode, SessionEvent, SessionRecord, SessionStatus};
use rlfd_core::Phase;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::ServiceConfig;
use crate::error::{ServiceError, ServiceResult};
use crate::protocol::{self, Feedback, PhaseOutcome, PhasePayload, TrajectoryView};
use crate::store::{phase_plan, Store};

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    config: ServiceConfig,
    store: Store,
}

impl AppState {
    /// Opens the storage directory and finishes any phase whose last reward
    /// was logged before an interruption.
    pub async fn open(config: ServiceConfig) -> ServiceResult<Self> {
        config.validate()?;
        let store = Store::open(&config.storage_dir)?;
        for handle in store.handles() {
            handle.mutate(|record, plan| Ok((protocol::settle(record, plan)?, ()))).await?;
        }
        Ok(AppState {
            inner: Arc::new(Inner { config, store }),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.inner.config
    }

    pub fn store(&self) -> &Store {
        &self.inner.store
    }
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/payload", get(get_payload))
        .route("/sessions/{id}/rewards", post(submit_reward))
        .route("/sessions/{id}/abandon", post(abandon_session))
        .route("/sessions/{id}/phases/{phase}/trajectory", get(get_trajectory));
    Router::new().nest("/api/v1", api).with_state(state)
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ServiceResult<T> {
    serde_json::from_slice(body).map_err(|e| ServiceError::Invalid(format!("request body: {e}")))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    pub group: Group,
    #[serde(default)]
    pub reveal: Option<RevealMode>,
    /// Partial protocol settings merged over the service defaults.
    #[serde(default)]
    pub overrides: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreateResponse {
    pub session_id: String,
    pub group: Group,
    pub reveal: RevealMode,
    pub seed: u64,
    pub status: SessionStatus,
    pub payload: PhasePayload,
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> ServiceResult<impl IntoResponse> {
    let req: CreateRequest = parse_body(&body)?;
    let settings = protocol::session_settings(state.config(), &req.overrides)?;
    let reveal = req.reveal.unwrap_or(state.config().reveal);
    let record = protocol::new_record(req.group, reveal, settings);
    let plan = phase_plan(&record).map_err(|e| ServiceError::Invalid(e.to_string()))?;
    let payload = protocol::current_payload(&record, &plan, state.config())?;
    state.store().create(record.clone(), plan)?;
    tracing::info!(session = %record.session_id, group = %record.group, "session created");
    let response = CreateResponse {
        session_id: record.session_id,
        group: record.group,
        reveal,
        seed: record.settings.seed,
        status: record.status,
        payload,
    };
    Ok((StatusCode::CREATED, Json(response)))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub group: Group,
    pub status: SessionStatus,
    pub created_at_ms: u64,
    pub completed_phases: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub current_phase: Option<Phase>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demo_index: Option<usize>,
}

impl From<&SessionRecord> for SessionSummary {
    fn from(r: &SessionRecord) -> Self {
        let current_phase = r.current_phase();
        SessionSummary {
            session_id: r.session_id.clone(),
            group: r.group,
            status: r.status,
            created_at_ms: r.created_at_ms,
            completed_phases: r.phases.len(),
            current_phase,
            demo_index: current_phase.map(|_| r.pending.len()),
        }
    }
}

async fn list_sessions(State(state): State<AppState>) -> Json<Vec<SessionSummary>> {
    let mut out: Vec<SessionSummary> = state
        .store()
        .handles()
        .iter()
        .map(|h| SessionSummary::from(h.snapshot().as_ref()))
        .collect();
    out.sort_by(|a, b| (a.created_at_ms, &a.session_id).cmp(&(b.created_at_ms, &b.session_id)));
    Json(out)
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> ServiceResult<Json<SessionRecord>> {
    let record = state.store().get(&id)?.snapshot();
    Ok(Json(record.as_ref().clone()))
}

async fn get_payload(State(state): State<AppState>, Path(id): Path<String>) -> ServiceResult<Json<PhasePayload>> {
    let handle = state.store().get(&id)?;
    Ok(Json(protocol::current_payload(&handle.snapshot(), handle.plan(), state.config())?))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmitRequest {
    pub phase: Phase,
    pub demo_index: usize,
    pub reward: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub session_id: String,
    pub accepted: SubmitRequest,
    pub status: SessionStatus,
    /// Ideal reward of the keyframe just rewarded; guided training phases only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guidance: Option<Feedback>,
    /// Present after the last keyframe of a phase.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_outcome: Option<PhaseOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next: Option<PhasePayload>,
    /// Present once the last phase is scored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<ExperimentResult>,
}

async fn submit_reward(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ServiceResult<Json<SubmitResponse>> {
    let req: SubmitRequest = parse_body(&body)?;
    let handle = state.store().get(&id)?;
    let (record, submitted) = handle
        .mutate(|record, plan| protocol::submit(record, plan, req.phase, req.demo_index, req.reward))
        .await?;
    let config = state.config();
    let phase_outcome = submitted
        .completed
        .map(|result| protocol::outcome(&record.settings, result, config))
        .transpose()?;
    Ok(Json(SubmitResponse {
        session_id: record.session_id.clone(),
        accepted: req,
        status: record.status,
        guidance: submitted.feedback,
        phase_outcome,
        next: protocol::next_payload(&record, handle.plan(), config),
        summary: protocol::summary(&record)?,
    }))
}

async fn abandon_session(State(state): State<AppState>, Path(id): Path<String>) -> ServiceResult<Json<SessionSummary>> {
    let handle = state.store().get(&id)?;
    let (record, ()) = handle
        .mutate(|record, _| match record.status {
            SessionStatus::Active => Ok((vec![SessionEvent::Abandoned { at_ms: protocol::now_ms() }], ())),
            SessionStatus::Completed => Err(ServiceError::Gone("completed".into())),
            SessionStatus::Abandoned => Err(ServiceError::Gone("abandoned".into())),
        })
        .await?;
    Ok(Json(SessionSummary::from(record.as_ref())))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartQuery {
    pub r1: Option<f64>,
    pub r2: Option<f64>,
}

async fn get_trajectory(
    State(state): State<AppState>,
    Path((id, phase)): Path<(String, String)>,
    query: Result<Query<StartQuery>, axum::extract::rejection::QueryRejection>,
) -> ServiceResult<Json<TrajectoryView>> {
    let Query(query) = query.map_err(|e| ServiceError::Invalid(e.body_text()))?;
    let phase: Phase = phase.parse().map_err(|e: rlfd_core::Error| ServiceError::Invalid(e.to_string()))?;
    let record = state.store().get(&id)?.snapshot();
    let entry = record
        .entry(phase)
        .ok_or_else(|| ServiceError::Conflict(format!("{phase} has not been completed")))?;
    let config = state.config();
    let start = match (query.r1, query.r2) {
        (Some(r1), Some(r2)) => [r1, r2],
        (None, None) => config.canonical_start,
        _ => return Err(ServiceError::Invalid("give both r1 and r2, or neither".into())),
    };
    Ok(Json(protocol::trajectory(
        &record.settings,
        &entry.result,
        start,
        config.trajectory_horizon,
    )?))
}
