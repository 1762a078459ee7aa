//! What a session shows next and what each submission appends.

use rlfd_core::experiment::{
    replay, score_phase, ExperimentResult, Group, PhaseLearning, PhaseResult, ProtocolSettings,
};
use rlfd_core::lspi::{policy_from_theta, rollout_policy, LinearPolicy, TrajectoryPoint};
use rlfd_core::record::{RevealMode, SessionEvent, SessionRecord, SessionStatus, RECORD_SCHEMA_VERSION};
use rlfd_core::skills::{SkillConfig, SkillSpec, State};
use rlfd_core::teaching::{guidance_text, ideal_rewards, optimal_policy, Keyframe, SliderSpec, TEACHING_DIMENSION};
use rlfd_core::Phase;
use serde::{Deserialize, Serialize};

use crate::config::{GridSpec, ServiceConfig};
use crate::error::{ServiceError, ServiceResult};
use crate::store::PhasePlan;

/// Guidance shown to guided trainees in training phases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Guidance {
    pub text: String,
    /// Present in the payload only when the session reveals guidance live.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ideal_reward: Option<f64>,
}

/// Everything the interface needs to present one keyframe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePayload {
    pub schema_version: u32,
    pub session_id: String,
    pub phase: Phase,
    pub demo_index: usize,
    pub demos_per_phase: usize,
    pub skill: SkillConfig,
    pub keyframe: Keyframe,
    pub slider: SliderSpec,
    pub grid: GridSpec,
    /// Radius of the circle of reachable actions, in mm.
    pub action_radius_mm: f64,
    pub workspace_halfwidth_mm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guidance: Option<Guidance>,
}

/// Ideal reward of the keyframe just rewarded, sent after the commit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Feedback {
    pub ideal_reward: f64,
}

/// The learned closed loop, or why there is none.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum LearnedTrajectory {
    Ok { points: Vec<TrajectoryPoint> },
    PolicyFailed { reason: String },
}

/// Learned and optimal rollouts from one start, in workspace coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryView {
    pub phase: Phase,
    pub start: State,
    pub horizon: usize,
    pub learned: LearnedTrajectory,
    pub reference: Vec<TrajectoryPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseOutcome {
    pub result: PhaseResult,
    pub trajectory: TrajectoryView,
}

pub fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

fn check_active(record: &SessionRecord) -> ServiceResult<Phase> {
    match record.status {
        SessionStatus::Active => record
            .current_phase()
            .ok_or_else(|| ServiceError::Conflict("all phases are complete".into())),
        SessionStatus::Completed => Err(ServiceError::Gone("completed".into())),
        SessionStatus::Abandoned => Err(ServiceError::Gone("abandoned".into())),
    }
}

/// The keyframe awaiting a reward.
pub fn current_payload(record: &SessionRecord, plan: &PhasePlan, config: &ServiceConfig) -> ServiceResult<PhasePayload> {
    let phase = check_active(record)?;
    let index = record.pending.len();
    if index >= TEACHING_DIMENSION {
        return Err(ServiceError::Conflict(format!("{phase} is waiting to be scored")));
    }
    Ok(payload(record, plan, config, phase, index))
}

fn payload(record: &SessionRecord, plan: &PhasePlan, config: &ServiceConfig, phase: Phase, index: usize) -> PhasePayload {
    let skill = record.settings.skill(phase);
    let keyframes = &plan[phase.index()].0;
    let guidance = record.group.sees_guidance(phase).then(|| Guidance {
        text: guidance_text(phase).to_string(),
        ideal_reward: (record.reveal == RevealMode::Live).then(|| ideal_rewards(skill, &keyframes[index..=index])[0]),
    });
    PhasePayload {
        schema_version: RECORD_SCHEMA_VERSION,
        session_id: record.session_id.clone(),
        phase,
        demo_index: index,
        demos_per_phase: TEACHING_DIMENSION,
        skill: skill.to_config(),
        keyframe: keyframes[index],
        slider: record.settings.slider,
        grid: config.grid,
        action_radius_mm: skill.u_max(),
        workspace_halfwidth_mm: skill.workspace_halfwidth(),
        guidance,
    }
}

/// What a submission appends and what it reveals.
pub struct Submitted {
    pub feedback: Option<Feedback>,
    pub completed: Option<PhaseResult>,
}

/// Checks one reward against the record and builds the events it causes:
/// the reward itself and, after the last keyframe of a phase, the scored
/// phase and possibly the end of the session.
pub fn submit(
    record: &SessionRecord,
    plan: &PhasePlan,
    phase: Phase,
    index: usize,
    reward: f64,
) -> ServiceResult<(Vec<SessionEvent>, Submitted)> {
    let current = check_active(record)?;
    if phase != current {
        return Err(ServiceError::Conflict(format!("session is in {current}, not {phase}")));
    }
    let expected = record.pending.len();
    if index != expected {
        return Err(ServiceError::Conflict(format!("{current} expects demo index {expected}, got {index}")));
    }
    let slider = &record.settings.slider;
    if !(reward.is_finite() && slider.contains(reward)) {
        return Err(ServiceError::Invalid(format!(
            "reward {reward} outside the slider range [{}, {}]",
            slider.min, slider.max
        )));
    }
    let mut events = vec![SessionEvent::RewardSubmitted {
        phase,
        index,
        reward,
        at_ms: now_ms(),
    }];
    let mut next = record.clone();
    next.apply(&events[0])?;
    let feedback = record.group.sees_guidance(phase).then(|| Feedback {
        ideal_reward: ideal_rewards(record.settings.skill(phase), &plan[phase.index()].0[index..=index])[0],
    });
    let closing = settle(&next, plan)?;
    let completed = closing.iter().find_map(|e| match e {
        SessionEvent::PhaseCompleted { result, .. } => Some(result.clone()),
        _ => None,
    });
    events.extend(closing);
    Ok((events, Submitted { feedback, completed }))
}

/// Events that bring an active record whose last phase has all its rewards
/// up to date: the phase's score and, after P9, completion. Empty when
/// there is nothing to do.
pub fn settle(record: &SessionRecord, plan: &PhasePlan) -> ServiceResult<Vec<SessionEvent>> {
    let mut events = Vec::new();
    if record.status != SessionStatus::Active {
        return Ok(events);
    }
    if let Some(phase) = record.current_phase() {
        if record.pending.len() < TEACHING_DIMENSION {
            return Ok(events);
        }
        events.push(score(record, plan, phase)?);
        if phase.next().is_none() {
            events.push(SessionEvent::Completed { at_ms: now_ms() });
        }
    } else if record.phases.len() == Phase::ALL.len() {
        events.push(SessionEvent::Completed { at_ms: now_ms() });
    }
    Ok(events)
}

fn score(record: &SessionRecord, plan: &PhasePlan, phase: Phase) -> ServiceResult<SessionEvent> {
    let (keyframes, conditioning) = plan[phase.index()].clone();
    let skill = record.settings.skill(phase);
    let ideal = record.group.sees_guidance(phase).then(|| ideal_rewards(skill, &keyframes));
    let rewards = record.pending.iter().map(|s| s.reward).collect();
    let result = score_phase(&record.settings, phase, record.group, keyframes, conditioning, rewards)?;
    Ok(SessionEvent::PhaseCompleted {
        phase,
        ideal_rewards: ideal,
        result,
    })
}

/// The learned policy of a scored phase.
fn learned_policy(result: &PhaseResult) -> Result<LinearPolicy, String> {
    match &result.learning {
        PhaseLearning::Learned { outcome, .. } => policy_from_theta(&outcome.theta).map_err(|e| e.to_string()),
        PhaseLearning::NotIdentifiable { reason } | PhaseLearning::Failed { reason } => Err(reason.clone()),
    }
}

fn world_rollout(policy: &LinearPolicy, skill: &SkillSpec, start: State, horizon: usize) -> Vec<TrajectoryPoint> {
    rollout_policy(policy, skill.centre(start), horizon, skill.u_max())
        .into_iter()
        .map(|p| TrajectoryPoint {
            state: skill.uncentre(p.state),
            action: p.action,
        })
        .collect()
}

/// Rolls out a completed phase's learned policy and the optimal policy
/// from `start`.
pub fn trajectory(
    settings: &ProtocolSettings,
    result: &PhaseResult,
    start: [f64; 2],
    horizon: usize,
) -> ServiceResult<TrajectoryView> {
    let skill = settings.skill(result.phase);
    let start = State::in_workspace(start[0], start[1], skill.workspace_halfwidth())
        .map_err(|e| ServiceError::Invalid(e.to_string()))?;
    let reference = world_rollout(&optimal_policy(skill)?, skill, start, horizon);
    let learned = match learned_policy(result) {
        Ok(policy) => LearnedTrajectory::Ok {
            points: world_rollout(&policy, skill, start, horizon),
        },
        Err(reason) => LearnedTrajectory::PolicyFailed { reason },
    };
    Ok(TrajectoryView {
        phase: result.phase,
        start,
        horizon,
        learned,
        reference,
    })
}

/// The scored phase with its trajectory from the configured start.
pub fn outcome(settings: &ProtocolSettings, result: PhaseResult, config: &ServiceConfig) -> ServiceResult<PhaseOutcome> {
    let trajectory = trajectory(settings, &result, config.canonical_start, config.trajectory_horizon)?;
    Ok(PhaseOutcome { result, trajectory })
}

/// Next payload after a submission, if the session is still running.
pub fn next_payload(record: &SessionRecord, plan: &PhasePlan, config: &ServiceConfig) -> Option<PhasePayload> {
    current_payload(record, plan, config).ok()
}

/// The experiment summary of a completed session, recomputed from its log.
pub fn summary(record: &SessionRecord) -> ServiceResult<Option<ExperimentResult>> {
    if record.status != SessionStatus::Completed {
        return Ok(None);
    }
    Ok(Some(replay(record)?))
}

/// Settings for a new session: built-in defaults, then the service
/// defaults, then the request's overrides, each merged key by key.
pub fn session_settings(
    config: &ServiceConfig,
    overrides: &serde_json::Map<String, serde_json::Value>,
) -> ServiceResult<ProtocolSettings> {
    let mut doc = serde_json::to_value(ProtocolSettings::default()).map_err(|e| ServiceError::Invalid(e.to_string()))?;
    let defaults = serde_json::to_value(&config.defaults).map_err(|e| ServiceError::Invalid(e.to_string()))?;
    merge(&mut doc, &defaults);
    merge(&mut doc, &serde_json::Value::Object(overrides.clone()));
    if !overrides.contains_key("seed") {
        let seed = config.seed.unwrap_or_else(|| rand::random::<u64>() >> 11);
        doc["seed"] = seed.into();
    }
    let settings: ProtocolSettings =
        serde_json::from_value(doc).map_err(|e| ServiceError::Invalid(format!("settings: {e}")))?;
    settings.validate().map_err(|e| ServiceError::Invalid(e.to_string()))?;
    Ok(settings)
}

fn merge(base: &mut serde_json::Value, patch: &serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, p) => *b = p.clone(),
    }
}

pub fn new_record(group: Group, reveal: RevealMode, settings: ProtocolSettings) -> SessionRecord {
    let mut record = SessionRecord::new(uuid::Uuid::new_v4().to_string(), group, now_ms(), settings);
    record.reveal = reveal;
    record
}
