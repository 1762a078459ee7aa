//! The teaching oracle: budget-sized keyframe sets, ideal rewards, teaching
//! risk, and the five-phase scaffolding curriculum.
//!
//! With the eight-monomial features the teaching dimension is eight. On any
//! eight keyframes whose LSTD system is well conditioned, rewards equal to
//! the true reward make LSPI recover the optimal parameters exactly, so the
//! ideal training set is constructed directly rather than searched for.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lspi::{
    condition_number, lspi_learn, lstd_system, DemoSet, LearnerConfig, LinearPolicy, ValueParams,
    FEATURE_DIM,
};
use crate::metrics::ade;
use crate::phase::Phase;
use crate::seeds::{derive_seed, rng};
use crate::skills::{solve_riccati, true_reward, Action, SkillKind, SkillSpec, State};

pub const TEACHING_DIMENSION: usize = FEATURE_DIM;

/// Half-width of the box test-phase keyframes are drawn from, in mm.
pub const DEFAULT_KEYFRAME_BOX: f64 = 35.0;

/// A state-action pair the teacher must reward.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub state: State,
    pub action: Action,
}

impl Keyframe {
    pub fn new(state: State, action: Action) -> Self {
        Keyframe { state, action }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyframeSet {
    pub keyframes: Vec<Keyframe>,
    /// Condition number of the LSTD matrix under the optimal policy; `None`
    /// when the matrix is singular.
    pub conditioning: Option<f64>,
}

impl KeyframeSet {
    pub fn len(&self) -> usize {
        self.keyframes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keyframes.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    pub cond_max: f64,
    pub max_attempts: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            cond_max: 1e8,
            max_attempts: 1000,
        }
    }
}

/// Reward slider shown to teachers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliderSpec {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Default for SliderSpec {
    fn default() -> Self {
        SliderSpec {
            min: -100.0,
            max: 0.0,
            step: 0.5,
        }
    }
}

impl SliderSpec {
    pub fn contains(&self, x: f64) -> bool {
        x >= self.min && x <= self.max
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.min, self.max)
    }
}

/// The learner configuration matching a skill's discount.
pub fn learner_config(skill: &SkillSpec) -> LearnerConfig {
    LearnerConfig::with_gamma(skill.gamma())
}

/// The Riccati-optimal policy in the skill frame.
pub fn optimal_policy(skill: &SkillSpec) -> Result<LinearPolicy> {
    Ok(solve_riccati(skill)?.policy())
}

/// Demonstration tuples in the skill frame, which is what the learner sees.
pub fn demo_set(skill: &SkillSpec, keyframes: &[Keyframe], rewards: &[f64]) -> Result<DemoSet> {
    let pairs: Vec<(State, Action)> = keyframes
        .iter()
        .map(|k| (skill.centre(k.state), k.action))
        .collect();
    DemoSet::from_pairs(&pairs, rewards, skill.u_max())
}

fn conditioning_under(skill: &SkillSpec, keyframes: &[Keyframe], policy: &LinearPolicy) -> Result<f64> {
    let demos = demo_set(skill, keyframes, &vec![0.0; keyframes.len()])?;
    let (a, _) = lstd_system(&demos, policy, skill.gamma(), 0.0);
    Ok(condition_number(&a))
}

/// Condition number of the (unregularised) LSTD matrix of `keyframes` under
/// the optimal policy.
pub fn keyframe_conditioning(skill: &SkillSpec, keyframes: &[Keyframe]) -> Result<f64> {
    conditioning_under(skill, keyframes, &optimal_policy(skill)?)
}

/// Uniform keyframes with the default conditioning guard.
pub fn sample_keyframes(skill: &SkillSpec, n: usize, seed: u64, box_halfwidth: f64) -> Result<KeyframeSet> {
    sample_keyframes_with(skill, n, seed, box_halfwidth, &SamplingConfig::default())
}

/// Draws `n` states and actions with every coordinate uniform in
/// `[-box_halfwidth, box_halfwidth]`, redrawing the whole set until its
/// conditioning is at most `cond_max`.
pub fn sample_keyframes_with(
    skill: &SkillSpec,
    n: usize,
    seed: u64,
    box_halfwidth: f64,
    sampling: &SamplingConfig,
) -> Result<KeyframeSet> {
    if n < TEACHING_DIMENSION {
        return Err(Error::InvalidParameter(format!(
            "need at least {TEACHING_DIMENSION} keyframes, got {n}"
        )));
    }
    if !(box_halfwidth.is_finite() && box_halfwidth > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "keyframe box half-width must be positive, got {box_halfwidth}"
        )));
    }
    let policy = optimal_policy(skill)?;
    let mut rng = rng(seed);
    let mut best = f64::INFINITY;
    for _ in 0..sampling.max_attempts {
        let keyframes: Vec<Keyframe> = (0..n)
            .map(|_| {
                let mut draw = || rng.random_range(-box_halfwidth..=box_halfwidth);
                let state = State::new(draw(), draw());
                let action = Action::new(draw(), draw());
                Keyframe { state, action }
            })
            .collect();
        let cond = conditioning_under(skill, &keyframes, &policy)?;
        if cond <= sampling.cond_max {
            return Ok(KeyframeSet {
                keyframes,
                conditioning: Some(cond),
            });
        }
        best = best.min(cond);
    }
    Err(Error::ResampleExhausted {
        attempts: sampling.max_attempts,
        best,
    })
}

pub fn ideal_rewards(skill: &SkillSpec, keyframes: &[Keyframe]) -> Vec<f64> {
    keyframes
        .iter()
        .map(|k| true_reward(skill, k.state, k.action))
        .collect()
}

/// `‖θ − θ*‖₂`.
pub fn teaching_risk(theta: &ValueParams, theta_star: &ValueParams) -> f64 {
    theta.distance(theta_star)
}

/// Result of learning from one set of submitted rewards.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeachingOutcome {
    pub theta: ValueParams,
    /// What LSPI learns from the ideal rewards on the same keyframes.
    pub theta_star: ValueParams,
    pub risk: f64,
    pub ade: f64,
    /// Both LSPI runs converged.
    pub converged: bool,
    pub iterations: usize,
    /// Admissibility repairs applied while learning from the submission.
    pub repairs: usize,
}

/// Learns from the submitted and from the ideal rewards and compares them.
pub fn evaluate_submission(
    skill: &SkillSpec,
    keyframes: &[Keyframe],
    submitted: &[f64],
    config: &LearnerConfig,
) -> Result<TeachingOutcome> {
    if submitted.len() != keyframes.len() {
        return Err(Error::LengthMismatch {
            expected: keyframes.len(),
            actual: submitted.len(),
        });
    }
    if submitted.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidParameter("submitted rewards must be finite".into()));
    }
    let ideal = ideal_rewards(skill, keyframes);
    let learned = lspi_learn(&demo_set(skill, keyframes, submitted)?, config, ValueParams::DEFAULT_INIT)
        .map_err(|e| e.context("learning from submitted rewards"))?;
    let reference = lspi_learn(&demo_set(skill, keyframes, &ideal)?, config, ValueParams::DEFAULT_INIT)
        .map_err(|e| e.context("learning from ideal rewards"))?;
    Ok(TeachingOutcome {
        theta: learned.theta,
        theta_star: reference.theta,
        risk: teaching_risk(&learned.theta, &reference.theta),
        ade: ade(submitted, &ideal)?,
        converged: learned.converged && reference.converged,
        iterations: learned.iterations,
        repairs: learned.repairs,
    })
}

/// Geometry of the scaffolding curriculum, in mm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumParams {
    /// Radius of the equidistant states (P3, P4).
    pub rho_eq: f64,
    /// Action magnitude held fixed in P3–P5 and the first P6 keyframe.
    pub a_eq: f64,
    /// Radii swept in P5.
    pub rho_min: f64,
    pub rho_max: f64,
    /// Largest P6 action; must equal `rho_max` so the last action lands on
    /// the target.
    pub a_reach: f64,
    /// Box half-width for the random P7 keyframes.
    pub random_box_halfwidth: f64,
}

impl Default for CurriculumParams {
    fn default() -> Self {
        CurriculumParams {
            rho_eq: 30.0,
            a_eq: 10.0,
            rho_min: 10.0,
            rho_max: 70.71,
            a_reach: 70.71,
            random_box_halfwidth: DEFAULT_KEYFRAME_BOX,
        }
    }
}

impl CurriculumParams {
    fn validate(&self, skill: &SkillSpec) -> Result<()> {
        let positive = [
            ("rho_eq", self.rho_eq),
            ("a_eq", self.a_eq),
            ("rho_min", self.rho_min),
            ("random_box_halfwidth", self.random_box_halfwidth),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.rho_max > self.rho_min) {
            return Err(Error::InvalidParameter("rho_max must exceed rho_min".into()));
        }
        if !(self.a_reach > self.a_eq) {
            return Err(Error::InvalidParameter("a_reach must exceed a_eq".into()));
        }
        if (self.a_reach - self.rho_max).abs() > 1e-9 * self.rho_max {
            return Err(Error::InvalidParameter(format!(
                "a_reach ({}) must equal rho_max ({}) for the final action to reach the target",
                self.a_reach, self.rho_max
            )));
        }
        if self.a_reach > skill.u_max() {
            return Err(Error::InvalidParameter(format!(
                "a_reach ({}) exceeds u_max ({})",
                self.a_reach,
                skill.u_max()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurriculumPhase {
    pub phase: Phase,
    pub keyframes: KeyframeSet,
    pub ideal_rewards: Vec<f64>,
    pub guidance_text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curriculum {
    pub phases: Vec<CurriculumPhase>,
    pub slider: SliderSpec,
}

impl Curriculum {
    pub fn phase(&self, phase: Phase) -> Option<&CurriculumPhase> {
        self.phases.iter().find(|p| p.phase == phase)
    }
}

pub fn guidance_text(phase: Phase) -> &'static str {
    match phase {
        Phase::P3 => "Every state here is the same distance from the target and every action is the same size, aimed at the target. Give them all the same reward.",
        Phase::P4 => "The state and the action size stay fixed while the action turns. Only the size of an action is penalised, so its direction should not change your reward.",
        Phase::P5 => "The action stays the same while the state moves away from the target. The further away the state, the lower the reward.",
        Phase::P6 => "The state stays at the far edge while the action grows. Bigger actions are penalised even when they land on the target, so the last one earns the lowest reward. The reward is a state part plus an action part.",
        Phase::P7 => "Random states and actions. Combine the distance part and the action-size part yourself.",
        _ => "",
    }
}

fn polar(target: State, angle: f64, radius: f64) -> State {
    let (sin, cos) = angle.sin_cos();
    State::new(target.r1 + radius * cos, target.r2 + radius * sin)
}

fn toward_target(angle: f64, magnitude: f64) -> Action {
    let (sin, cos) = angle.sin_cos();
    Action::new(-magnitude * cos, -magnitude * sin)
}

fn lerp(lo: f64, hi: f64, i: usize, n: usize) -> f64 {
    if i + 1 == n {
        hi
    } else {
        lo + (hi - lo) * (i as f64) / ((n - 1) as f64)
    }
}

/// Generates the P3–P7 keyframes for a point-reaching skill.
///
/// The seed sets the angular placement of P3–P6 (P5/P6 lie on a workspace
/// diagonal so that `rho_max` fits inside the box) and the random P7 pairs.
pub fn build_curriculum(skill: &SkillSpec, params: &CurriculumParams, seed: u64) -> Result<Curriculum> {
    let target = match skill.kind() {
        SkillKind::PointReach { target } => target,
        SkillKind::LineReach { .. } => {
            return Err(Error::InvalidParameter(
                "the curriculum is defined for point-reaching skills".into(),
            ))
        }
    };
    params.validate(skill)?;
    let n = TEACHING_DIMENSION;
    let mut rng = rng(derive_seed(seed, 0, 0));
    let p3_offset = rng.random_range(0.0..2.0 * PI);
    let p4_angle = rng.random_range(0.0..2.0 * PI);
    let p4_offset = rng.random_range(0.0..2.0 * PI);
    let diagonal = FRAC_PI_4 + FRAC_PI_2 * rng.random_range(0..4u32) as f64;

    let step = 2.0 * PI / n as f64;
    let p3: Vec<Keyframe> = (0..n)
        .map(|i| {
            let angle = p3_offset + step * i as f64;
            Keyframe::new(polar(target, angle, params.rho_eq), toward_target(angle, params.a_eq))
        })
        .collect();

    let p4_state = polar(target, p4_angle, params.rho_eq);
    let p4: Vec<Keyframe> = (0..n)
        .map(|i| {
            let (sin, cos) = (p4_offset + step * i as f64).sin_cos();
            Keyframe::new(p4_state, Action::new(params.a_eq * cos, params.a_eq * sin))
        })
        .collect();

    let p5: Vec<Keyframe> = (0..n)
        .map(|i| {
            let rho = lerp(params.rho_min, params.rho_max, i, n);
            Keyframe::new(polar(target, diagonal, rho), toward_target(diagonal, params.a_eq))
        })
        .collect();

    let splice = p5[n - 1];
    let p6: Vec<Keyframe> = (0..n)
        .map(|i| {
            let action = if i == 0 {
                splice.action
            } else if i + 1 == n {
                skill.reaching_action(splice.state)
            } else {
                toward_target(diagonal, lerp(params.a_eq, params.a_reach, i, n))
            };
            Keyframe::new(splice.state, action)
        })
        .collect();

    let halfwidth = skill.workspace_halfwidth();
    for k in p3.iter().chain(&p4).chain(&p5) {
        if !k.state.within(halfwidth) {
            return Err(Error::InvalidParameter(format!(
                "curriculum state ({:.2}, {:.2}) lies outside the ±{halfwidth} mm workspace",
                k.state.r1, k.state.r2
            )));
        }
    }

    let p7 = sample_keyframes(skill, n, derive_seed(seed, 7, 0), params.random_box_halfwidth)?;

    let policy = optimal_policy(skill)?;
    let mut phases = Vec::with_capacity(5);
    for (phase, keyframes) in [
        (Phase::P3, p3),
        (Phase::P4, p4),
        (Phase::P5, p5),
        (Phase::P6, p6),
    ] {
        let cond = conditioning_under(skill, &keyframes, &policy)?;
        phases.push(CurriculumPhase {
            phase,
            ideal_rewards: ideal_rewards(skill, &keyframes),
            keyframes: KeyframeSet {
                keyframes,
                conditioning: cond.is_finite().then_some(cond),
            },
            guidance_text: guidance_text(phase).to_string(),
        });
    }
    phases.push(CurriculumPhase {
        phase: Phase::P7,
        ideal_rewards: ideal_rewards(skill, &p7.keyframes),
        keyframes: p7,
        guidance_text: guidance_text(Phase::P7).to_string(),
    });
    Ok(Curriculum {
        phases,
        slider: SliderSpec::default(),
    })
}
