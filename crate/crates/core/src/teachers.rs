//! Simulated teachers and the supervised-demonstration baseline.
//!
//! Reward-giving teachers are a blend of three terms:
//!
//! ```text
//! ĉ = clamp( w_true·c*(s,a) − w_dist·dist(step(s,a), goal) + N(0, σ²) )
//! ```
//!
//! `Oracle` is `(1, 0, 0)`, `TrainedNoisy` is `(1, 0, σ)` and
//! `UntrainedBiased` is `(0, w_d, σ)`: a novice who scores an action only by
//! how close it lands to the goal, ignoring the action cost.

use nalgebra::Matrix2;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lspi::LinearPolicy;
use crate::phase::Phase;
use crate::seeds::{derive_seed, rng};
use crate::skills::{true_reward, Action, SkillSpec, State};
use crate::teaching::{optimal_policy, Keyframe, SliderSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeacherKind {
    Oracle,
    TrainedNoisy,
    UntrainedBiased,
    Custom,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherModel {
    pub kind: TeacherKind,
    /// Reward noise, in reward units.
    #[serde(default)]
    pub noise_sd: f64,
    /// `w_true`: weight on the true reward (`Custom` only).
    #[serde(default)]
    pub true_weight: f64,
    /// `w_d`, per mm: weight on post-action distance to the goal.
    #[serde(default)]
    pub distance_weight: f64,
    /// Noise on demonstrated actions in supervised mode, in mm.
    #[serde(default = "default_action_noise")]
    pub action_noise_sd: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_action_noise() -> f64 {
    1.0
}

impl TeacherModel {
    pub fn oracle() -> Self {
        TeacherModel {
            kind: TeacherKind::Oracle,
            noise_sd: 0.0,
            true_weight: 1.0,
            distance_weight: 0.0,
            action_noise_sd: 0.0,
            seed: 0,
        }
    }

    /// Default `noise_sd` is 1.0.
    pub fn trained_noisy(noise_sd: f64) -> Self {
        TeacherModel {
            kind: TeacherKind::TrainedNoisy,
            noise_sd,
            true_weight: 1.0,
            distance_weight: 0.0,
            action_noise_sd: default_action_noise(),
            seed: 0,
        }
    }

    /// Defaults are `w_d = 1.0`, `noise_sd = 2.0`.
    pub fn untrained_biased(distance_weight: f64, noise_sd: f64) -> Self {
        TeacherModel {
            kind: TeacherKind::UntrainedBiased,
            noise_sd,
            true_weight: 0.0,
            distance_weight,
            action_noise_sd: default_action_noise(),
            seed: 0,
        }
    }

    pub fn custom(true_weight: f64, distance_weight: f64, noise_sd: f64) -> Self {
        TeacherModel {
            kind: TeacherKind::Custom,
            noise_sd,
            true_weight,
            distance_weight,
            action_noise_sd: default_action_noise(),
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_action_noise(mut self, sd: f64) -> Self {
        self.action_noise_sd = sd;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("noise_sd", self.noise_sd), ("action_noise_sd", self.action_noise_sd)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !self.true_weight.is_finite() || !self.distance_weight.is_finite() {
            return Err(Error::InvalidParameter("teacher weights must be finite".into()));
        }
        Ok(())
    }

    /// `(w_true, w_dist)` as used by the reward blend.
    fn weights(&self) -> (f64, f64) {
        match self.kind {
            TeacherKind::Oracle | TeacherKind::TrainedNoisy => (1.0, 0.0),
            TeacherKind::UntrainedBiased => (0.0, self.distance_weight),
            TeacherKind::Custom => (self.true_weight, self.distance_weight),
        }
    }

    fn reward_noise(&self) -> f64 {
        match self.kind {
            TeacherKind::Oracle => 0.0,
            _ => self.noise_sd,
        }
    }

    fn action_noise(&self) -> f64 {
        match self.kind {
            TeacherKind::Oracle => 0.0,
            _ => self.action_noise_sd,
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    if sd > 0.0 {
        Normal::new(0.0, sd).map(|n| n.sample(rng)).unwrap_or(0.0)
    } else {
        0.0
    }
}

/// One reward from a simulated teacher, clamped to the slider.
pub fn teacher_reward(
    model: &TeacherModel,
    skill: &SkillSpec,
    s: State,
    a: Action,
    slider: &SliderSpec,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let (w_true, w_dist) = model.weights();
    let mut c = 0.0;
    if w_true != 0.0 {
        c += w_true * true_reward(skill, s, a);
    }
    if w_dist != 0.0 {
        c -= w_dist * skill.goal_distance(skill.step(s, a));
    }
    slider.clamp(c + gaussian(rng, model.reward_noise()))
}

/// Noise stream of one teacher within one phase.
pub fn session_rng(model: &TeacherModel, phase: Phase) -> ChaCha8Rng {
    rng(derive_seed(model.seed, 1000 + phase.index() as u64, 0))
}

/// Rewards for every keyframe of a phase, in order.
pub fn run_simulated_session(
    model: &TeacherModel,
    phase: Phase,
    skill: &SkillSpec,
    keyframes: &[Keyframe],
    slider: &SliderSpec,
) -> Vec<f64> {
    let mut rng = session_rng(model, phase);
    keyframes
        .iter()
        .map(|k| teacher_reward(model, skill, k.state, k.action, slider, &mut rng))
        .collect()
}

/// A demonstrated action in supervised mode: the optimal action blended with
/// the goal-reaching action a novice would show, plus noise.
pub fn teacher_action(
    model: &TeacherModel,
    skill: &SkillSpec,
    optimal: &LinearPolicy,
    s: State,
    rng: &mut ChaCha8Rng,
) -> Action {
    let (w_true, w_dist) = match model.kind {
        TeacherKind::Oracle | TeacherKind::TrainedNoisy => (1.0, 0.0),
        TeacherKind::UntrainedBiased => (0.0, 1.0),
        TeacherKind::Custom => (model.true_weight, model.distance_weight),
    };
    let best = optimal.act(skill.centre(s));
    let reach = skill.reaching_action(s);
    let sd = model.action_noise();
    Action::new(
        w_true * best.u1 + w_dist * reach.u1 + gaussian(rng, sd),
        w_true * best.u2 + w_dist * reach.u2 + gaussian(rng, sd),
    )
}

/// Supervised demonstrations: states paired with demonstrated actions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SupervisedDemoSet {
    pub pairs: Vec<(State, Action)>,
}

pub fn run_simulated_supervised(
    model: &TeacherModel,
    phase: Phase,
    skill: &SkillSpec,
    states: &[State],
) -> Result<SupervisedDemoSet> {
    let optimal = optimal_policy(skill)?;
    let mut rng = rng(derive_seed(model.seed, 2000 + phase.index() as u64, 0));
    Ok(SupervisedDemoSet {
        pairs: states
            .iter()
            .map(|&s| (s, teacher_action(model, skill, &optimal, s, &mut rng)))
            .collect(),
    })
}

/// Ridge regression of actions on skill-frame states:
/// `Λ = (Σ u φᵀ)(Σ φ φᵀ + ridge·I)⁻¹`.
pub fn supervised_fit(skill: &SkillSpec, demos: &SupervisedDemoSet, ridge: f64) -> Result<LinearPolicy> {
    if demos.pairs.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 supervised demonstrations, got {}",
            demos.pairs.len()
        )));
    }
    if !(ridge >= 0.0) {
        return Err(Error::InvalidParameter("ridge must be non-negative".into()));
    }
    let mut gram = Matrix2::identity() * ridge;
    let mut cross = Matrix2::zeros();
    for &(s, u) in &demos.pairs {
        let phi = skill.centre(s).to_vector();
        gram += phi * phi.transpose();
        cross += u.to_vector() * phi.transpose();
    }
    let sv = gram.singular_values();
    if !(sv.min() > 1e-12 * sv.max()) {
        return Err(Error::RankDeficient);
    }
    let inv = gram.try_inverse().ok_or(Error::RankDeficient)?;
    Ok(LinearPolicy::new(cross * inv))
}

pub const DEFAULT_SUPERVISED_RIDGE: f64 = 1e-8;

/// Draws a fresh noise generator, for callers outside a protocol.
pub fn teacher_rng(seed: u64) -> ChaCha8Rng {
    rng(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skills::{make_skill_s1, solve_riccati};
    use crate::teaching::{ideal_rewards, sample_keyframes};

    fn s1() -> SkillSpec {
        make_skill_s1(0.01, 0.9).unwrap()
    }

    #[test]
    fn oracle_and_noiseless_trained_give_true_reward() {
        let s = s1();
        let set = sample_keyframes(&s, 8, 4, 35.0).unwrap();
        let ideal = ideal_rewards(&s, &set.keyframes);
        let slider = SliderSpec::default();
        let oracle = run_simulated_session(&TeacherModel::oracle(), Phase::P1, &s, &set.keyframes, &slider);
        assert_eq!(oracle, ideal);
        let quiet = run_simulated_session(
            &TeacherModel::trained_noisy(0.0),
            Phase::P1,
            &s,
            &set.keyframes,
            &slider,
        );
        assert_eq!(quiet, ideal);
    }

    #[test]
    fn biased_teacher_example() {
        let s = s1();
        let model = TeacherModel::untrained_biased(1.0, 0.0);
        let mut r = teacher_rng(0);
        let c = teacher_reward(
            &model,
            &s,
            State::new(30.0, 40.0),
            Action::new(-30.0, -40.0),
            &SliderSpec::default(),
            &mut r,
        );
        assert_eq!(c, 0.0);
        let ideal = true_reward(&s, State::new(30.0, 40.0), Action::new(-30.0, -40.0));
        assert!((ideal + 50.0).abs() < 1e-12);
        assert!(((c - ideal).abs() - 50.0).abs() < 1e-12);
    }

    #[test]
    fn outputs_stay_on_slider() {
        let s = s1();
        let slider = SliderSpec::default();
        let set = sample_keyframes(&s, 8, 8, 35.0).unwrap();
        for model in [
            TeacherModel::trained_noisy(50.0),
            TeacherModel::untrained_biased(5.0, 30.0),
            TeacherModel::custom(3.0, 2.0, 10.0),
        ] {
            for seed in 0..20 {
                let rs = run_simulated_session(&model.with_seed(seed), Phase::P7, &s, &set.keyframes, &slider);
                assert!(rs.iter().all(|&c| slider.contains(c)));
            }
        }
    }

    #[test]
    fn sessions_are_seed_deterministic() {
        let s = s1();
        let set = sample_keyframes(&s, 8, 8, 35.0).unwrap();
        let slider = SliderSpec::default();
        let m = TeacherModel::trained_noisy(3.0).with_seed(42);
        let a = run_simulated_session(&m, Phase::P1, &s, &set.keyframes, &slider);
        let b = run_simulated_session(&m, Phase::P1, &s, &set.keyframes, &slider);
        assert_eq!(a, b);
        let c = run_simulated_session(&m.with_seed(43), Phase::P1, &s, &set.keyframes, &slider);
        assert_ne!(a, c);
    }

    #[test]
    fn supervised_fit_recovers_linear_map() {
        let s = s1();
        let k = solve_riccati(&s).unwrap().k;
        let states = [State::new(10.0, -4.0), State::new(-22.0, 7.0), State::new(3.0, 30.0)];
        let demos = SupervisedDemoSet {
            pairs: states
                .iter()
                .map(|&x| (x, Action::from_vector(-k * x.to_vector())))
                .collect(),
        };
        let fit = supervised_fit(&s, &demos, 0.0).unwrap();
        assert!((fit.gain + k).norm() < 1e-9);
    }

    #[test]
    fn supervised_fit_square_system() {
        let s = s1();
        let demos = SupervisedDemoSet {
            pairs: vec![
                (State::new(1.0, 0.0), Action::new(3.0, -2.0)),
                (State::new(0.0, 1.0), Action::new(0.5, 7.0)),
            ],
        };
        let fit = supervised_fit(&s, &demos, 0.0).unwrap();
        for (x, u) in &demos.pairs {
            let got = fit.act(*x);
            assert!((got.u1 - u.u1).abs() < 1e-12 && (got.u2 - u.u2).abs() < 1e-12);
        }
    }

    #[test]
    fn supervised_fit_rank_deficiency() {
        let s = s1();
        let demos = SupervisedDemoSet {
            pairs: vec![
                (State::new(1.0, 2.0), Action::new(1.0, 0.0)),
                (State::new(2.0, 4.0), Action::new(0.0, 1.0)),
            ],
        };
        assert!(matches!(supervised_fit(&s, &demos, 0.0), Err(Error::RankDeficient)));
        assert!(supervised_fit(&s, &demos, 1e-3).is_ok());
        let one = SupervisedDemoSet { pairs: vec![demos.pairs[0]] };
        assert!(supervised_fit(&s, &one, 1.0).is_err());
    }

    #[test]
    fn ridge_path_shrinks_the_fit() {
        let s = s1();
        let model = TeacherModel::trained_noisy(1.0).with_action_noise(5.0).with_seed(3);
        let states: Vec<State> = sample_keyframes(&s, 8, 2, 35.0)
            .unwrap()
            .keyframes
            .iter()
            .map(|k| k.state)
            .collect();
        let demos = run_simulated_supervised(&model, Phase::P1, &s, &states).unwrap();
        let mut last = f64::INFINITY;
        for exp in -8..=6 {
            let norm = supervised_fit(&s, &demos, 10f64.powi(exp)).unwrap().gain.norm();
            assert!(norm <= last * (1.0 + 1e-12), "ridge 1e{exp}: {norm} > {last}");
            last = norm;
        }
    }
}
