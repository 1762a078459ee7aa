//! Teaching-performance metrics: accumulated demonstration error (ADE),
//! average RMSE between learned and ideal trajectories (ARMSE), and average
//! total true reward along learned trajectories (ATC).
//!
//! Rollouts over start states are independent and run in parallel; per-start
//! values are collected in order and reduced sequentially so results are
//! bit-for-bit reproducible.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lspi::{policy_from_theta, rollout_policy, LinearPolicy, Trajectory, ValueParams};
use crate::seeds::rng;
use crate::skills::{true_reward, SkillSpec, State};

/// `Σ |ĉ − c*|`.
pub fn ade(submitted: &[f64], ideal: &[f64]) -> Result<f64> {
    if submitted.len() != ideal.len() {
        return Err(Error::LengthMismatch {
            expected: ideal.len(),
            actual: submitted.len(),
        });
    }
    Ok(submitted.iter().zip(ideal).map(|(a, b)| (a - b).abs()).sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricParams {
    /// Number of rollout start states.
    pub m: usize,
    pub horizon: usize,
}

impl Default for MetricParams {
    fn default() -> Self {
        MetricParams { m: 100, horizon: 100 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMetric {
    pub start: State,
    pub rmse: f64,
    pub total_reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ade: f64,
    /// mm
    pub armse: f64,
    pub atc: f64,
    pub m: usize,
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_trajectory: Option<Vec<TrajectoryMetric>>,
}

/// `m` start states uniform over the skill's workspace box.
pub fn draw_starts(skill: &SkillSpec, m: usize, seed: u64) -> Vec<State> {
    let h = skill.workspace_halfwidth();
    let mut rng = rng(seed);
    (0..m)
        .map(|_| State::new(rng.random_range(-h..=h), rng.random_range(-h..=h)))
        .collect()
}

fn frame_rollout(policy: &LinearPolicy, skill: &SkillSpec, start: State, horizon: usize) -> Trajectory {
    rollout_policy(policy, skill.centre(start), horizon, skill.u_max())
}

/// Root-mean-square state distance, paired by time index.
pub fn trajectory_rmse(a: &Trajectory, b: &Trajectory) -> f64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return 0.0;
    }
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(p, q)| {
            let d = p.state - q.state;
            d.r1 * d.r1 + d.r2 * d.r2
        })
        .sum();
    (sum / n as f64).sqrt()
}

/// Undiscounted sum of true rewards along a skill-frame trajectory.
pub fn trajectory_reward(skill: &SkillSpec, tr: &Trajectory) -> f64 {
    tr.iter()
        .map(|p| true_reward(skill, skill.uncentre(p.state), p.action))
        .sum()
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn per_start<T, F>(starts: &[State], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(State) -> T + Sync,
{
    starts.par_iter().map(|&s| f(s)).collect()
}

pub fn armse_from_starts(
    learned: &LinearPolicy,
    ideal: &LinearPolicy,
    skill: &SkillSpec,
    starts: &[State],
    horizon: usize,
) -> f64 {
    let rmses = per_start(starts, |s| {
        trajectory_rmse(
            &frame_rollout(learned, skill, s, horizon),
            &frame_rollout(ideal, skill, s, horizon),
        )
    });
    mean(&rmses)
}

pub fn atc_from_starts(policy: &LinearPolicy, skill: &SkillSpec, starts: &[State], horizon: usize) -> f64 {
    let totals = per_start(starts, |s| trajectory_reward(skill, &frame_rollout(policy, skill, s, horizon)));
    mean(&totals)
}

fn greedy(theta: &ValueParams, which: &str) -> Result<LinearPolicy> {
    policy_from_theta(theta).map_err(|e| e.context(format!("{which} policy")))
}

pub fn armse(
    theta_learned: &ValueParams,
    theta_ideal: &ValueParams,
    skill: &SkillSpec,
    m: usize,
    horizon: usize,
    seed: u64,
) -> Result<f64> {
    let learned = greedy(theta_learned, "learned")?;
    let ideal = greedy(theta_ideal, "ideal")?;
    Ok(armse_from_starts(&learned, &ideal, skill, &draw_starts(skill, m, seed), horizon))
}

pub fn atc(theta: &ValueParams, skill: &SkillSpec, m: usize, horizon: usize, seed: u64) -> Result<f64> {
    let policy = greedy(theta, "learned")?;
    Ok(atc_from_starts(&policy, skill, &draw_starts(skill, m, seed), horizon))
}

/// All three metrics for one learned parameter vector, on shared starts.
pub fn metric_report(
    theta_learned: &ValueParams,
    theta_ideal: &ValueParams,
    skill: &SkillSpec,
    ade_value: f64,
    starts: &[State],
    horizon: usize,
    keep_trajectories: bool,
) -> Result<MetricReport> {
    let learned = greedy(theta_learned, "learned")?;
    let ideal = greedy(theta_ideal, "ideal")?;
    let rows: Vec<TrajectoryMetric> = per_start(starts, |s| {
        let lt = frame_rollout(&learned, skill, s, horizon);
        let it = frame_rollout(&ideal, skill, s, horizon);
        TrajectoryMetric {
            start: s,
            rmse: trajectory_rmse(&lt, &it),
            total_reward: trajectory_reward(skill, &lt),
        }
    });
    let armse = mean(&rows.iter().map(|r| r.rmse).collect::<Vec<_>>());
    let atc = mean(&rows.iter().map(|r| r.total_reward).collect::<Vec<_>>());
    Ok(MetricReport {
        ade: ade_value,
        armse,
        atc,
        m: starts.len(),
        horizon,
        per_trajectory: keep_trajectories.then_some(rows),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub horizon: usize,
    /// `None` when the reward learner produced no policy.
    pub armse_rlfd: Option<f64>,
    pub armse_supervised: f64,
}

/// ARMSE of `policy` against `reference` for several horizons. Each start
/// is rolled out once to the longest horizon and scored on prefixes.
pub fn armse_curve(
    policy: &LinearPolicy,
    reference: &LinearPolicy,
    skill: &SkillSpec,
    horizons: &[usize],
    starts: &[State],
) -> Result<Vec<f64>> {
    if horizons.iter().any(|&h| h == 0) {
        return Err(Error::InvalidParameter("horizons must be at least 1".into()));
    }
    let longest = horizons.iter().copied().max().unwrap_or(0);
    let prefixes: Vec<Vec<f64>> = per_start(starts, |s| {
        let r = frame_rollout(reference, skill, s, longest);
        let mut acc = 0.0;
        frame_rollout(policy, skill, s, longest)
            .iter()
            .zip(&r)
            .map(|(p, q)| {
                let d = p.state - q.state;
                acc += d.r1 * d.r1 + d.r2 * d.r2;
                acc
            })
            .collect()
    });
    Ok(horizons
        .iter()
        .map(|&h| mean(&prefixes.iter().map(|c| (c[h - 1] / h as f64).sqrt()).collect::<Vec<_>>()))
        .collect())
}

/// ARMSE of a reward-learned and a supervised policy against a reference,
/// on shared starts.
pub fn armse_vs_horizon(
    rlfd: Option<&LinearPolicy>,
    supervised: &LinearPolicy,
    reference: &LinearPolicy,
    skill: &SkillSpec,
    horizons: &[usize],
    starts: &[State],
) -> Result<Vec<CurvePoint>> {
    let sup = armse_curve(supervised, reference, skill, horizons, starts)?;
    let rl = rlfd
        .map(|p| armse_curve(p, reference, skill, horizons, starts))
        .transpose()?;
    Ok(horizons
        .iter()
        .enumerate()
        .map(|(i, &h)| CurvePoint {
            horizon: h,
            armse_rlfd: rl.as_ref().map(|c| c[i]),
            armse_supervised: sup[i],
        })
        .collect())
}
