//! Least-squares policy iteration over quadratic state-action features.
//!
//! Features are the eight monomials
//! `(r1², r2², u1², u2², r1u1, r1u2, r2u1, r2u2)`; the greedy action of a
//! parameter vector is linear in the state, so policy improvement has a
//! closed form and evaluation is one `8×8` LSTD-Q solve:
//!
//! ```text
//! A = Σ φ(s,a)(φ(s,a) - γφ(s', π(s')))ᵀ + ridge·I,    b = Σ φ(s,a)c,    Aθ = b
//! ```

use std::ops::Index;

use nalgebra::{Matrix2, SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skills::{sym2_eigenvalues, Action, State};

pub const FEATURE_DIM: usize = 8;

/// Feature names in the fixed order shared by [`features`] and [`ValueParams`].
pub const FEATURE_NAMES: [&str; FEATURE_DIM] =
    ["r1^2", "r2^2", "u1^2", "u2^2", "r1*u1", "r1*u2", "r2*u1", "r2*u2"];

pub type FeatureVec = SVector<f64, FEATURE_DIM>;
pub type LstdMatrix = SMatrix<f64, FEATURE_DIM, FEATURE_DIM>;

/// Value assigned to θ₃/θ₄ when an iterate is repaired.
pub const REPAIRED_CURVATURE: f64 = -1e-6;

pub fn features(s: State, a: Action) -> FeatureVec {
    let State { r1, r2 } = s;
    let Action { u1, u2 } = a;
    FeatureVec::from([r1 * r1, r2 * r2, u1 * u1, u2 * u2, r1 * u1, r1 * u2, r2 * u1, r2 * u2])
}

/// Parameters of the quadratic action-value function `Q(s,a) = θᵀφ(s,a)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValueParams(pub [f64; FEATURE_DIM]);

impl ValueParams {
    /// `(-1,-1,-1,-1,-1,0,0,-1)·1e-3`: greedy policy `u = -0.5 s`.
    pub const DEFAULT_INIT: ValueParams =
        ValueParams([-1e-3, -1e-3, -1e-3, -1e-3, -1e-3, 0.0, 0.0, -1e-3]);

    pub fn new(theta: [f64; FEATURE_DIM]) -> Self {
        ValueParams(theta)
    }

    pub fn zeros() -> Self {
        ValueParams([0.0; FEATURE_DIM])
    }

    pub fn to_vector(&self) -> FeatureVec {
        FeatureVec::from(self.0)
    }

    pub fn from_vector(v: &FeatureVec) -> Self {
        let mut t = [0.0; FEATURE_DIM];
        t.copy_from_slice(v.as_slice());
        ValueParams(t)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    /// The greedy maximiser exists iff both action curvatures are negative.
    pub fn is_admissible(&self) -> bool {
        self.0[2] < 0.0 && self.0[3] < 0.0
    }

    pub fn q_value(&self, s: State, a: Action) -> f64 {
        self.to_vector().dot(&features(s, a))
    }

    pub fn scaled(&self, k: f64) -> Self {
        ValueParams(self.0.map(|x| x * k))
    }

    pub fn distance(&self, other: &ValueParams) -> f64 {
        (self.to_vector() - other.to_vector()).norm()
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }

    /// Clamps non-negative θ₃/θ₄ to [`REPAIRED_CURVATURE`]; returns how many
    /// entries were changed.
    pub fn repair(&mut self) -> usize {
        let mut n = 0;
        for i in [2, 3] {
            if !(self.0[i] < 0.0) {
                self.0[i] = REPAIRED_CURVATURE;
                n += 1;
            }
        }
        n
    }
}

impl Index<usize> for ValueParams {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// A state-feedback policy `u = G·s` (before clamping).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearPolicy {
    pub gain: Matrix2<f64>,
}

impl LinearPolicy {
    pub fn new(gain: Matrix2<f64>) -> Self {
        LinearPolicy { gain }
    }

    pub fn zero() -> Self {
        LinearPolicy {
            gain: Matrix2::zeros(),
        }
    }

    pub fn act(&self, s: State) -> Action {
        Action::from_vector(self.gain * s.to_vector())
    }

    /// `I + G`, the unclamped closed-loop transition.
    pub fn closed_loop(&self) -> Matrix2<f64> {
        Matrix2::identity() + self.gain
    }

    /// Spectral radius of the unclamped closed loop.
    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.closed_loop())
    }
}

/// Largest eigenvalue modulus of a real 2×2 matrix.
pub fn spectral_radius(m: &Matrix2<f64>) -> f64 {
    if m[(0, 1)] == m[(1, 0)] {
        let (lo, hi) = sym2_eigenvalues(m);
        return lo.abs().max(hi.abs());
    }
    let tr = m.trace();
    let det = m.determinant();
    let disc = tr * tr / 4.0 - det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        (tr / 2.0 + s).abs().max((tr / 2.0 - s).abs())
    } else {
        // complex pair: |λ|² = det
        det.abs().sqrt()
    }
}

/// Closed-form greedy policy: the stationary point of `Q(s, ·)`.
pub fn policy_from_theta(theta: &ValueParams) -> Result<LinearPolicy> {
    if !theta.is_admissible() || !theta.is_finite() {
        return Err(Error::DegeneratePolicy {
            theta3: theta[2],
            theta4: theta[3],
        });
    }
    let t = &theta.0;
    let gain = Matrix2::new(
        -t[4] / (2.0 * t[2]),
        -t[6] / (2.0 * t[2]),
        -t[5] / (2.0 * t[3]),
        -t[7] / (2.0 * t[3]),
    );
    Ok(LinearPolicy { gain })
}

/// One demonstration tuple `(s, a, s', c)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Demo {
    pub state: State,
    pub action: Action,
    pub next_state: State,
    pub reward: f64,
}

/// The ordered demonstration dataset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DemoSet {
    pub demos: Vec<Demo>,
}

impl DemoSet {
    /// Builds tuples whose next state is `step(s, a)` under `u_max`.
    pub fn from_pairs(pairs: &[(State, Action)], rewards: &[f64], u_max: f64) -> Result<Self> {
        if pairs.len() != rewards.len() {
            return Err(Error::LengthMismatch {
                expected: pairs.len(),
                actual: rewards.len(),
            });
        }
        let demos = pairs
            .iter()
            .zip(rewards)
            .map(|(&(s, a), &c)| Demo {
                state: s,
                action: a,
                next_state: crate::skills::step(s, a, u_max),
                reward: c,
            })
            .collect();
        Ok(DemoSet { demos })
    }

    pub fn len(&self) -> usize {
        self.demos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demos.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.demos.iter().map(|d| d.reward).collect()
    }

    pub fn with_rewards(&self, rewards: &[f64]) -> Result<Self> {
        if rewards.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                actual: rewards.len(),
            });
        }
        let demos = self
            .demos
            .iter()
            .zip(rewards)
            .map(|(d, &c)| Demo { reward: c, ..*d })
            .collect();
        Ok(DemoSet { demos })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    pub gamma: f64,
    /// Stop when `‖Δθ‖₂` falls below this.
    pub convergence_tol: f64,
    pub max_iters: usize,
    pub ridge: f64,
    /// LSTD systems above this condition number are rejected.
    pub cond_max: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            gamma: crate::skills::DEFAULT_GAMMA,
            convergence_tol: 1e-9,
            max_iters: 200,
            ridge: 1e-10,
            cond_max: 1e12,
        }
    }
}

impl LearnerConfig {
    pub fn with_gamma(gamma: f64) -> Self {
        LearnerConfig {
            gamma,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidParameter(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::InvalidParameter("convergence_tol must be positive".into()));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::InvalidParameter("ridge must be non-negative".into()));
        }
        Ok(())
    }
}

/// `Σ φ(φ - γφ')ᵀ + ridge·I` and `Σ φc` for the given evaluation policy.
pub fn lstd_system(
    demos: &DemoSet,
    policy: &LinearPolicy,
    gamma: f64,
    ridge: f64,
) -> (LstdMatrix, FeatureVec) {
    let mut a = LstdMatrix::identity() * ridge;
    let mut b = FeatureVec::zeros();
    for d in &demos.demos {
        let phi = features(d.state, d.action);
        let next = features(d.next_state, policy.act(d.next_state));
        a += phi * (phi - next * gamma).transpose();
        b += phi * d.reward;
    }
    (a, b)
}

/// Ratio of extreme singular values; infinite when singular.
pub fn condition_number(a: &LstdMatrix) -> f64 {
    let sv = a.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// One LSTD-Q policy evaluation.
pub fn lstd_solve(demos: &DemoSet, policy: &LinearPolicy, config: &LearnerConfig) -> Result<ValueParams> {
    let (a, b) = lstd_system(demos, policy, config.gamma, config.ridge);
    let condition = condition_number(&a);
    if !(condition <= config.cond_max) {
        return Err(Error::IllConditioned { condition });
    }
    let theta = a.lu().solve(&b).ok_or(Error::IllConditioned { condition })?;
    if theta.iter().any(|x| !x.is_finite()) {
        return Err(Error::IllConditioned { condition });
    }
    Ok(ValueParams::from_vector(&theta))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LspiOutcome {
    pub theta: ValueParams,
    pub iterations: usize,
    pub converged: bool,
    /// Number of θ₃/θ₄ entries clamped to keep the greedy step defined.
    pub repairs: usize,
}

/// Alternates LSTD-Q evaluation and greedy improvement from `init`.
///
/// Every iterate is passed through [`ValueParams::repair`], so the returned
/// parameters are always admissible.
pub fn lspi_learn(demos: &DemoSet, config: &LearnerConfig, init: ValueParams) -> Result<LspiOutcome> {
    config.validate()?;
    if demos.len() < FEATURE_DIM {
        return Err(Error::InvalidParameter(format!(
            "need at least {FEATURE_DIM} demonstrations, got {}",
            demos.len()
        )));
    }
    if !init.is_finite() {
        return Err(Error::InvalidParameter("non-finite initial parameters".into()));
    }
    let mut theta = init;
    let mut repairs = theta.repair();
    for it in 1..=config.max_iters {
        let policy = policy_from_theta(&theta)?;
        let mut next = lstd_solve(demos, &policy, config)?;
        repairs += next.repair();
        let delta = next.distance(&theta);
        theta = next;
        if delta < config.convergence_tol {
            return Ok(LspiOutcome {
                theta,
                iterations: it,
                converged: true,
                repairs,
            });
        }
    }
    Ok(LspiOutcome {
        theta,
        iterations: config.max_iters,
        converged: false,
        repairs,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub state: State,
    pub action: Action,
}

/// `horizon` consecutive (state, clamped action) pairs starting at `start`.
pub type Trajectory = Vec<TrajectoryPoint>;

pub fn rollout_policy(policy: &LinearPolicy, start: State, horizon: usize, u_max: f64) -> Trajectory {
    let mut out = Vec::with_capacity(horizon);
    let mut s = start;
    for _ in 0..horizon {
        let a = policy.act(s).clamped(u_max);
        out.push(TrajectoryPoint { state: s, action: a });
        s = s + a;
    }
    out
}

/// Rolls out the greedy policy of `theta`.
pub fn rollout(theta: &ValueParams, start: State, horizon: usize, u_max: f64) -> Result<Trajectory> {
    let policy = policy_from_theta(theta)?;
    Ok(rollout_policy(&policy, start, horizon, u_max))
}
