//! States, actions, reaching skills and their exact LQR solution.
//!
//! The robot is kinematically controlled: an action is a desired end-effector
//! displacement, so the transition is `s' = s + a` once the action has been
//! clamped to `u_max`. Rewards are the negated quadratic costs
//! `-φᵀQφ - aᵀRa`, where `φ` is the state expressed relative to the skill's
//! goal. With identity dynamics the discounted Riccati fixed point reduces to
//!
//! ```text
//! P = Q + γP - γ²P(R + γP)⁻¹P,    K = γ(R + γP)⁻¹P,    u* = -Ks
//! ```
//!
//! and the optimal action-value function is `Q*(s,a) = c(s,a) - γ(s+a)ᵀP(s+a)`.

use std::ops::{Add, Sub};

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lspi::{LinearPolicy, ValueParams};

pub const DEFAULT_BETA: f64 = 0.01;
pub const DEFAULT_LINE_EPSILON: f64 = 1e-15;
pub const DEFAULT_GAMMA: f64 = 0.9;
pub const DEFAULT_WORKSPACE_HALFWIDTH: f64 = 70.0;
pub const DEFAULT_U_MAX: f64 = 100.0;

const RICCATI_TOL: f64 = 1e-12;
const RICCATI_MAX_ITERS: usize = 1_000_000;

/// End-effector position in millimetres.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub r1: f64,
    pub r2: f64,
}

/// Desired end-effector displacement for one time-step, in millimetres.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub u1: f64,
    pub u2: f64,
}

impl State {
    pub const ORIGIN: State = State { r1: 0.0, r2: 0.0 };

    pub fn new(r1: f64, r2: f64) -> Self {
        State { r1, r2 }
    }

    /// Validated constructor for states that must lie in the workspace box.
    pub fn in_workspace(r1: f64, r2: f64, halfwidth: f64) -> Result<Self> {
        let s = State { r1, r2 };
        if !s.is_finite() {
            return Err(Error::InvalidParameter(format!("non-finite state ({r1}, {r2})")));
        }
        if !s.within(halfwidth) {
            return Err(Error::InvalidParameter(format!(
                "state ({r1}, {r2}) outside the ±{halfwidth} mm workspace"
            )));
        }
        Ok(s)
    }

    pub fn is_finite(&self) -> bool {
        self.r1.is_finite() && self.r2.is_finite()
    }

    /// Whether both coordinates are within `±halfwidth`.
    pub fn within(&self, halfwidth: f64) -> bool {
        self.r1.abs() <= halfwidth && self.r2.abs() <= halfwidth
    }

    pub fn norm(&self) -> f64 {
        self.r1.hypot(self.r2)
    }

    pub fn to_vector(self) -> Vector2<f64> {
        Vector2::new(self.r1, self.r2)
    }

    pub fn from_vector(v: Vector2<f64>) -> Self {
        State { r1: v.x, r2: v.y }
    }
}

impl Action {
    pub const ZERO: Action = Action { u1: 0.0, u2: 0.0 };

    pub fn new(u1: f64, u2: f64) -> Self {
        Action { u1, u2 }
    }

    pub fn is_finite(&self) -> bool {
        self.u1.is_finite() && self.u2.is_finite()
    }

    pub fn magnitude(&self) -> f64 {
        self.u1.hypot(self.u2)
    }

    /// Scales the action down to magnitude `u_max`, keeping its direction.
    pub fn clamped(self, u_max: f64) -> Action {
        let m = self.magnitude();
        if m > u_max {
            let s = u_max / m;
            Action {
                u1: self.u1 * s,
                u2: self.u2 * s,
            }
        } else {
            self
        }
    }

    pub fn to_vector(self) -> Vector2<f64> {
        Vector2::new(self.u1, self.u2)
    }

    pub fn from_vector(v: Vector2<f64>) -> Self {
        Action { u1: v.x, u2: v.y }
    }
}

impl Add<Action> for State {
    type Output = State;

    fn add(self, a: Action) -> State {
        State {
            r1: self.r1 + a.u1,
            r2: self.r2 + a.u2,
        }
    }
}

impl Sub for State {
    type Output = State;

    fn sub(self, o: State) -> State {
        State {
            r1: self.r1 - o.r1,
            r2: self.r2 - o.r2,
        }
    }
}

/// One transition: `s + clamp(a, u_max)`.
pub fn step(s: State, a: Action, u_max: f64) -> State {
    s + a.clamped(u_max)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkillId {
    PointReach,
    LineReach,
}

/// Goal geometry of a skill.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "skill_id", rename_all = "snake_case")]
pub enum SkillKind {
    PointReach { target: State },
    /// The line `cos(alpha)·r1 + sin(alpha)·r2 + d = 0`.
    LineReach { alpha: f64, d: f64 },
}

/// A target skill: quadratic costs, discount, and workspace limits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SkillConfig", into = "SkillConfig")]
pub struct SkillSpec {
    q: Matrix2<f64>,
    r: Matrix2<f64>,
    gamma: f64,
    beta: f64,
    epsilon: f64,
    kind: SkillKind,
    workspace_halfwidth: f64,
    u_max: f64,
}

/// Human-readable form of a [`SkillSpec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkillConfig {
    pub skill_id: SkillId,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub d: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_halfwidth")]
    pub workspace_halfwidth: f64,
    #[serde(default = "default_u_max")]
    pub u_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<[f64; 2]>,
}

fn default_beta() -> f64 {
    DEFAULT_BETA
}
fn default_epsilon() -> f64 {
    DEFAULT_LINE_EPSILON
}
fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}
fn default_halfwidth() -> f64 {
    DEFAULT_WORKSPACE_HALFWIDTH
}
fn default_u_max() -> f64 {
    DEFAULT_U_MAX
}

fn check_beta_gamma(beta: f64, gamma: f64) -> Result<()> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidParameter(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    Ok(())
}

/// Skill S1: reach the origin with `Q = R = βI`.
pub fn make_skill_s1(beta: f64, gamma: f64) -> Result<SkillSpec> {
    check_beta_gamma(beta, gamma)?;
    let cost = Matrix2::identity() * beta;
    SkillSpec::from_parts(
        cost,
        cost,
        gamma,
        SkillKind::PointReach {
            target: State::ORIGIN,
        },
        beta,
        0.0,
    )
}

/// Skill S2: reach the line `cos(α)r1 + sin(α)r2 + d = 0`.
///
/// `Q = β(n nᵀ + ε t tᵀ)` with `n` the unit normal and `t` the unit tangent,
/// so the heavy cost is always on the distance to the line and `ε` only
/// regularises the free direction along it.
pub fn make_skill_s2(beta: f64, epsilon: f64, alpha: f64, d: f64, gamma: f64) -> Result<SkillSpec> {
    check_beta_gamma(beta, gamma)?;
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be non-negative, got {epsilon}")));
    }
    if !alpha.is_finite() || !d.is_finite() {
        return Err(Error::InvalidParameter("line parameters must be finite".into()));
    }
    let (n, t) = line_frame(alpha);
    let q = (n * n.transpose() + t * t.transpose() * epsilon) * beta;
    // exact symmetry regardless of rounding in the outer products
    let q = (q + q.transpose()) * 0.5;
    SkillSpec::from_parts(
        q,
        Matrix2::identity() * beta,
        gamma,
        SkillKind::LineReach { alpha, d },
        beta,
        epsilon,
    )
}

fn line_frame(alpha: f64) -> (Vector2<f64>, Vector2<f64>) {
    let (sin, cos) = alpha.sin_cos();
    (Vector2::new(cos, sin), Vector2::new(-sin, cos))
}

impl SkillSpec {
    /// Builds a skill from explicit cost matrices. `Q` must be symmetric PSD
    /// and `R` symmetric positive definite.
    pub fn from_parts(
        q: Matrix2<f64>,
        r: Matrix2<f64>,
        gamma: f64,
        kind: SkillKind,
        beta: f64,
        epsilon: f64,
    ) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidParameter(format!("gamma must lie in (0, 1], got {gamma}")));
        }
        if q.iter().chain(r.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("non-finite cost matrix".into()));
        }
        if q[(0, 1)] != q[(1, 0)] || r[(0, 1)] != r[(1, 0)] {
            return Err(Error::InvalidParameter("Q and R must be symmetric".into()));
        }
        let (q_lo, _) = sym2_eigenvalues(&q);
        if q_lo < -1e-12 * q.norm() {
            return Err(Error::InvalidParameter("Q must be positive semidefinite".into()));
        }
        let (r_lo, _) = sym2_eigenvalues(&r);
        if r_lo <= 0.0 {
            return Err(Error::InvalidParameter("R must be positive definite".into()));
        }
        Ok(SkillSpec {
            q,
            r,
            gamma,
            beta,
            epsilon,
            kind,
            workspace_halfwidth: DEFAULT_WORKSPACE_HALFWIDTH,
            u_max: DEFAULT_U_MAX,
        })
    }

    pub fn with_u_max(mut self, u_max: f64) -> Result<Self> {
        if !(u_max.is_finite() && u_max > 0.0) {
            return Err(Error::InvalidParameter(format!("u_max must be positive, got {u_max}")));
        }
        self.u_max = u_max;
        Ok(self)
    }

    pub fn with_workspace_halfwidth(mut self, halfwidth: f64) -> Result<Self> {
        if !(halfwidth.is_finite() && halfwidth > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "workspace half-width must be positive, got {halfwidth}"
            )));
        }
        self.workspace_halfwidth = halfwidth;
        Ok(self)
    }

    pub fn with_target(mut self, target: State) -> Result<Self> {
        match &mut self.kind {
            SkillKind::PointReach { target: t } => {
                if !target.is_finite() {
                    return Err(Error::InvalidParameter("non-finite target".into()));
                }
                *t = target;
                Ok(self)
            }
            SkillKind::LineReach { .. } => {
                Err(Error::InvalidParameter("line skills have no point target".into()))
            }
        }
    }

    pub fn q(&self) -> &Matrix2<f64> {
        &self.q
    }

    pub fn r(&self) -> &Matrix2<f64> {
        &self.r
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn kind(&self) -> SkillKind {
        self.kind
    }

    pub fn skill_id(&self) -> SkillId {
        match self.kind {
            SkillKind::PointReach { .. } => SkillId::PointReach,
            SkillKind::LineReach { .. } => SkillId::LineReach,
        }
    }

    pub fn workspace_halfwidth(&self) -> f64 {
        self.workspace_halfwidth
    }

    pub fn u_max(&self) -> f64 {
        self.u_max
    }

    /// Origin of the skill frame: the target for point skills, the foot of
    /// the perpendicular from the origin for line skills.
    pub fn anchor(&self) -> State {
        match self.kind {
            SkillKind::PointReach { target } => target,
            SkillKind::LineReach { alpha, d } => {
                let (n, _) = line_frame(alpha);
                State::new(-d * n.x, -d * n.y)
            }
        }
    }

    /// World coordinates to skill-frame coordinates.
    pub fn centre(&self, s: State) -> State {
        s - self.anchor()
    }

    /// Skill-frame coordinates back to world coordinates.
    pub fn uncentre(&self, phi: State) -> State {
        let a = self.anchor();
        State::new(phi.r1 + a.r1, phi.r2 + a.r2)
    }

    /// Euclidean distance from `s` to the goal set (point or line).
    pub fn goal_distance(&self, s: State) -> f64 {
        match self.kind {
            SkillKind::PointReach { target } => (s - target).norm(),
            SkillKind::LineReach { alpha, d } => {
                let (n, _) = line_frame(alpha);
                (n.x * s.r1 + n.y * s.r2 + d).abs()
            }
        }
    }

    /// The displacement that lands exactly on the goal set.
    pub fn reaching_action(&self, s: State) -> Action {
        match self.kind {
            SkillKind::PointReach { target } => Action::new(target.r1 - s.r1, target.r2 - s.r2),
            SkillKind::LineReach { alpha, d } => {
                let (n, _) = line_frame(alpha);
                let signed = n.x * s.r1 + n.y * s.r2 + d;
                Action::new(-signed * n.x, -signed * n.y)
            }
        }
    }

    pub fn step(&self, s: State, a: Action) -> State {
        step(s, a, self.u_max)
    }

    pub fn to_config(&self) -> SkillConfig {
        let (alpha, d, target) = match self.kind {
            SkillKind::PointReach { target } => (0.0, 0.0, Some([target.r1, target.r2])),
            SkillKind::LineReach { alpha, d } => (alpha, d, None),
        };
        SkillConfig {
            skill_id: self.skill_id(),
            beta: self.beta,
            epsilon: self.epsilon,
            alpha,
            d,
            gamma: self.gamma,
            workspace_halfwidth: self.workspace_halfwidth,
            u_max: self.u_max,
            target,
        }
    }

    pub fn from_config(c: &SkillConfig) -> Result<Self> {
        let skill = match c.skill_id {
            SkillId::PointReach => {
                let s = make_skill_s1(c.beta, c.gamma)?;
                match c.target {
                    Some([r1, r2]) => s.with_target(State::new(r1, r2))?,
                    None => s,
                }
            }
            SkillId::LineReach => make_skill_s2(c.beta, c.epsilon, c.alpha, c.d, c.gamma)?,
        };
        skill
            .with_workspace_halfwidth(c.workspace_halfwidth)?
            .with_u_max(c.u_max)
    }
}

impl From<SkillSpec> for SkillConfig {
    fn from(s: SkillSpec) -> Self {
        s.to_config()
    }
}

impl TryFrom<SkillConfig> for SkillSpec {
    type Error = Error;

    fn try_from(c: SkillConfig) -> Result<Self> {
        SkillSpec::from_config(&c)
    }
}

/// `c(s, a) = -φᵀQφ - aᵀRa`, with `φ` the skill-frame state.
pub fn true_reward(skill: &SkillSpec, s: State, a: Action) -> f64 {
    let phi = skill.centre(s).to_vector();
    let u = a.to_vector();
    -(phi.dot(&(skill.q * phi)) + u.dot(&(skill.r * u)))
}

/// Eigenvalues of a symmetric 2×2 matrix, ascending. The small one is taken
/// from the determinant to keep its relative accuracy.
pub fn sym2_eigenvalues(m: &Matrix2<f64>) -> (f64, f64) {
    let a = m[(0, 0)];
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let d = m[(1, 1)];
    let mean = 0.5 * (a + d);
    let rad = (0.5 * (a - d)).hypot(b);
    let hi = mean + rad;
    let lo = mean - rad;
    if hi > 0.0 && lo >= 0.0 {
        (((a * d) - b * b) / hi, hi)
    } else {
        (lo, hi)
    }
}

/// Quadratic value coefficient and optimal gain of a skill.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiccatiSolution {
    /// `V*(s) = -φᵀPφ`.
    pub p: Matrix2<f64>,
    /// Optimal policy `u = -Kφ`.
    pub k: Matrix2<f64>,
    pub iterations: usize,
}

impl RiccatiSolution {
    pub fn policy(&self) -> LinearPolicy {
        LinearPolicy::new(-self.k)
    }

    /// `I - K`.
    pub fn closed_loop(&self) -> Matrix2<f64> {
        Matrix2::identity() - self.k
    }
}

fn riccati_map(q: &Matrix2<f64>, r: &Matrix2<f64>, gamma: f64, p: &Matrix2<f64>) -> Option<Matrix2<f64>> {
    let inv = (r + p * gamma).try_inverse()?;
    let next = q + p * gamma - p * inv * p * (gamma * gamma);
    Some((next + next.transpose()) * 0.5)
}

/// Solves the discounted Riccati equation for `A = B = I` by value iteration
/// from `P = Q`, stopping at relative change `1e-12`.
pub fn solve_riccati(skill: &SkillSpec) -> Result<RiccatiSolution> {
    let (q, r, gamma) = (&skill.q, &skill.r, skill.gamma);
    let mut p = *q;
    let mut residual = f64::INFINITY;
    for it in 1..=RICCATI_MAX_ITERS {
        let next = riccati_map(q, r, gamma, &p).ok_or(Error::RiccatiNotConverged {
            iterations: it,
            residual,
        })?;
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::RiccatiNotConverged { iterations: it, residual });
        }
        let scale = next.norm();
        let change = (next - p).norm();
        residual = if scale > 0.0 { change / scale } else { change };
        p = next;
        if change <= RICCATI_TOL * scale {
            let k = (r + p * gamma)
                .try_inverse()
                .ok_or(Error::RiccatiNotConverged { iterations: it, residual })?
                * p
                * gamma;
            return Ok(RiccatiSolution { p, k, iterations: it });
        }
    }
    Err(Error::RiccatiNotConverged {
        iterations: RICCATI_MAX_ITERS,
        residual,
    })
}

/// Parameters of `Q*(s,a) = -(sᵀQs + aᵀRa + γ(s+a)ᵀP(s+a))` in feature order.
///
/// Fails when `Q`, `R` or `P` carry off-diagonal terms above `1e-12` of their
/// scale: the r1·r2 and u1·u2 monomials are not in the feature set.
pub fn theta_from_value_matrix(
    q: &Matrix2<f64>,
    r: &Matrix2<f64>,
    gamma: f64,
    p: &Matrix2<f64>,
) -> Result<ValueParams> {
    let scale = p.norm().max(q.norm()).max(r.norm());
    let offdiag = [q[(0, 1)], q[(1, 0)], r[(0, 1)], r[(1, 0)], p[(0, 1)], p[(1, 0)]]
        .into_iter()
        .fold(0.0_f64, |m, x| m.max(x.abs()));
    if offdiag > 1e-12 * scale {
        return Err(Error::NotRepresentable { offdiag });
    }
    let (p11, p22) = (p[(0, 0)], p[(1, 1)]);
    Ok(ValueParams::new([
        -(q[(0, 0)] + gamma * p11),
        -(q[(1, 1)] + gamma * p22),
        -(r[(0, 0)] + gamma * p11),
        -(r[(1, 1)] + gamma * p22),
        -2.0 * gamma * p11,
        0.0,
        0.0,
        -2.0 * gamma * p22,
    ]))
}

/// The exact optimal value parameters of a skill.
pub fn analytic_theta_star(skill: &SkillSpec) -> Result<ValueParams> {
    let sol = solve_riccati(skill)?;
    theta_from_value_matrix(&skill.q, &skill.r, skill.gamma, &sol.p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lspi::policy_from_theta;
    use std::f64::consts::PI;

    // positive root of γp² + (r - γq - γr)p - qr = 0, the scalar Riccati equation
    fn scalar_root(q: f64, r: f64, gamma: f64) -> f64 {
        let a = gamma;
        let b = r - gamma * q - gamma * r;
        let c = -q * r;
        (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a)
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn s1_construction() {
        let s = make_skill_s1(0.01, 0.9).unwrap();
        assert_eq!(*s.q(), Matrix2::identity() * 0.01);
        assert_eq!(*s.r(), Matrix2::identity() * 0.01);
        assert_eq!(s.anchor(), State::ORIGIN);
        let s = make_skill_s1(1.0, 1.0).unwrap();
        assert_eq!(*s.q(), Matrix2::identity());
        assert_eq!(s.gamma(), 1.0);
    }

    #[test]
    fn s1_rejects_bad_parameters() {
        assert!(make_skill_s1(0.0, 0.9).is_err());
        assert!(make_skill_s1(-1.0, 0.9).is_err());
        assert!(make_skill_s1(0.01, 0.0).is_err());
        assert!(make_skill_s1(0.01, 1.5).is_err());
        assert!(make_skill_s2(0.01, -1.0, PI, 0.0, 0.9).is_err());
    }

    #[test]
    fn s1_hundred_anchor() {
        let s = make_skill_s1(0.01, 0.9).unwrap();
        let c = true_reward(&s, State::new(70.71, 0.0), Action::new(70.71, 0.0));
        assert!((c + 100.0).abs() < 0.02, "{c}");
    }

    #[test]
    fn s2_eigenvalues() {
        let s = make_skill_s2(0.01, 1e-15, PI, 0.0, 0.9).unwrap();
        let (lo, hi) = sym2_eigenvalues(s.q());
        assert!(rel(lo, 1e-17) < 1e-6, "{lo}");
        assert!(rel(hi, 0.01) < 1e-12, "{hi}");
        // the heavy direction is the line normal, r1 for alpha = pi
        assert!(rel(s.q()[(0, 0)], 0.01) < 1e-12);
    }

    #[test]
    fn s2_isotropic_when_epsilon_is_one() {
        let s = make_skill_s2(0.01, 1.0, 0.0, 0.0, 0.9).unwrap();
        assert!((s.q() - Matrix2::identity() * 0.01).norm() < 1e-18);
    }

    #[test]
    fn s2_optimal_policy_ignores_along_line() {
        let s = make_skill_s2(0.01, 1e-15, PI, 0.0, 0.9).unwrap();
        let sol = solve_riccati(&s).unwrap();
        let k_normal = scalar_root(0.01, 0.01, 0.9);
        let k_normal = 0.9 * k_normal / (0.01 + 0.9 * k_normal);
        assert!(sol.k[(1, 1)].abs() < 1e-6);
        assert!(rel(sol.k[(0, 0)], k_normal) < 1e-9);
        assert!((sol.k[(0, 0)] - 0.588).abs() < 1e-3);
    }

    #[test]
    fn reward_examples() {
        let s = make_skill_s1(0.01, 0.9).unwrap();
        assert_eq!(true_reward(&s, State::ORIGIN, Action::ZERO), 0.0);
        assert!((true_reward(&s, State::new(30.0, 40.0), Action::ZERO) + 25.0).abs() < 1e-12);
        assert!((true_reward(&s, State::new(30.0, 40.0), Action::new(30.0, 40.0)) + 50.0).abs() < 1e-12);
    }

    #[test]
    fn line_reward_is_zero_on_line() {
        let s = make_skill_s2(0.01, 1e-15, PI, 0.0, 0.9).unwrap();
        let c = true_reward(&s, State::new(0.0, 55.0), Action::ZERO);
        assert!(c <= 0.0 && c.abs() < 1e-10, "{c}");
        let c = true_reward(&s, State::new(10.0, 0.0), Action::ZERO);
        assert!((c + 1.0).abs() < 1e-12);
    }

    #[test]
    fn step_examples() {
        assert_eq!(step(State::new(10.0, 10.0), Action::new(-10.0, -10.0), 100.0), State::ORIGIN);
        assert_eq!(step(State::ORIGIN, Action::new(35.0, -35.0), 100.0), State::new(35.0, -35.0));
        assert_eq!(step(State::ORIGIN, Action::new(200.0, 0.0), 100.0), State::new(100.0, 0.0));
    }

    #[test]
    fn riccati_s1_matches_scalar_root() {
        let s = make_skill_s1(0.01, 0.9).unwrap();
        let sol = solve_riccati(&s).unwrap();
        // frozen from the quadratic formula
        let p = 0.015884033489985558;
        let k = 0.5884033489985555;
        assert!(rel(scalar_root(0.01, 0.01, 0.9), p) < 1e-14);
        for i in 0..2 {
            assert!(rel(sol.p[(i, i)], p) < 1e-10);
            assert!(rel(sol.k[(i, i)], k) < 1e-10);
        }
        assert!(sol.p[(0, 1)].abs() < 1e-18);
    }

    #[test]
    fn riccati_golden_ratio() {
        let s = SkillSpec::from_parts(
            Matrix2::identity(),
            Matrix2::identity(),
            1.0,
            SkillKind::PointReach { target: State::ORIGIN },
            1.0,
            0.0,
        )
        .unwrap();
        let sol = solve_riccati(&s).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!(rel(sol.p[(0, 0)], phi) < 1e-10);
        assert!(rel(sol.p[(1, 1)], phi) < 1e-10);
    }

    #[test]
    fn riccati_zero_state_cost() {
        let s = SkillSpec::from_parts(
            Matrix2::zeros(),
            Matrix2::identity() * 0.3,
            0.9,
            SkillKind::PointReach { target: State::ORIGIN },
            0.3,
            0.0,
        )
        .unwrap();
        let sol = solve_riccati(&s).unwrap();
        assert_eq!(sol.p, Matrix2::zeros());
        assert_eq!(sol.k, Matrix2::zeros());
    }

    #[test]
    fn theta_star_s1() {
        let s = make_skill_s1(0.01, 0.9).unwrap();
        let t = analytic_theta_star(&s).unwrap();
        let expected = -(0.01 + 0.9 * 0.015884033489985558);
        assert!(rel(t[2], expected) < 1e-10);
        assert!(rel(t[3], expected) < 1e-10);
        assert_eq!(t[5], 0.0);
        assert_eq!(t[6], 0.0);
        assert!(t[2] < 0.0 && t[3] < 0.0);
    }

    #[test]
    fn theta_star_zero_costs() {
        let z = Matrix2::zeros();
        let t = theta_from_value_matrix(&z, &z, 0.9, &z).unwrap();
        assert_eq!(t, ValueParams::new([0.0; 8]));
    }

    #[test]
    fn theta_star_rejects_rotated_lines() {
        let s = make_skill_s2(0.01, 1e-15, PI / 4.0, 0.0, 0.9).unwrap();
        assert!(matches!(analytic_theta_star(&s), Err(Error::NotRepresentable { .. })));
    }

    #[test]
    fn greedy_theta_star_matches_gain() {
        for gamma in [0.5, 0.9, 0.99] {
            for s in [
                make_skill_s1(0.01, gamma).unwrap(),
                make_skill_s2(0.01, 1e-15, PI, 0.0, gamma).unwrap(),
            ] {
                let sol = solve_riccati(&s).unwrap();
                let pol = policy_from_theta(&analytic_theta_star(&s).unwrap()).unwrap();
                let err = (pol.gain + sol.k).norm() / sol.k.norm();
                assert!(err < 1e-9, "gamma {gamma}: {err}");
            }
        }
    }

    #[test]
    fn closed_loop_is_stable_and_cost_decreases() {
        let s = make_skill_s1(0.01, 0.9).unwrap();
        let sol = solve_riccati(&s).unwrap();
        let (lo, hi) = sym2_eigenvalues(&sol.closed_loop());
        assert!(lo.abs() < 1.0 && hi.abs() < 1.0);
        let mut x = State::new(60.0, -45.0);
        let mut last = f64::INFINITY;
        for _ in 0..50 {
            let cost = -true_reward(&s, x, Action::ZERO);
            assert!(cost <= last);
            last = cost;
            x = s.step(x, Action::from_vector(-sol.k * x.to_vector()));
        }
    }

    #[test]
    fn config_round_trip() {
        let s = make_skill_s2(0.01, 1e-15, PI, 0.0, 0.9).unwrap();
        let text = toml::to_string(&s).unwrap();
        assert!(text.contains("skill_id = \"line_reach\""));
        let back: SkillSpec = toml::from_str(&text).unwrap();
        assert_eq!(back, s);
        let s1: SkillSpec = toml::from_str("skill_id = \"point_reach\"").unwrap();
        assert_eq!(s1, make_skill_s1(0.01, 0.9).unwrap());
        assert!(toml::from_str::<SkillSpec>("skill_id = \"point_reach\"\ngamma = 2.0").is_err());
    }
}
