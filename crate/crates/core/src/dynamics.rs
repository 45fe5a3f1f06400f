//! Planar double-integrator dynamics, LQR synthesis and the LQR Q-function.
//!
//! States are ordered `[px, vx, py, vy]`. Goals are 2D positions and are lifted
//! to zero-velocity 4D targets `[gx, 0, gy, 0]` wherever a state error is needed.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Matrix4x2, Vector2, Vector4};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec2 = Vector2<f64>;

/// Maximum fixed-point iterations for the Riccati solve.
pub const DARE_MAX_ITERATIONS: usize = 10_000;
/// Convergence threshold on the max-abs change of `P` between iterations.
pub const DARE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("time step must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error("Riccati iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("closed loop is not stable (spectral radius {0})")]
    Unstable(f64),
    #[error("state cost must be symmetric positive semi-definite")]
    StateCostNotPsd,
    #[error("control cost must be symmetric positive definite")]
    ControlCostNotPd,
    #[error("noise variances must be finite and non-negative")]
    InvalidNoise,
}

/// State of one agent in the planar workspace.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AgentState {
    pub px: f64,
    pub vx: f64,
    pub py: f64,
    pub vy: f64,
}

impl AgentState {
    pub fn new(px: f64, vx: f64, py: f64, vy: f64) -> Self {
        Self { px, vx, py, vy }
    }

    /// Zero-velocity state at `p`.
    pub fn at_rest(p: Vec2) -> Self {
        Self::new(p.x, 0.0, p.y, 0.0)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.px, self.vx, self.py, self.vy)
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.px, self.py)
    }

    pub fn velocity(&self) -> Vec2 {
        Vec2::new(self.vx, self.vy)
    }

    pub fn is_finite(&self) -> bool {
        self.px.is_finite() && self.vx.is_finite() && self.py.is_finite() && self.vy.is_finite()
    }

    pub fn distance_to(&self, other: &AgentState) -> f64 {
        (self.position() - other.position()).norm()
    }
}

/// Lift a goal position to the zero-velocity target state.
pub fn lift_goal(goal: Vec2) -> Vector4<f64> {
    Vector4::new(goal.x, 0.0, goal.y, 0.0)
}

/// Rectangular arena `[0, width] x [0, height]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub width: f64,
    pub height: f64,
}

impl Default for Workspace {
    fn default() -> Self {
        Self { width: 10.0, height: 10.0 }
    }
}

impl Workspace {
    pub fn new(width: f64, height: f64) -> Self {
        Self { width, height }
    }

    /// Clamp position into the arena and zero any velocity component whose
    /// position coordinate was clamped.
    pub fn clamp(&self, mut s: AgentState) -> AgentState {
        if s.px < 0.0 {
            s.px = 0.0;
            s.vx = 0.0;
        } else if s.px > self.width {
            s.px = self.width;
            s.vx = 0.0;
        }
        if s.py < 0.0 {
            s.py = 0.0;
            s.vy = 0.0;
        } else if s.py > self.height {
            s.py = self.height;
            s.vy = 0.0;
        }
        s
    }

    pub fn clamp_point(&self, p: Vec2) -> Vec2 {
        Vec2::new(p.x.clamp(0.0, self.width), p.y.clamp(0.0, self.height))
    }

    pub fn contains(&self, p: Vec2) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }

    pub fn diagonal(&self) -> f64 {
        self.width.hypot(self.height)
    }
}

/// Discrete-time linear model `x' = A x + B u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LtiModel {
    a: Matrix4<f64>,
    b: Matrix4x2<f64>,
    dt: f64,
}

impl LtiModel {
    /// Exact zero-order-hold discretization of the planar double integrator.
    pub fn double_integrator(dt: f64) -> Result<Self, DynamicsError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(DynamicsError::NonPositiveDt(dt));
        }
        #[rustfmt::skip]
        let a = Matrix4::new(
            1.0, dt,  0.0, 0.0,
            0.0, 1.0, 0.0, 0.0,
            0.0, 0.0, 1.0, dt,
            0.0, 0.0, 0.0, 1.0,
        );
        let h = 0.5 * dt * dt;
        #[rustfmt::skip]
        let b = Matrix4x2::new(
            h,   0.0,
            dt,  0.0,
            0.0, h,
            0.0, dt,
        );
        Ok(Self { a, b, dt })
    }

    /// A model with arbitrary matrices, used to probe solver error paths.
    pub fn from_matrices(a: Matrix4<f64>, b: Matrix4x2<f64>, dt: f64) -> Result<Self, DynamicsError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(DynamicsError::NonPositiveDt(dt));
        }
        Ok(Self { a, b, dt })
    }

    pub fn a(&self) -> &Matrix4<f64> {
        &self.a
    }

    pub fn b(&self) -> &Matrix4x2<f64> {
        &self.b
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Unclamped propagation `A x + B u`.
    pub fn propagate(&self, x: &AgentState, u: Vec2) -> AgentState {
        AgentState::from_vector(&(self.a * x.to_vector() + self.b * u))
    }
}

/// Free-function form of [`LtiModel::double_integrator`].
pub fn make_double_integrator(dt: f64) -> Result<LtiModel, DynamicsError> {
    LtiModel::double_integrator(dt)
}

/// Infinite-horizon LQR solution for a model and cost pair.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrSolution {
    model: LtiModel,
    q_cost: Matrix4<f64>,
    r_cost: Matrix2<f64>,
    p: Matrix4<f64>,
    k: Matrix2x4<f64>,
    /// `R + Bᵀ P B`, the curvature of the Q-function in `u`.
    hessian: Matrix2<f64>,
    iterations: usize,
}

fn max_abs<const R: usize, const C: usize>(m: &nalgebra::SMatrix<f64, R, C>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

fn riccati_map(a: &Matrix4<f64>, b: &Matrix4x2<f64>, q: &Matrix4<f64>, r: &Matrix2<f64>, p: &Matrix4<f64>) -> Option<Matrix4<f64>> {
    let btp = b.transpose() * p;
    let s = r + btp * b;
    let s_inv = s.try_inverse()?;
    let atp = a.transpose() * p;
    Some(atp * a - atp * b * s_inv * btp * a + q)
}

/// Solve the discrete-time algebraic Riccati equation by fixed-point
/// iteration from `P₀ = Q`.
pub fn solve_dare(model: &LtiModel, q_cost: Matrix4<f64>, r_cost: Matrix2<f64>) -> Result<LqrSolution, DynamicsError> {
    if max_abs(&(q_cost - q_cost.transpose())) > 1e-12
        || q_cost.symmetric_eigenvalues().iter().any(|&l| l < -1e-12)
    {
        return Err(DynamicsError::StateCostNotPsd);
    }
    if max_abs(&(r_cost - r_cost.transpose())) > 1e-12 || r_cost.cholesky().is_none() {
        return Err(DynamicsError::ControlCostNotPd);
    }
    let (a, b) = (model.a, model.b);
    let mut p = q_cost;
    let mut delta = f64::INFINITY;
    for iteration in 1..=DARE_MAX_ITERATIONS {
        let next = riccati_map(&a, &b, &q_cost, &r_cost, &p).ok_or(DynamicsError::ControlCostNotPd)?;
        delta = max_abs(&(next - p));
        p = next;
        if !delta.is_finite() {
            break;
        }
        // Below unit scale the threshold shrinks with P so the gain does not
        // depend on the overall magnitude of the costs.
        if delta < DARE_TOLERANCE * max_abs(&p).min(1.0) {
            let p = 0.5 * (p + p.transpose());
            let hessian = r_cost + b.transpose() * p * b;
            let k = hessian.try_inverse().ok_or(DynamicsError::ControlCostNotPd)? * b.transpose() * p * a;
            let sol = LqrSolution { model: *model, q_cost, r_cost, p, k, hessian, iterations: iteration };
            let rho = sol.closed_loop_spectral_radius();
            if !(rho < 1.0) {
                return Err(DynamicsError::Unstable(rho));
            }
            return Ok(sol);
        }
    }
    Err(DynamicsError::NotConverged { iterations: DARE_MAX_ITERATIONS, residual: delta })
}

impl LqrSolution {
    /// Solve with diagonal costs.
    pub fn from_diagonal(model: &LtiModel, q_diag: [f64; 4], r_diag: [f64; 2]) -> Result<Self, DynamicsError> {
        let q = Matrix4::from_diagonal(&Vector4::from(q_diag));
        let r = Matrix2::from_diagonal(&Vector2::from(r_diag));
        solve_dare(model, q, r)
    }

    pub fn model(&self) -> &LtiModel {
        &self.model
    }
    pub fn q_cost(&self) -> &Matrix4<f64> {
        &self.q_cost
    }
    pub fn r_cost(&self) -> &Matrix2<f64> {
        &self.r_cost
    }
    pub fn p(&self) -> &Matrix4<f64> {
        &self.p
    }
    pub fn k(&self) -> &Matrix2x4<f64> {
        &self.k
    }
    pub fn hessian(&self) -> &Matrix2<f64> {
        &self.hessian
    }
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// `‖P − (AᵀPA − AᵀPB(R+BᵀPB)⁻¹BᵀPA + Q)‖_∞` (max-abs entry).
    pub fn riccati_residual(&self) -> f64 {
        match riccati_map(&self.model.a, &self.model.b, &self.q_cost, &self.r_cost, &self.p) {
            Some(next) => max_abs(&(self.p - next)),
            None => f64::INFINITY,
        }
    }

    pub fn closed_loop_spectral_radius(&self) -> f64 {
        let cl = self.model.a - self.model.b * self.k;
        cl.complex_eigenvalues().iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
    }

    /// Optimal unsaturated control `u* = −K (x − θ)`.
    pub fn control(&self, x: &AgentState, goal: Vec2) -> Vec2 {
        -(self.k * (x.to_vector() - lift_goal(goal)))
    }

    /// Cost-to-go `(x − θ)ᵀ P (x − θ)`.
    pub fn cost_to_go(&self, x: &AgentState, goal: Vec2) -> f64 {
        let e = x.to_vector() - lift_goal(goal);
        (e.transpose() * self.p * e)[0]
    }

    /// Instantaneous reward `−(x−θ)ᵀQ(x−θ) − uᵀRu`.
    pub fn reward(&self, x: &AgentState, u: Vec2, goal: Vec2) -> f64 {
        let e = x.to_vector() - lift_goal(goal);
        -(e.transpose() * self.q_cost * e)[0] - (u.transpose() * self.r_cost * u)[0]
    }

    /// Negative optimal cost-to-go after taking `u`: `r(x,u) − (x′−θ)ᵀP(x′−θ)`.
    pub fn q_value(&self, x: &AgentState, u: Vec2, goal: Vec2) -> f64 {
        let next = self.model.propagate(x, u);
        self.reward(x, u, goal) - self.cost_to_go(&next, goal)
    }
}

/// Free-function form of [`LqrSolution::q_value`].
pub fn q_value(x: &AgentState, u: Vec2, goal: Vec2, lqr: &LqrSolution) -> f64 {
    lqr.q_value(x, u, goal)
}

/// Scale `u` down to norm `u_max`, preserving direction.
pub fn saturate(u: Vec2, u_max: f64) -> Vec2 {
    let n = u.norm();
    if n > u_max && n > 0.0 {
        u * (u_max / n)
    } else {
        u
    }
}

/// Deterministic robot step followed by the workspace clamp.
pub fn step_robot(x: &AgentState, u: Vec2, model: &LtiModel, ws: &Workspace) -> AgentState {
    ws.clamp(model.propagate(x, u))
}

/// Diagonal Gaussian process noise on the human state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    variances: [f64; 4],
}

impl NoiseModel {
    pub fn from_diagonal(variances: [f64; 4]) -> Result<Self, DynamicsError> {
        if variances.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(DynamicsError::InvalidNoise);
        }
        Ok(Self { variances })
    }

    pub fn zero() -> Self {
        Self { variances: [0.0; 4] }
    }

    pub fn variances(&self) -> [f64; 4] {
        self.variances
    }

    pub fn is_zero(&self) -> bool {
        self.variances.iter().all(|v| *v == 0.0)
    }

    /// `√(σ²_px + σ²_py)`, the per-step positional spread.
    pub fn position_sigma(&self) -> f64 {
        (self.variances[0] + self.variances[2]).sqrt()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector4<f64> {
        if self.is_zero() {
            return Vector4::zeros();
        }
        Vector4::from_fn(|i, _| {
            let z: f64 = StandardNormal.sample(rng);
            z * self.variances[i].sqrt()
        })
    }
}

/// Noisy human step `A x + B u + w`, `w ~ N(0, Σ_H)`, then the workspace clamp.
pub fn step_human<R: Rng + ?Sized>(
    x: &AgentState,
    u: Vec2,
    model: &LtiModel,
    noise: &NoiseModel,
    ws: &Workspace,
    rng: &mut R,
) -> AgentState {
    let next = model.a * x.to_vector() + model.b * u + noise.sample(rng);
    ws.clamp(AgentState::from_vector(&next))
}
