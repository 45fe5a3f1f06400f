//! Pointer input to avatar state, and recovery of the implied control.

use hrc_core::dynamics::{AgentState, LtiModel, Vec2, Workspace};

/// Map a normalized pointer to the avatar's next state. Position follows the
/// pointer directly, velocity is the finite difference over `dt`. With no
/// pointer the avatar holds its position, so its velocity drops to zero.
pub fn map_input(pointer: Option<Vec2>, prev: &AgentState, dt: f64, ws: &Workspace) -> AgentState {
    let p = match pointer {
        Some(u) => ws.clamp_point(Vec2::new(u.x * ws.width, u.y * ws.height)),
        None => prev.position(),
    };
    let v = (p - prev.position()) / dt;
    AgentState::new(p.x, v.x, p.y, v.y)
}

/// Least-squares control explaining the transition `prev → next`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlEstimate {
    pub u: Vec2,
    /// Norm of `next − A·prev − B·u`.
    pub residual: f64,
}

pub fn estimate_human_control(prev: &AgentState, next: &AgentState, model: &LtiModel) -> ControlEstimate {
    let b = model.b();
    let target = next.to_vector() - model.a() * prev.to_vector();
    let normal = (b.transpose() * b).try_inverse().expect("input matrix has full column rank");
    let u = normal * b.transpose() * target;
    ControlEstimate { u, residual: (target - b * u).norm() }
}
