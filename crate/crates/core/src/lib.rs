//! Models and algorithms for a robot and a human collecting goals in a shared
//! 2D workspace: linear dynamics with LQR, Bayesian goal inference, behavior
//! prediction conditioned on the robot's goal, simulated humans, the robot's
//! goal planner and a long-term safety layer.

pub mod belief;
pub mod cbp;
pub mod dynamics;
pub mod humans;
pub mod planner;
pub mod safety;

pub use belief::{GoalBelief, GoalSet, JointBelief, Observation};
pub use cbp::{CbpParams, ConditionalBelief, OverallPosterior};
pub use dynamics::{AgentState, LqrSolution, LtiModel, NoiseModel, Vec2, Workspace};
pub use humans::{HumanKind, HumanMind, HumanParams};
pub use planner::{Mode, Objective, PlannerState, RobotKind};
pub use safety::{SafetyConfig, SafetyEnv};
