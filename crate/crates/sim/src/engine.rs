//! The episode engine: one tick runs human goal selection and control, robot
//! belief updates, robot goal selection and control, both dynamics steps,
//! goal collection with respawn, and logging.

use hrc_core::belief::{mental_model_update, update_goal_belief, update_joint_belief, BeliefError, GoalSet, Observation};
use hrc_core::cbp::{conditional_belief, overall_posterior, OverallPosterior};
use hrc_core::dynamics::{step_human, step_robot, AgentState, LqrSolution, NoiseModel, Vec2, Workspace};
use hrc_core::humans::{social_force_control, steering_target, stubborn_select, uncertain_select, HumanKind, HumanMind, HumanParams};
use hrc_core::planner::{goal_pursuit_control, naive_goal, proactive_goal, reactive_goal, Mode, PlannerState, RobotKind};
use hrc_core::safety::{long_term_safe_prob, monitored_control, pipeline_step, PipelineInput, SafetyEnv};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{ConfigError, EpisodeConfig};
use crate::log::{Agent, EpisodeLog, Event, Header, TickRecord};

/// Rejection-sampling attempts before the respawn separation is relaxed.
pub const RESPAWN_ATTEMPTS: usize = 1000;

const STREAM_LAYOUT: u64 = 0;
const STREAM_NOISE: u64 = 1;
const STREAM_RESPAWN: u64 = 2;
const STREAM_SAFETY: u64 = 3;

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("invalid config: {0}")]
    Config(#[from] ConfigError),
    #[error("belief update failed at tick {tick}: {source}")]
    Belief { tick: usize, source: BeliefError },
    #[error("layout: {0}")]
    Layout(String),
    #[error("non-finite state at tick {0}")]
    NonFinite(usize),
    #[error("episode already finished")]
    Finished,
}

pub(crate) fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn uniform_point<R: Rng + ?Sized>(ws: &Workspace, rng: &mut R) -> Vec2 {
    Vec2::new(rng.random_range(0.0..ws.width), rng.random_range(0.0..ws.height))
}

/// Sample a replacement for goal `index`: uniform in the workspace, at least
/// `2·goal_radius` from the other goals and clear of both agents. After
/// [`RESPAWN_ATTEMPTS`] failures the separations are halved and sampling
/// retried.
pub fn respawn_goal<R: Rng + ?Sized>(
    goals: &GoalSet,
    index: usize,
    agents: &[Vec2],
    goal_radius: f64,
    d_min: f64,
    ws: &Workspace,
    rng: &mut R,
) -> Vec2 {
    let mut goal_sep = 2.0 * goal_radius;
    let mut agent_sep = d_min.max(2.0 * goal_radius);
    loop {
        for _ in 0..RESPAWN_ATTEMPTS {
            let p = uniform_point(ws, rng);
            let goals_ok = goals.iter().enumerate().all(|(j, g)| j == index || (p - g).norm() >= goal_sep);
            let agents_ok = agents.iter().all(|a| (p - a).norm() >= agent_sep);
            if goals_ok && agents_ok {
                return p;
            }
        }
        goal_sep *= 0.5;
        agent_sep *= 0.5;
    }
}

/// Starting layout: fixed entries from the config, everything else sampled.
fn initial_layout(cfg: &EpisodeConfig) -> Result<(AgentState, AgentState, GoalSet), EpisodeError> {
    let mut rng = stream(cfg.seed, STREAM_LAYOUT);
    let ws = cfg.workspace;
    let sep = 2.0 * cfg.goal_radius;
    let mut sample = |accept: &dyn Fn(Vec2) -> bool| -> Result<Vec2, EpisodeError> {
        for _ in 0..100 * RESPAWN_ATTEMPTS {
            let p = uniform_point(&ws, &mut rng);
            if accept(p) {
                return Ok(p);
            }
        }
        Err(EpisodeError::Layout("could not place agents and goals; the workspace is too small".into()))
    };
    let human = match cfg.layout.human {
        Some([x, y]) => Vec2::new(x, y),
        None => sample(&|_| true)?,
    };
    let robot = match cfg.layout.robot {
        Some([x, y]) => Vec2::new(x, y),
        None => sample(&|p| (p - human).norm() >= 2.0 * cfg.safety.d_min)?,
    };
    let goals: Vec<Vec2> = match &cfg.layout.goals {
        Some(g) => g.iter().map(|[x, y]| Vec2::new(*x, *y)).collect(),
        None => {
            let mut goals: Vec<Vec2> = Vec::with_capacity(cfg.n_goals);
            for _ in 0..cfg.n_goals {
                let placed = goals.clone();
                let p = sample(&|p| {
                    placed.iter().all(|g| (p - g).norm() >= sep)
                        && (p - human).norm() >= sep
                        && (p - robot).norm() >= sep
                })?;
                goals.push(p);
            }
            goals
        }
    };
    let min_sep = if cfg.layout.goals.is_some() { 0.0 } else { sep * 0.999 };
    let goals = GoalSet::new(goals, min_sep).map_err(|e| EpisodeError::Layout(e.to_string()))?;
    Ok((AgentState::at_rest(human), AgentState::at_rest(robot), goals))
}

/// Result of one engine tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TickOutcome {
    pub record: TickRecord,
    pub events: Vec<Event>,
}

/// A running episode. The human is either simulated by the engine or driven
/// externally by supplying its next state and estimated control.
#[derive(Debug, Clone)]
pub struct Episode {
    cfg: EpisodeConfig,
    lqr: LqrSolution,
    noise: NoiseModel,
    human_params: HumanParams,
    goals: GoalSet,
    x_h: AgentState,
    x_r: AgentState,
    mind: HumanMind,
    planner: PlannerState,
    robot_committed: Option<usize>,
    robot_goal_collected: bool,
    tick: usize,
    rng_noise: ChaCha8Rng,
    rng_respawn: ChaCha8Rng,
    rng_safety: ChaCha8Rng,
    log: EpisodeLog,
}

impl Episode {
    pub fn new(cfg: EpisodeConfig) -> Result<Self, EpisodeError> {
        cfg.validate()?;
        let lqr = cfg.lqr()?;
        let (x_h, x_r, goals) = initial_layout(&cfg)?;
        let mut planner = PlannerState::new(goals.len(), cfg.robot.beta_grid.clone(), cfg.robot.delta)
            .map_err(|source| EpisodeError::Belief { tick: 0, source })?;
        planner.tie_tolerance = cfg.robot.tie_tolerance;
        planner.hold_decision = cfg.robot.hold_decision;
        let header = Header {
            seed: cfg.seed,
            human_kind: cfg.human.kind,
            robot_kind: cfg.robot.kind,
            n_ticks: cfg.n_ticks(),
            dt: cfg.dt,
            goal_radius: cfg.goal_radius,
            d_min: cfg.safety.d_min,
            epsilon: cfg.safety.epsilon,
            initial_goals: goals.as_slice().to_vec(),
            initial_human: x_h,
            initial_robot: x_r,
            config: cfg.clone(),
        };
        let mut human_params = cfg.human.params();
        if !cfg.robot_present {
            human_params.gamma = 0.0;
        }
        Ok(Self {
            noise: cfg.noise(),
            human_params,
            mind: HumanMind::new(goals.len()),
            planner,
            goals,
            x_h,
            x_r,
            robot_committed: None,
            robot_goal_collected: false,
            tick: 0,
            rng_noise: stream(cfg.seed, STREAM_NOISE),
            rng_respawn: stream(cfg.seed, STREAM_RESPAWN),
            rng_safety: stream(cfg.seed, STREAM_SAFETY),
            log: EpisodeLog { header, ticks: Vec::new(), events: Vec::new() },
            lqr,
            cfg,
        })
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.cfg
    }

    pub fn lqr(&self) -> &LqrSolution {
        &self.lqr
    }

    pub fn goals(&self) -> &GoalSet {
        &self.goals
    }

    pub fn human_state(&self) -> &AgentState {
        &self.x_h
    }

    pub fn robot_state(&self) -> &AgentState {
        &self.x_r
    }

    pub fn planner(&self) -> &PlannerState {
        &self.planner
    }

    pub fn tick_index(&self) -> usize {
        self.tick
    }

    pub fn is_done(&self) -> bool {
        self.tick >= self.cfg.n_ticks()
    }

    pub fn log(&self) -> &EpisodeLog {
        &self.log
    }

    pub fn into_log(self) -> EpisodeLog {
        self.log
    }

    /// Advance one tick with the simulated human.
    pub fn step(&mut self) -> Result<TickOutcome, EpisodeError> {
        self.advance(None)
    }

    /// Advance one tick with an externally driven human: `next_h` is where
    /// the human will be after the tick and `u_h` its estimated control.
    pub fn step_external(&mut self, next_h: AgentState, u_h: Vec2) -> Result<TickOutcome, EpisodeError> {
        self.advance(Some((next_h, u_h)))
    }

    fn env(&self) -> SafetyEnv<'_> {
        SafetyEnv {
            lqr: &self.lqr,
            workspace: self.cfg.workspace,
            noise: self.noise,
            goals: &self.goals,
            u_max: self.cfg.robot.u_max,
        }
    }

    fn advance(&mut self, external: Option<(AgentState, Vec2)>) -> Result<TickOutcome, EpisodeError> {
        if self.is_done() {
            return Err(EpisodeError::Finished);
        }
        let tick = self.tick;
        let t = (tick + 1) as f64 * self.cfg.dt;
        let belief_err = |source| EpisodeError::Belief { tick, source };
        let present = self.cfg.robot_present;
        let mut events = Vec::new();

        let u_h = match external {
            Some((_, u)) => u,
            None => {
                let selection = match (self.human_params.kind, present) {
                    (HumanKind::Uncertain, true) => {
                        uncertain_select(&self.mind, &self.x_h, &self.goals, self.human_params.confidence_threshold)
                    }
                    _ => Some(stubborn_select(&self.mind, &self.x_h, &self.goals)),
                };
                if let Some(c) = self.mind.apply_selection(selection) {
                    events.push(Event::HumanGoalChanged { tick, t, from: c.from, to: c.to, forced: c.forced });
                }
                let target = steering_target(selection, &self.x_h, &self.goals);
                social_force_control(&self.x_h, &self.x_r, target, &self.human_params, &self.lqr)
            }
        };

        let mut robot_goal = None;
        let mut mode = None;
        let mut u_r = Vec2::zeros();
        let mut safe_prob = None;
        let mut intervened = false;
        let mut candidate_counts = None;
        if present {
            let obs_h = Observation::new(self.x_h, u_h, self.x_r);
            let joint = update_joint_belief(&self.planner.joint_belief, &obs_h, &self.goals, &self.lqr).map_err(belief_err)?;
            self.planner.set_joint(joint);
            self.planner.mode = self.planner.switch_mode();

            let (goal, u) = self.robot_decision(&mut mode, &mut safe_prob, &mut intervened, &mut candidate_counts);
            robot_goal = Some(goal);
            u_r = u;

            if self.cfg.record_safety && safe_prob.is_none() {
                let cond = conditional_belief(&self.planner.prior_belief, &self.x_h, &self.cfg.cbp, &self.goals);
                let posterior = overall_posterior(&self.planner.mental_model, &cond);
                let mut rng = self.rng_safety.clone();
                let theta = self.goals.get(goal);
                safe_prob =
                    Some(long_term_safe_prob(&self.x_h, &self.x_r, theta, &posterior, &self.cfg.safety, &self.env(), &mut rng));
                self.rng_safety = rng;
            }

            let change = match self.robot_committed {
                Some(from) if self.robot_goal_collected => Some((from, true)),
                Some(from) if from != goal => Some((from, false)),
                _ => None,
            };
            if let Some((from, forced)) = change {
                events.push(Event::RobotGoalChanged { tick, t, from, to: goal, forced });
            }
            self.robot_committed = Some(goal);
            self.robot_goal_collected = false;
            self.planner.current_robot_goal = Some(goal);
            if let Some(m) = mode {
                self.planner.anchor = Some((m, self.planner.prior_belief.argmax()));
            }
        }

        let model = *self.lqr.model();
        let next_h = match external {
            Some((next, _)) => self.cfg.workspace.clamp(next),
            None => step_human(&self.x_h, u_h, &model, &self.noise, &self.cfg.workspace, &mut self.rng_noise),
        };
        let next_r = if present { step_robot(&self.x_r, u_r, &model, &self.cfg.workspace) } else { self.x_r };
        if !next_h.is_finite() || !next_r.is_finite() {
            return Err(EpisodeError::NonFinite(tick));
        }
        // The human (and the robot's model of it) watches the robot's step.
        // This happens before collection so the step is judged against the
        // goals it was aimed at.
        if present {
            let obs = Observation::new(self.x_r, u_r, self.x_h);
            self.mind.belief_over_robot =
                update_goal_belief(&self.mind.belief_over_robot, &obs, &self.goals, self.human_params.beta_h, &self.lqr)
                    .map_err(belief_err)?;
            self.planner.mental_model =
                mental_model_update(&self.planner.mental_model, &obs, &self.goals, self.human_params.beta_h, &self.lqr)
                    .map_err(belief_err)?;
        }
        self.x_h = next_h;
        self.x_r = next_r;

        self.collect_goals(tick, t, &mut events);

        let distance = self.x_h.distance_to(&self.x_r);
        if present && distance < self.cfg.safety.d_min {
            events.push(Event::Collision { tick, t, distance });
        }

        let record = TickRecord {
            tick,
            t,
            x_h: self.x_h,
            x_r: self.x_r,
            u_h,
            u_r,
            human_goal: if external.is_some() { None } else { self.mind.current_goal },
            robot_goal,
            mode,
            prior: self.planner.prior_belief.probs().to_vec(),
            mental_model: self.planner.mental_model.probs().to_vec(),
            human_belief: self.mind.belief_over_robot.probs().to_vec(),
            min_distance: if present { distance } else { f64::INFINITY },
            safe_prob,
            safety_intervened: intervened,
            candidate_counts,
        };
        self.log.ticks.push(record.clone());
        self.log.events.extend(events.iter().cloned());
        self.tick += 1;
        Ok(TickOutcome { record, events })
    }

    fn robot_decision(
        &mut self,
        mode: &mut Option<Mode>,
        safe_prob: &mut Option<f64>,
        intervened: &mut bool,
        candidate_counts: &mut Option<Vec<usize>>,
    ) -> (usize, Vec2) {
        let u_max = self.cfg.robot.u_max;
        let pursue = |s: &Self, g: usize| goal_pursuit_control(&s.x_r, s.goals.get(g), &s.lqr, u_max);
        let (g, u) = match self.cfg.robot.kind {
            RobotKind::Naive => {
                let g = naive_goal(&self.x_r, &self.goals);
                (g, pursue(self, g))
            }
            RobotKind::Reactive => {
                let g = reactive_goal(&self.x_r, &self.goals, &self.planner.prior_belief);
                (g, pursue(self, g))
            }
            RobotKind::ProactiveModel => {
                let (g, m, _) =
                    proactive_goal(&self.planner, &self.x_r, &self.x_h, &self.goals, &self.cfg.cbp, self.cfg.robot.objective);
                *mode = Some(m);
                (g, pursue(self, g))
            }
            RobotKind::ProactiveSafe => {
                let input = PipelineInput {
                    x_h: &self.x_h,
                    x_r: &self.x_r,
                    planner: &self.planner,
                    cbp: &self.cfg.cbp,
                    objective: self.cfg.robot.objective,
                };
                let mut rng = self.rng_safety.clone();
                let env = self.env();
                let out = pipeline_step(&input, &self.cfg.safety, &env, &mut rng);
                let posterior = OverallPosterior::from_probs(out.posterior.clone());
                let sc = monitored_control(
                    out.u,
                    &self.x_h,
                    &self.x_r,
                    self.goals.get(out.goal),
                    &posterior,
                    &self.cfg.safety,
                    &env,
                    &mut rng,
                );
                self.rng_safety = rng;
                *mode = Some(out.mode);
                *safe_prob = Some(sc.prob);
                *intervened = sc.intervened || out.fallback;
                *candidate_counts = Some(out.candidate_counts);
                return (out.goal, sc.u);
            }
        };
        if !self.cfg.robot.safety_monitor {
            return (g, u);
        }
        let cond = conditional_belief(&self.planner.prior_belief, &self.x_h, &self.cfg.cbp, &self.goals);
        let posterior = overall_posterior(&self.planner.mental_model, &cond);
        let mut rng = self.rng_safety.clone();
        let sc =
            monitored_control(u, &self.x_h, &self.x_r, self.goals.get(g), &posterior, &self.cfg.safety, &self.env(), &mut rng);
        self.rng_safety = rng;
        *safe_prob = Some(sc.prob);
        *intervened = sc.intervened;
        (g, sc.u)
    }

    fn collect_goals(&mut self, tick: usize, t: f64, events: &mut Vec<Event>) {
        let r = self.cfg.goal_radius;
        let present = self.cfg.robot_present;
        for i in 0..self.goals.len() {
            let g = self.goals.get(i);
            let dh = (self.x_h.position() - g).norm();
            let dr = if present { (self.x_r.position() - g).norm() } else { f64::INFINITY };
            if dh > r && dr > r {
                continue;
            }
            let by = if dh <= r && dh <= dr { Agent::Human } else { Agent::Robot };
            let agents = [self.x_h.position(), self.x_r.position()];
            let agents = if present { &agents[..] } else { &agents[..1] };
            let respawned_at =
                respawn_goal(&self.goals, i, agents, r, self.cfg.safety.d_min, &self.cfg.workspace, &mut self.rng_respawn);
            self.goals.replace(i, respawned_at);
            self.mind.goal_collected(i);
            self.planner.goal_collected(i);
            if self.robot_committed == Some(i) {
                self.robot_goal_collected = true;
            }
            events.push(Event::GoalCollected { tick, t, by, index: i, position: g, respawned_at });
        }
    }
}

/// Run a full episode with the simulated human.
pub fn run_episode(cfg: &EpisodeConfig) -> Result<EpisodeLog, EpisodeError> {
    let mut episode = Episode::new(cfg.clone())?;
    while !episode.is_done() {
        episode.step()?;
    }
    Ok(episode.into_log())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn respawn_respects_separation() {
        let mut rng = stream(5, 9);
        let ws = Workspace::default();
        let goals = GoalSet::new(vec![Vec2::new(1.0, 1.0), Vec2::new(5.0, 5.0), Vec2::new(8.0, 2.0)], 1.0).unwrap();
        let agents = [Vec2::new(3.0, 3.0), Vec2::new(7.0, 7.0)];
        for _ in 0..200 {
            let p = respawn_goal(&goals, 1, &agents, 0.5, 0.5, &ws, &mut rng);
            assert!(ws.contains(p));
            assert!((p - goals.get(0)).norm() >= 1.0 && (p - goals.get(2)).norm() >= 1.0);
            assert!(agents.iter().all(|a| (p - a).norm() >= 0.5));
        }
    }

    #[test]
    fn respawn_relaxes_in_crowded_arena() {
        let mut rng = stream(1, 9);
        let ws = Workspace::new(1.0, 1.0);
        let goals = GoalSet::new(vec![Vec2::new(0.5, 0.5), Vec2::new(0.1, 0.1)], 0.0).unwrap();
        let p = respawn_goal(&goals, 1, &[Vec2::new(0.5, 0.9)], 0.5, 0.5, &ws, &mut rng);
        assert!(ws.contains(p));
    }
}
