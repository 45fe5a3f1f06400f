use hrc_core::belief::{update_goal_belief, update_joint_belief, GoalBelief, GoalSet, JointBelief, Observation};
use hrc_core::cbp::{conditional_belief, CbpParams};
use hrc_core::dynamics::{make_double_integrator, AgentState, LqrSolution, Vec2};
use hrc_core::humans::{social_force_control, uncertain_select, HumanMind, HumanParams};
use proptest::prelude::*;

fn lqr() -> LqrSolution {
    LqrSolution::from_diagonal(&make_double_integrator(0.1).unwrap(), [1.0; 4], [1.0; 2]).unwrap()
}

fn point() -> impl Strategy<Value = Vec2> {
    (0.0..10.0f64, 0.0..10.0f64).prop_map(|(x, y)| Vec2::new(x, y))
}

fn state() -> impl Strategy<Value = AgentState> {
    (point(), -1.0..1.0f64, -1.0..1.0f64).prop_map(|(p, vx, vy)| AgentState::new(p.x, vx, p.y, vy))
}

/// Goal layouts with pairwise separation of at least 0.5.
fn layout(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<Vec2>> {
    prop::collection::vec(point(), n).prop_filter("goals too close", |g| {
        g.iter().enumerate().all(|(i, a)| g[i + 1..].iter().all(|b| (a - b).norm() >= 0.5))
    })
}

fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01..1.0f64, n)
}

fn total(p: &[f64]) -> f64 {
    p.iter().sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn goal_update_stays_normalized(goals in layout(2..=6), x in state(), u in (-5.0..5.0f64, -5.0..5.0f64), beta in 0.05..5.0f64) {
        let set = GoalSet::new(goals.clone(), 0.5).unwrap();
        let obs = Observation::new(x, Vec2::new(u.0, u.1), AgentState::default());
        let b = update_goal_belief(&GoalBelief::uniform(goals.len()), &obs, &set, beta, &lqr()).unwrap();
        prop_assert!((total(b.probs()) - 1.0).abs() <= 1e-12);
        prop_assert!(b.probs().iter().all(|p| *p >= 0.0));
    }

    #[test]
    fn joint_update_and_reset_stay_normalized(goals in layout(2..=6), x in state(), u in (-5.0..5.0f64, -5.0..5.0f64), pick in 0usize..6) {
        let set = GoalSet::new(goals.clone(), 0.5).unwrap();
        let obs = Observation::new(x, Vec2::new(u.0, u.1), AgentState::default());
        let mut jb = update_joint_belief(&JointBelief::uniform(goals.len(), vec![0.05, 0.5, 5.0]).unwrap(), &obs, &set, &lqr()).unwrap();
        prop_assert!((total(jb.probs()) - 1.0).abs() <= 1e-12);
        let i = pick % goals.len();
        jb.reset_goal(i);
        prop_assert!((total(jb.probs()) - 1.0).abs() <= 1e-12);
        prop_assert!((total(jb.row(i)) - 1.0 / goals.len() as f64).abs() <= 1e-12);
        let mut gb = jb.marginal_goals();
        gb.reset_goal((i + 1) % goals.len());
        prop_assert!((total(gb.probs()) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn goal_update_is_permutation_equivariant(goals in layout(3..=5), x in state(), u in (-5.0..5.0f64, -5.0..5.0f64), seed in any::<u64>()) {
        let n = goals.len();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.rotate_left((seed % n as u64) as usize);
        if seed % 2 == 1 { perm.swap(0, n - 1); }
        let obs = Observation::new(x, Vec2::new(u.0, u.1), AgentState::default());
        let prior = GoalBelief::from_weights((0..n).map(|i| 1.0 + i as f64).collect()).unwrap();
        let set = GoalSet::new(goals.clone(), 0.5).unwrap();
        let permuted_set = GoalSet::new(perm.iter().map(|&i| goals[i]).collect(), 0.5).unwrap();
        let a = update_goal_belief(&prior, &obs, &set, 1.0, &lqr()).unwrap().permuted(&perm);
        let b = update_goal_belief(&prior.permuted(&perm), &obs, &permuted_set, 1.0, &lqr()).unwrap();
        for (p, q) in a.probs().iter().zip(b.probs()) {
            prop_assert!((p - q).abs() <= 1e-12);
        }
    }

    #[test]
    fn conditional_rows_are_stochastic(goals in layout(1..=6), x in state(), w in (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64), beta in 0.0..10.0f64, s in weights(6)) {
        let n = goals.len();
        let set = GoalSet::new(goals, 0.5).unwrap();
        let prior = GoalBelief::from_weights(s[..n].to_vec()).unwrap();
        let params = CbpParams { w1: w.0, w2: w.1, w3: w.2, beta_cbp: beta };
        let cond = conditional_belief(&prior, &x, &params, &set);
        for row in cond.rows() {
            prop_assert!((total(row) - 1.0).abs() <= 1e-12);
            prop_assert!(row.iter().all(|p| *p >= 0.0));
        }
    }

    #[test]
    fn conditional_is_permutation_equivariant(goals in layout(3..=5), x in state(), s in weights(5), shift in 1usize..5) {
        let n = goals.len();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.rotate_left(shift % n);
        let params = CbpParams::default();
        let prior = GoalBelief::from_weights(s[..n].to_vec()).unwrap();
        let cond = conditional_belief(&prior, &x, &params, &GoalSet::new(goals.clone(), 0.5).unwrap());
        let pcond = conditional_belief(
            &prior.permuted(&perm),
            &x,
            &params,
            &GoalSet::new(perm.iter().map(|&i| goals[i]).collect(), 0.5).unwrap(),
        );
        for r in 0..n {
            for h in 0..n {
                prop_assert!((pcond.get(r, h) - cond.get(perm[r], perm[h])).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn more_robot_repulsion_never_raises_shared_goal(goals in layout(2..=6), x in state(), s in weights(6), w2 in 0.0..3.0f64, dw in 0.0..3.0f64) {
        let n = goals.len();
        let set = GoalSet::new(goals, 0.5).unwrap();
        let prior = GoalBelief::from_weights(s[..n].to_vec()).unwrap();
        let lo = conditional_belief(&prior, &x, &CbpParams { w2, ..Default::default() }, &set);
        let hi = conditional_belief(&prior, &x, &CbpParams { w2: w2 + dw, ..Default::default() }, &set);
        for r in 0..n {
            prop_assert!(hi.get(r, r) <= lo.get(r, r) + 1e-12);
        }
    }

    #[test]
    fn cbp_limits(goals in layout(2..=6), x in state(), pick in 0usize..6) {
        let n = goals.len();
        let set = GoalSet::new(goals, 0.5).unwrap();
        let flat = conditional_belief(&GoalBelief::uniform(n), &x, &CbpParams { beta_cbp: 0.0, ..Default::default() }, &set);
        for row in flat.rows() {
            prop_assert!(row.iter().all(|p| (p - 1.0 / n as f64).abs() <= 1e-12));
        }
        let k = pick % n;
        let one_hot = GoalBelief::from_weights((0..n).map(|i| if i == k { 1.0 } else { 0.0 }).collect()).unwrap();
        let sticky = conditional_belief(&one_hot, &x, &CbpParams { w3: 1e3, ..Default::default() }, &set);
        for r in 0..n {
            prop_assert!(sticky.get(r, k) >= 0.99);
        }
    }

    #[test]
    fn human_control_is_saturated(x_h in state(), x_r in state(), goal in point(), gamma in 0.0..20.0f64) {
        let params = HumanParams { gamma, ..Default::default() };
        let lqr = lqr();
        let u = social_force_control(&x_h, &x_r, goal, &params, &lqr);
        prop_assert!(u.norm() <= params.u_max + 1e-12);
        let raw = social_force_control(&x_h, &x_r, goal, &HumanParams { gamma, u_max: 1e12, ..Default::default() }, &lqr);
        if raw.norm() > 1e-9 {
            prop_assert!((u.normalize() - raw.normalize()).norm() <= 1e-9);
        }
    }
}

#[test]
fn uncertain_human_waits_for_a_centered_idle_robot() {
    let goals = GoalSet::new(
        vec![Vec2::new(2.0, 2.0), Vec2::new(8.0, 2.0), Vec2::new(2.0, 8.0), Vec2::new(8.0, 8.0)],
        1.0,
    )
    .unwrap();
    let lqr = lqr();
    let robot = AgentState::at_rest(Vec2::new(5.0, 5.0));
    let mut mind = HumanMind::new(4);
    let human = AgentState::at_rest(Vec2::new(3.0, 6.0));
    for _ in 0..50 {
        let obs = Observation::new(robot, Vec2::zeros(), human);
        mind.belief_over_robot = update_goal_belief(&mind.belief_over_robot, &obs, &goals, 1.0, &lqr).unwrap();
        assert!(mind.belief_over_robot.max() < 0.4);
        assert_eq!(uncertain_select(&mind, &human, &goals, 0.4), None);
    }
}
