use discof::coordination::SensingConfig;
use discof::executor::{self, leader_for, CertificateKind, EventKind, ExecutorError, Mode, Outcome, RunConfig, StepDuration};
use discof::harness::{check_safety, generate_instance};
use discof::world::{GoalDistances, RobotSpec, Scenario, WorldGraph};

fn scenario(w: u32, h: u32, obstacles: &[(u32, u32)], robots: &[((u32, u32), (u32, u32))]) -> Scenario {
    let g = WorldGraph::build_grid(w, h, obstacles).unwrap();
    let specs = robots
        .iter()
        .enumerate()
        .map(|(i, &(s, t))| RobotSpec { id: i as u32, start: g.vertex(s.0, s.1).unwrap(), goal: g.vertex(t.0, t.1).unwrap() })
        .collect();
    Scenario::new(g, specs, 3).unwrap()
}

#[test]
fn lone_robot_follows_a_shortest_path() {
    let s = scenario(8, 6, &[(3, 1), (3, 2), (3, 3)], &[((0, 2), (7, 2))]);
    let trace = executor::run(&s, &RunConfig::default()).unwrap();
    assert_eq!(trace.outcome, Outcome::Completed);
    let cost = GoalDistances::for_scenario(&s).cost(0, s.starts()[0]);
    assert_eq!(trace.steps(), cost as u64);
    let path = trace.positions_of(0);
    assert_eq!(path.len() as u32, cost + 1);
    assert!(path.windows(2).all(|w| s.graph().adjacent(w[0], w[1])));
    assert_eq!(trace.certificates.len(), 0);
}

#[test]
fn distant_robots_never_share_a_barrier() {
    let s = scenario(20, 4, &[], &[((0, 0), (5, 0)), ((19, 3), (14, 3))]);
    let trace = executor::run(&s, &RunConfig::default()).unwrap();
    assert!(trace.outcome.is_completed());
    assert!(trace.releases.iter().all(|r| r.robots.len() == 1));
    let barriers = trace.events.iter().filter(|e| e.kind == EventKind::BarrierRelease);
    assert!(barriers.into_iter().all(|e| !e.detail.contains(',')));
    // clocks run independently
    let times = |r: usize| -> Vec<u64> { trace.rows.iter().filter(|x| x.robot == r).map(|x| x.sim_time).collect() };
    assert_ne!(times(0), times(1));
}

#[test]
fn closure_members_step_together() {
    let s = scenario(6, 3, &[], &[((0, 1), (5, 1)), ((1, 0), (4, 0))]);
    let mut cfg = RunConfig::default();
    cfg.durations = StepDuration::Uniform { min: 1, max: 5 };
    let trace = executor::run(&s, &cfg).unwrap();
    assert!(trace.outcome.is_completed());
    let joint: Vec<_> = trace.releases.iter().filter(|r| r.robots.len() == 2).collect();
    assert!(!joint.is_empty());
    assert!(joint.iter().all(|r| r.barrier));
    assert!(check_safety(&s, &trace).is_empty());
}

#[test]
fn parked_robot_in_a_closure_stays_put() {
    // robot 1 starts on its goal, next to robot 0's route
    let s = scenario(7, 3, &[], &[((0, 1), (6, 1)), ((3, 0), (3, 0))]);
    let trace = executor::run(&s, &RunConfig::default()).unwrap();
    assert!(trace.outcome.is_completed());
    let parked = trace.positions_of(1);
    assert!(parked.len() > 1, "the parked robot takes stay steps at barriers");
    assert!(parked.iter().all(|&v| v == s.goals()[1]));
}

#[test]
fn plain_mode_never_decouples() {
    for seed in 0..6 {
        let s = generate_instance(seed, 20, 20, 30, 0.1).unwrap();
        let plain = executor::run(&s, &RunConfig::new(Mode::Discof)).unwrap();
        assert!(plain.outcome.is_completed());
        assert_eq!(plain.count(EventKind::Decouple), 0);
        assert!(plain.certificates.iter().all(|c| c.kind == CertificateKind::Convergence));

        let plus = executor::run(&s, &RunConfig::new(Mode::DiscofPlus)).unwrap();
        assert!(plus.outcome.is_completed());
        let certified = plus.certificates.iter().filter(|c| c.kind == CertificateKind::Decouple).count();
        assert_eq!(plus.count(EventKind::Decouple), certified);
        assert!(plus.certificates.iter().all(|c| c.lhs > c.rhs));
    }
}

#[test]
fn runs_are_reproducible() {
    let s = generate_instance(11, 20, 20, 30, 0.15).unwrap();
    let cfg = RunConfig::default();
    let a = executor::run(&s, &cfg).unwrap();
    let b = executor::run(&s, &cfg).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.event_log(), b.event_log());
    let mut other = cfg.clone();
    other.seed = Some(12345);
    let c = executor::run(&s, &other).unwrap();
    assert_ne!(a.event_log(), c.event_log());
}

#[test]
fn sync_only_on_conflict_is_safe_and_complete() {
    for seed in 0..4 {
        let s = generate_instance(100 + seed, 20, 20, 30, 0.05).unwrap();
        let mut cfg = RunConfig::default();
        cfg.sync_only_on_conflict = true;
        let trace = executor::run(&s, &cfg).unwrap();
        assert!(trace.outcome.is_completed());
        assert!(check_safety(&s, &trace).is_empty());
    }
}

#[test]
fn exhausted_budget_is_an_outcome() {
    let s = scenario(10, 1, &[], &[((0, 0), (9, 0))]);
    let mut cfg = RunConfig::default();
    cfg.step_budget = Some(3);
    let trace = executor::run(&s, &cfg).unwrap();
    assert_eq!(trace.outcome, Outcome::BudgetExceeded { budget: 3 });
    assert!(trace.steps() <= 3);
}

#[test]
fn preflight_rejects_unusable_configurations() {
    let s = scenario(4, 1, &[], &[((0, 0), (3, 0))]);
    let mut cfg = RunConfig::default();
    cfg.sensing = SensingConfig::new(1, 1).unwrap();
    assert_eq!(executor::run(&s, &cfg).unwrap_err(), ExecutorError::RangeTooSmall(1));
    let mut cfg = RunConfig::default();
    cfg.durations = StepDuration::Constant(0);
    assert!(matches!(executor::run(&s, &cfg), Err(ExecutorError::BadDuration { .. })));
    let mut cfg = RunConfig::default();
    cfg.step_budget = Some(0);
    assert_eq!(executor::run(&s, &cfg).unwrap_err(), ExecutorError::ZeroBudget);
}

#[test]
fn longest_waiting_robot_leads() {
    assert_eq!(leader_for(&[2, 4], &[0, 0, 7, 0, 3]), Some(4));
    assert_eq!(leader_for(&[3, 1], &[0, 5, 0, 5]), Some(1));
    assert_eq!(leader_for(&[], &[]), None);
}
