use discof::convergence::ContributionLedger;
use discof::coordination::SensingConfig;
use discof::model::{collision_restrictions, validate_trace};
use discof::pushpull::{
    assign_subproblems, check_decouple, compute_priority, push_and_pull, CouplingGroup, PushPullContext,
    PushPullLimits, Regions,
};
use discof::world::{GoalDistances, Vertex, WorldGraph};

fn joint(paths: &std::collections::BTreeMap<usize, Vec<Vertex>>, robots: usize, pos: &[Vertex]) -> Vec<Vec<Vertex>> {
    let len = paths.values().map(Vec::len).max().unwrap();
    (0..len)
        .map(|t| (0..robots).map(|r| paths.get(&r).map_or(pos[r], |p| p[t.min(p.len() - 1)])).collect())
        .collect()
}

/// ```text
/// ####.
/// .....
/// ####.
/// ```
fn dead_end() -> WorldGraph {
    let obstacles: Vec<(u32, u32)> = (0..4).flat_map(|x| [(x, 0), (x, 2)]).collect();
    WorldGraph::build_grid(5, 3, &obstacles).unwrap()
}

fn run_dead_end(limits: PushPullLimits) {
    let g = dead_end();
    let leader_goal = g.vertex(0, 1).unwrap();
    let parked = g.vertex(2, 1).unwrap();
    let goals = [leader_goal, parked];
    let costs = GoalDistances::new(&g, &goals);
    let regions = Regions::compute(&g);
    let ctx = PushPullContext { g: &g, costs: &costs, regions: &regions, cfg: SensingConfig::default(), limits };
    let pos = [g.vertex(4, 0).unwrap(), parked];
    let group = CouplingGroup::form(0, [0, 1], &ctx, &pos, &ContributionLedger::new(2));
    assert_eq!(group.leader(), Some(0));
    let paths = push_and_pull(&ctx, &group, &pos).unwrap();
    let trace = joint(&paths, 2, &pos);
    assert!(validate_trace(&g, &trace, &collision_restrictions()).unwrap().is_empty());
    assert_eq!(trace.last().unwrap(), &goals.to_vec());
    // the parked robot had to leave its goal
    assert!(paths[&1].iter().any(|&v| v != parked));
}

#[test]
fn dead_end_blocker_is_swapped_out_and_restored() {
    run_dead_end(PushPullLimits { exact_state_budget: 0, ..PushPullLimits::default() });
}

#[test]
fn dead_end_with_exact_search() {
    run_dead_end(PushPullLimits::default());
}

/// ```text
/// #.#####.#
/// .........
/// #.#####.#
/// ```
fn corridor() -> WorldGraph {
    let obstacles: Vec<(u32, u32)> = [0, 2, 3, 4, 5, 6, 8].iter().flat_map(|&x| [(x, 0), (x, 2)]).collect();
    WorldGraph::build_grid(9, 3, &obstacles).unwrap()
}

#[test]
fn corridor_group_pushes_opposing_robots_clear() {
    let g = corridor();
    let goals = [g.vertex(8, 1).unwrap(), g.vertex(1, 0).unwrap(), g.vertex(0, 1).unwrap()];
    let costs = GoalDistances::new(&g, &goals);
    let regions = Regions::compute(&g);
    let limits = PushPullLimits { exact_state_budget: 0, ..PushPullLimits::default() };
    let ctx = PushPullContext { g: &g, costs: &costs, regions: &regions, cfg: SensingConfig::default(), limits };
    let pos = [g.vertex(3, 1).unwrap(), g.vertex(5, 1).unwrap(), g.vertex(4, 1).unwrap()];
    let group = CouplingGroup::form(0, [0, 1, 2], &ctx, &pos, &ContributionLedger::new(3));
    let paths = push_and_pull(&ctx, &group, &pos).unwrap();
    let trace = joint(&paths, 3, &pos);
    assert!(validate_trace(&g, &trace, &collision_restrictions()).unwrap().is_empty());
    assert_eq!(trace.last().unwrap(), &goals.to_vec());
    let cfg = SensingConfig::default();
    for row in &trace {
        let linked = |a: usize, b: usize| cfg.senses(&g, row[a], row[b]);
        // members that have not finished stay within relay range
        let active: Vec<usize> = (0..3).filter(|&r| row[r] != goals[r]).collect();
        if active.len() >= 2 {
            let comps = discof::coordination::components(3, linked);
            assert!(comps.iter().any(|c| active.iter().all(|a| c.contains(a))), "{row:?}");
        }
    }
}

#[test]
fn deep_corridor_goal_goes_first() {
    // dead-end corridor off an open room; robot 0's goal is deepest
    let mut obstacles = vec![];
    for x in 3..7 {
        obstacles.push((x, 0));
        obstacles.push((x, 2));
    }
    let g = WorldGraph::build_grid(7, 3, &obstacles).unwrap();
    let goals = [g.vertex(6, 1).unwrap(), g.vertex(4, 1).unwrap()];
    let costs = GoalDistances::new(&g, &goals);
    let regions = Regions::compute(&g);
    let ctx = PushPullContext { g: &g, costs: &costs, regions: &regions, cfg: SensingConfig::default(), limits: PushPullLimits::default() };
    let pos = [g.vertex(0, 0).unwrap(), g.vertex(1, 1).unwrap()];
    let a = assign_subproblems(&regions, &[0, 1], &costs);
    assert_eq!(compute_priority(&ctx, &[0, 1], &a, &pos), vec![0, 1]);
}

#[test]
fn two_rooms_give_two_subproblems() {
    // 7x5: rooms x<=2 and x>=4 joined by a corridor on row 2
    let obstacles: Vec<(u32, u32)> = (0..5).filter(|&y| y != 2).map(|y| (3, y)).collect();
    let g = WorldGraph::build_grid(7, 5, &obstacles).unwrap();
    let goals = [g.vertex(0, 0).unwrap(), g.vertex(1, 4).unwrap(), g.vertex(6, 4).unwrap()];
    let costs = GoalDistances::new(&g, &goals);
    let regions = Regions::compute(&g);
    let a = assign_subproblems(&regions, &[0, 1, 2], &costs);
    assert_eq!(a.subproblem_count(), 2);
    assert_eq!(a.members_of.values().cloned().collect::<Vec<_>>(), vec![vec![0, 1], vec![2]]);
    let single = assign_subproblems(&regions, &[2], &costs);
    assert_eq!(single.subproblem_count(), 1);
}

#[test]
fn all_members_closer_means_decouple() {
    let g = WorldGraph::build_grid(6, 6, &[]).unwrap();
    let goals = [g.vertex(5, 5).unwrap(), g.vertex(0, 5).unwrap()];
    let costs = GoalDistances::new(&g, &goals);
    let regions = Regions::compute(&g);
    let ctx = PushPullContext { g: &g, costs: &costs, regions: &regions, cfg: SensingConfig::default(), limits: PushPullLimits::default() };
    let pos = [g.vertex(0, 0).unwrap(), g.vertex(5, 0).unwrap()];
    let mut group = CouplingGroup::form(0, [0, 1], &ctx, &pos, &ContributionLedger::new(2));
    group.tick();
    let now = [g.vertex(1, 1).unwrap(), g.vertex(4, 1).unwrap()];
    assert!(check_decouple(&group, &now, &costs).unwrap().holds);
}
