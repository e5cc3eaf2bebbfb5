use discof::convergence::{converge, ContributionLedger, ConvergeRequest, DEFAULT_NODE_BUDGET};
use discof::coordination::{at, project, Closure, SensingConfig};
use discof::world::{GoalDistances, Vertex, WorldGraph};
use proptest::prelude::*;

/// Brute-force reference: the shallowest depth below `beta` with a safe
/// joint move sequence for robots 0 and 1 that strictly lowers their summed
/// goal distance and leaves shortest-path continuations clear, and the
/// smallest summed distance at that depth.
fn reference(g: &WorldGraph, costs: &GoalDistances, traj: &[Vec<Vertex>], beta: usize) -> Option<(usize, i64)> {
    let cost = |i: usize, v: Vertex| costs.cost(i, v) as i64;
    let lhs = cost(0, traj[0][0]) + cost(1, traj[1][0]);
    let others: Vec<usize> = (2..traj.len()).collect();
    let collide = |a0: Vertex, a1: Vertex, b0: Vertex, b1: Vertex| a1 == b1 || (a0 != a1 && a1 == b0 && b1 == a0);
    let options = |v: Vertex| std::iter::once(v).chain(g.neighbors(v).iter().copied()).collect::<Vec<_>>();
    let clear = |state: [Vertex; 2], t: usize| {
        let mut cur = state;
        for step in t + 1..=beta {
            let nxt = [0, 1].map(|i| costs.next_step(g, i, cur[i]).unwrap_or(cur[i]));
            if collide(cur[0], nxt[0], cur[1], nxt[1]) {
                return false;
            }
            for a in 0..2 {
                for &o in &others {
                    if collide(cur[a], nxt[a], at(&traj[o], step - 1), at(&traj[o], step)) {
                        return false;
                    }
                }
            }
            cur = nxt;
        }
        true
    };
    let mut frontier = vec![[traj[0][0], traj[1][0]]];
    for t in 1..beta {
        let mut next = Vec::new();
        for s in &frontier {
            for a in options(s[0]) {
                for b in options(s[1]) {
                    if collide(s[0], a, s[1], b) {
                        continue;
                    }
                    let blocked = others.iter().any(|&o| {
                        let (o0, o1) = (at(&traj[o], t - 1), at(&traj[o], t));
                        collide(s[0], a, o0, o1) || collide(s[1], b, o0, o1)
                    });
                    if !blocked {
                        next.push([a, b]);
                    }
                }
            }
        }
        next.sort();
        next.dedup();
        let best = next.iter().filter(|s| clear(**s, t)).map(|s| cost(0, s[0]) + cost(1, s[1])).filter(|&r| r < lhs).min();
        if let Some(rhs) = best {
            return Some((t, rhs));
        }
        frontier = next;
    }
    None
}

fn arb_case() -> impl Strategy<Value = Vec<(u32, u32)>> {
    proptest::collection::vec(0u32..25, 6).prop_filter("distinct cells", |cells| {
        let starts = [cells[0], cells[2], cells[4]];
        let goals = [cells[1], cells[3], cells[5]];
        starts.iter().enumerate().all(|(i, a)| starts[i + 1..].iter().all(|b| a != b))
            && goals.iter().enumerate().all(|(i, a)| goals[i + 1..].iter().all(|b| a != b))
    })
    .prop_map(|cells| cells.chunks(2).map(|c| (c[0], c[1])).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]
    #[test]
    fn matches_brute_force_on_small_grids(robots in arb_case(), beta in 2u32..5) {
        let g = WorldGraph::build_grid(5, 5, &[]).unwrap();
        let goals: Vec<Vertex> = robots.iter().map(|r| Vertex(r.1)).collect();
        let costs = GoalDistances::new(&g, &goals);
        let cfg = SensingConfig::new(4, beta).unwrap();
        let trajectories: Vec<Vec<Vertex>> = robots
            .iter()
            .enumerate()
            .map(|(i, r)| project(Vertex(r.0), costs.route(&g, i, Vertex(r.0)), beta as usize))
            .collect();
        let ledger = ContributionLedger::new(3);
        let oc = Closure::new(vec![0, 1, 2]);
        let req = ConvergeRequest {
            g: &g,
            costs: &costs,
            ic: &[0, 1],
            oc: &oc,
            trajectories: &trajectories,
            ledger: &ledger,
            cfg,
            eligible: &|r| r < 2,
            conflict_cell: trajectories[0][1],
            max_participants: 2,
            node_budget: DEFAULT_NODE_BUDGET,
        };
        let found = converge(&req).map(|p| {
            prop_assert!(p.certificate.holds());
            prop_assert_eq!(p.participants.clone(), vec![0, 1]);
            let rhs: i64 = (0..2).map(|k| costs.cost(k, p.local_goal(k)) as i64).sum();
            prop_assert_eq!(rhs, p.certificate.rhs);
            Ok((p.len(), rhs))
        });
        let found = found.transpose()?;
        prop_assert_eq!(found, reference(&g, &costs, &trajectories, beta as usize));
    }
}

#[test]
fn head_on_swap_in_the_open_resolves() {
    let g = WorldGraph::build_grid(5, 5, &[]).unwrap();
    let (a, b) = (g.vertex(0, 2).unwrap(), g.vertex(4, 2).unwrap());
    let costs = GoalDistances::new(&g, &[b, a]);
    let cfg = SensingConfig::new(2, 3).unwrap();
    let trajectories: Vec<Vec<Vertex>> =
        [a, b].iter().enumerate().map(|(i, &s)| project(s, costs.route(&g, i, s), 3)).collect();
    let ledger = ContributionLedger::new(2);
    let oc = Closure::new(vec![0, 1]);
    let req = ConvergeRequest {
        g: &g,
        costs: &costs,
        ic: &[0, 1],
        oc: &oc,
        trajectories: &trajectories,
        ledger: &ledger,
        cfg,
        eligible: &|_| true,
        conflict_cell: g.vertex(2, 2).unwrap(),
        max_participants: 2,
        node_budget: DEFAULT_NODE_BUDGET,
    };
    let plan = converge(&req).expect("open grid leaves room to pass");
    assert_eq!(plan.certificate.lhs, 8);
    assert!(plan.certificate.rhs < 8);
    assert_eq!(reference(&g, &costs, &trajectories, 3), Some((plan.len(), plan.certificate.rhs)));
}
