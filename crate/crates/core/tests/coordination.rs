use discof::coordination::{compute_ocs, components, pair_conflict, project, sense_conflict, Closure, SensingConfig};
use discof::model::{collision_restrictions, minimal_conflict_relations};
use discof::world::{Vertex, WorldGraph};
use proptest::prelude::*;

/// Four robots on an open 10x6 grid: r1 alone in a corner, r2-r3 and r3-r4
/// within range of each other, r2-r4 not.
fn four_robots() -> (WorldGraph, Vec<Vertex>) {
    let g = WorldGraph::build_grid(10, 6, &[]).unwrap();
    let pos = [(0, 0), (3, 3), (5, 3), (7, 3)].iter().map(|&(x, y)| g.vertex(x, y).unwrap()).collect();
    (g, pos)
}

#[test]
fn relay_forms_two_outer_closures() {
    let (g, pos) = four_robots();
    let cfg = SensingConfig::new(2, 2).unwrap();
    let ocs: Vec<Vec<usize>> = compute_ocs(&pos, &g, &cfg).into_iter().map(|c| c.oc).collect();
    assert_eq!(ocs, vec![vec![0], vec![1, 2, 3]]);
}

#[test]
fn shared_target_is_an_inner_closure() {
    let (g, pos) = four_robots();
    let cfg = SensingConfig::new(2, 2).unwrap();
    let cell = |x, y| g.vertex(x, y).unwrap();
    // r3 and r4 both head for (6,3); r2 walks away
    let trajectories = vec![
        project(pos[0], [], 2),
        project(pos[1], [cell(3, 4), cell(3, 5)], 2),
        project(pos[2], [cell(6, 3)], 2),
        project(pos[3], [cell(6, 3)], 2),
    ];
    let oc = Closure::new(vec![1, 2, 3]);
    let sensed = sense_conflict(&trajectories, &oc, &cfg);
    assert_eq!(sensed.ics.len(), 1);
    assert_eq!(sensed.ics[0].robots, vec![2, 3]);
    assert_eq!(sensed.ics[0].first_step, 1);
    assert_eq!(sensed.ics[0].location, cell(6, 3));
    assert_eq!(sensed.oc, vec![1, 2, 3]);
}

fn arb_plans() -> impl Strategy<Value = (WorldGraph, Vec<Vec<Vertex>>, usize)> {
    (2usize..6, 1usize..4, any::<u64>()).prop_map(|(n, h, seed)| {
        let g = WorldGraph::build_grid(4, 4, &[]).unwrap();
        // deterministic random walks from distinct starts
        let mut x = seed | 1;
        let mut next = || {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            x
        };
        let mut starts: Vec<Vertex> = Vec::new();
        while starts.len() < n {
            let v = Vertex((next() % 16) as u32);
            if !starts.contains(&v) {
                starts.push(v);
            }
        }
        let plans = starts
            .into_iter()
            .map(|s| {
                let mut walk = vec![s];
                for _ in 0..h {
                    let here = *walk.last().unwrap();
                    let nb = g.neighbors(here);
                    let k = (next() % (nb.len() as u64 + 1)) as usize;
                    walk.push(if k == nb.len() { here } else { nb[k] });
                }
                walk
            })
            .collect();
        (g, plans, h)
    })
}

proptest! {
    #[test]
    fn pairwise_prediction_matches_minimal_relations((_g, plans, h) in arb_plans()) {
        let minimal = minimal_conflict_relations(&plans, h, &collision_restrictions());
        // collision rules are pairwise, so every minimal set is a pair
        prop_assert!(minimal.iter().all(|m| m.len() == 2));
        for i in 0..plans.len() {
            for j in i + 1..plans.len() {
                let predicted = pair_conflict(&plans[i], &plans[j], h).is_some();
                prop_assert_eq!(predicted, minimal.contains(&vec![i, j]));
            }
        }
        let cfg = SensingConfig::new(4, h as u32).unwrap();
        let everyone = Closure::new((0..plans.len()).collect());
        let sensed = sense_conflict(&plans, &everyone, &cfg);
        let mut ics: Vec<Vec<usize>> = sensed.ics.iter().map(|ic| ic.robots.clone()).collect();
        ics.sort();
        let mut expected: Vec<Vec<usize>> = components(plans.len(), |a, b| {
            minimal.contains(&vec![a.min(b), a.max(b)])
        })
        .into_iter()
        .filter(|c| c.len() > 1)
        .collect();
        expected.sort();
        prop_assert_eq!(ics, expected);
    }

    #[test]
    fn closures_partition_the_robots((g, plans, _h) in arb_plans(), r in 1u32..4) {
        let pos: Vec<Vertex> = plans.iter().map(|p| p[0]).collect();
        let cfg = SensingConfig::new(r, 1).unwrap();
        let ocs = compute_ocs(&pos, &g, &cfg);
        let mut all: Vec<usize> = ocs.iter().flat_map(|c| c.oc.clone()).collect();
        all.sort();
        prop_assert_eq!(all, (0..pos.len()).collect::<Vec<_>>());
        for a in &ocs {
            for b in &ocs {
                if a.oc != b.oc {
                    for &i in &a.oc {
                        for &j in &b.oc {
                            prop_assert!(g.chebyshev(pos[i], pos[j]) > r);
                        }
                    }
                }
            }
        }
    }
}
