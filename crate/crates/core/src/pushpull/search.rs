use std::collections::hash_map::Entry;
use std::collections::VecDeque;

use rustc_hash::FxHashMap;

use crate::world::{Vertex, WorldGraph};

pub(crate) enum SearchResult {
    /// Joint positions after each step; the start state is not included.
    Found(Vec<Vec<Vertex>>),
    Exhausted,
    OverBudget,
}

/// Breadth-first search over joint positions of a few robots confined to
/// `cells`, with vertex and swap conflicts forbidden. Returns the shallowest
/// state satisfying `goal`.
pub(crate) fn joint_bfs(
    g: &WorldGraph,
    start: &[Vertex],
    cells: &[Vertex],
    goal: impl Fn(&[Vertex]) -> bool,
    budget: usize,
) -> SearchResult {
    let mut slot = vec![u32::MAX; g.cell_count()];
    for (k, v) in cells.iter().enumerate() {
        slot[v.index()] = k as u32;
    }
    if start.iter().any(|v| slot[v.index()] == u32::MAX) {
        return SearchResult::Exhausted;
    }
    let base = cells.len() as u64;
    let m = start.len();
    // states are packed into one u64
    if (base as f64).powi(m as i32) >= u64::MAX as f64 {
        return SearchResult::OverBudget;
    }
    let encode = |q: &[u32]| q.iter().fold(0u64, |acc, &s| acc * base + s as u64);
    let nbrs: Vec<Vec<u32>> = cells
        .iter()
        .map(|&v| {
            std::iter::once(v)
                .chain(g.neighbors(v).iter().copied())
                .filter_map(|w| (slot[w.index()] != u32::MAX).then_some(slot[w.index()]))
                .collect()
        })
        .collect();

    let decode = |mut code: u64, out: &mut [u32]| {
        for slot in out.iter_mut().rev() {
            *slot = (code % base) as u32;
            code /= base;
        }
    };

    let first: Vec<u32> = start.iter().map(|v| slot[v.index()]).collect();
    let first_code = encode(&first);
    // parent code of every visited state
    let mut parent: FxHashMap<u64, u64> = FxHashMap::default();
    parent.insert(first_code, first_code);
    let mut queue = VecDeque::from([first_code]);
    let mut state = vec![0u32; m];
    let mut next = Vec::with_capacity(m);
    let mut succ = Vec::new();
    let mut vertices = vec![Vertex(0); m];
    while let Some(code) = queue.pop_front() {
        decode(code, &mut state);
        succ.clear();
        expand(&nbrs, &state, &mut next, &mut succ, base);
        for &c in &succ {
            if let Entry::Vacant(e) = parent.entry(c) {
                e.insert(code);
                if parent.len() > budget {
                    return SearchResult::OverBudget;
                }
                decode(c, &mut state);
                for (p, &k) in state.iter().enumerate() {
                    vertices[p] = cells[k as usize];
                }
                if goal(&vertices) {
                    let mut steps = Vec::new();
                    let mut at = c;
                    while at != first_code {
                        decode(at, &mut state);
                        steps.push(state.iter().map(|&k| cells[k as usize]).collect());
                        at = parent[&at];
                    }
                    steps.reverse();
                    return SearchResult::Found(steps);
                }
                queue.push_back(c);
            }
        }
    }
    SearchResult::Exhausted
}

fn expand(nbrs: &[Vec<u32>], state: &[u32], next: &mut Vec<u32>, out: &mut Vec<u64>, base: u64) {
    let p = next.len();
    if p == state.len() {
        out.push(next.iter().fold(0u64, |acc, &s| acc * base + s as u64));
        return;
    }
    let here = state[p];
    for &cand in &nbrs[here as usize] {
        if next.contains(&cand) {
            continue;
        }
        if cand != here && (0..p).any(|q| state[q] == cand && next[q] == here) {
            continue;
        }
        next.push(cand);
        expand(nbrs, state, next, out, base);
        next.pop();
    }
}
