use crate::world::{Vertex, WorldGraph};

/// Two-edge-connected components of the free graph. Cells on corridors and
/// dead ends (every incident edge a bridge) form singleton regions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Regions {
    label: Vec<u32>,
    size: Vec<u32>,
}

impl Regions {
    pub fn compute(g: &WorldGraph) -> Self {
        let n = g.cell_count();
        let bridges = bridges(g);
        let is_bridge = |a: Vertex, b: Vertex| bridges.binary_search(&(a.min(b), a.max(b))).is_ok();
        let mut label = vec![u32::MAX; n];
        let mut size = Vec::new();
        for v in g.vertices() {
            if label[v.index()] != u32::MAX {
                continue;
            }
            let id = size.len() as u32;
            let mut count = 0;
            let mut stack = vec![v];
            label[v.index()] = id;
            while let Some(u) = stack.pop() {
                count += 1;
                for &w in g.neighbors(u) {
                    if label[w.index()] == u32::MAX && !is_bridge(u, w) {
                        label[w.index()] = id;
                        stack.push(w);
                    }
                }
            }
            size.push(count);
        }
        Self { label, size }
    }

    pub fn region(&self, v: Vertex) -> u32 {
        self.label[v.index()]
    }

    pub fn region_size(&self, region: u32) -> u32 {
        self.size[region as usize]
    }

    pub fn region_count(&self) -> usize {
        self.size.len()
    }

    /// True for cells whose region is a single cell.
    pub fn is_corridor(&self, v: Vertex) -> bool {
        self.size[self.label[v.index()] as usize] == 1
    }
}

/// Bridge edges as sorted `(low, high)` pairs, found with an iterative
/// low-link traversal.
pub fn bridges(g: &WorldGraph) -> Vec<(Vertex, Vertex)> {
    let n = g.cell_count();
    let mut disc = vec![u32::MAX; n];
    let mut low = vec![0u32; n];
    let mut out = Vec::new();
    let mut time = 0;
    for root in g.vertices() {
        if disc[root.index()] != u32::MAX {
            continue;
        }
        // (vertex, parent, next neighbour index)
        let mut stack: Vec<(Vertex, Option<Vertex>, usize)> = vec![(root, None, 0)];
        disc[root.index()] = time;
        low[root.index()] = time;
        time += 1;
        while let Some(&mut (v, parent, ref mut next)) = stack.last_mut() {
            let nbrs = g.neighbors(v);
            if *next < nbrs.len() {
                let w = nbrs[*next];
                *next += 1;
                if Some(w) == parent {
                    continue;
                }
                if disc[w.index()] == u32::MAX {
                    disc[w.index()] = time;
                    low[w.index()] = time;
                    time += 1;
                    stack.push((w, Some(v), 0));
                } else {
                    low[v.index()] = low[v.index()].min(disc[w.index()]);
                }
            } else {
                stack.pop();
                if let Some(p) = parent {
                    low[p.index()] = low[p.index()].min(low[v.index()]);
                    if low[v.index()] > disc[p.index()] {
                        out.push((p.min(v), p.max(v)));
                    }
                }
            }
        }
    }
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn open_grid_is_one_region() {
        let g = WorldGraph::build_grid(4, 3, &[]).unwrap();
        let r = Regions::compute(&g);
        assert_eq!(r.region_count(), 1);
        assert!(bridges(&g).is_empty());
    }

    #[test]
    fn corridor_cells_are_singletons() {
        let g = WorldGraph::build_grid(5, 1, &[]).unwrap();
        let r = Regions::compute(&g);
        assert_eq!(r.region_count(), 5);
        assert!(g.vertices().all(|v| r.is_corridor(v)));
        assert_eq!(bridges(&g).len(), 4);
    }
}
