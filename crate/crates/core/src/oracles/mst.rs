use crate::error::{Error, Result};
use crate::learner::EdgeWeightMap;
use crate::network::EdgeKey;

pub const MAX_BRUTE_FORCE_NODES: usize = 9;
/// Enumeration stops with [`Error::TooLarge`] beyond this many spanning trees.
pub const MAX_SPANNING_TREES: usize = 2_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceMst {
    pub min_weight: f64,
    /// Every spanning tree attaining the minimum, edges sorted.
    pub optimal: Vec<Vec<EdgeKey>>,
    pub trees_enumerated: usize,
}

/// Minimum spanning trees by exhaustive enumeration.
///
/// Edges are decided one at a time (include / exclude). Inclusion is skipped
/// when it closes a cycle, exclusion when the remaining edges could no longer
/// connect the graph, so every leaf of the recursion is a spanning tree.
pub fn brute_force_mst(nodes: usize, candidates: &[EdgeKey], weights: &EdgeWeightMap) -> Result<BruteForceMst> {
    if nodes > MAX_BRUTE_FORCE_NODES {
        return Err(Error::TooLarge(format!("{nodes} nodes, limit {MAX_BRUTE_FORCE_NODES}")));
    }
    let mut edges: Vec<(usize, usize, f64)> = Vec::with_capacity(candidates.len());
    for k in candidates {
        let w = weights
            .get(k.lo, k.hi)
            .ok_or_else(|| Error::InvalidConfig(format!("no weight for candidate {k}")))?;
        edges.push((k.lo.0, k.hi.0, w));
    }
    let mut search = Search {
        nodes,
        edges: &edges,
        chosen: Vec::with_capacity(nodes),
        trees: 0,
        best: f64::INFINITY,
        optimal: Vec::new(),
    };
    if nodes <= 1 {
        return Ok(BruteForceMst { min_weight: 0.0, optimal: vec![Vec::new()], trees_enumerated: 1 });
    }
    if !connected(nodes, edges.iter().map(|e| (e.0, e.1))) {
        let keys: Vec<EdgeKey> = candidates.to_vec();
        return Err(Error::DisconnectedCandidates(crate::network::components(nodes, &keys)));
    }
    search.recurse(0, 0.0)?;
    let mut optimal: Vec<Vec<EdgeKey>> = search
        .optimal
        .iter()
        .map(|t| {
            let mut v: Vec<EdgeKey> = t.iter().map(|&i| EdgeKey::new(edges[i].0.into(), edges[i].1.into())).collect();
            v.sort();
            v
        })
        .collect();
    optimal.sort();
    Ok(BruteForceMst { min_weight: search.best, optimal, trees_enumerated: search.trees })
}

struct Search<'a> {
    nodes: usize,
    edges: &'a [(usize, usize, f64)],
    chosen: Vec<usize>,
    trees: usize,
    best: f64,
    optimal: Vec<Vec<usize>>,
}

impl Search<'_> {
    fn recurse(&mut self, i: usize, weight: f64) -> Result<()> {
        if self.chosen.len() == self.nodes - 1 {
            self.trees += 1;
            if self.trees > MAX_SPANNING_TREES {
                return Err(Error::TooLarge(format!("more than {MAX_SPANNING_TREES} spanning trees")));
            }
            let tol = 1e-12 * weight.abs().max(self.best.abs()).max(1.0);
            if !self.best.is_finite() || weight < self.best - tol {
                self.best = weight;
                self.optimal.clear();
                self.optimal.push(self.chosen.clone());
            } else if (weight - self.best).abs() <= tol {
                self.optimal.push(self.chosen.clone());
            }
            return Ok(());
        }
        if i == self.edges.len() {
            return Ok(());
        }
        let (u, v, w) = self.edges[i];
        let in_chosen = self.chosen.iter().map(|&j| (self.edges[j].0, self.edges[j].1));
        if !connected_pair(self.nodes, in_chosen, u, v) {
            self.chosen.push(i);
            self.recurse(i + 1, weight + w)?;
            self.chosen.pop();
        }
        let rest = self
            .chosen
            .iter()
            .map(|&j| (self.edges[j].0, self.edges[j].1))
            .chain(self.edges[i + 1..].iter().map(|e| (e.0, e.1)));
        if connected(self.nodes, rest) {
            self.recurse(i + 1, weight)?;
        }
        Ok(())
    }
}

fn labels(n: usize, edges: impl Iterator<Item = (usize, usize)>) -> [usize; MAX_BRUTE_FORCE_NODES] {
    let mut parent = [0usize; MAX_BRUTE_FORCE_NODES];
    for (i, p) in parent.iter_mut().enumerate().take(n) {
        *p = i;
    }
    fn root(p: &[usize], mut x: usize) -> usize {
        while p[x] != x {
            x = p[x];
        }
        x
    }
    for (a, b) in edges {
        let (ra, rb) = (root(&parent, a), root(&parent, b));
        if ra != rb {
            parent[ra] = rb;
        }
    }
    let mut out = parent;
    for (i, o) in out.iter_mut().enumerate().take(n) {
        *o = root(&parent, i);
    }
    out
}

fn connected(n: usize, edges: impl Iterator<Item = (usize, usize)>) -> bool {
    let l = labels(n, edges);
    l[..n].iter().all(|&x| x == l[0])
}

fn connected_pair(n: usize, edges: impl Iterator<Item = (usize, usize)>, u: usize, v: usize) -> bool {
    let l = labels(n, edges);
    l[u] == l[v]
}
