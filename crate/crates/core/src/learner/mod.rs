//! Topology learning from potential samples.
//!
//! Every permissible edge `(a, b)` is weighted with the sample variance of
//! `pi_a - pi_b`; the minimum spanning tree under these weights is the
//! operational tree when injections are independent and flow functions are
//! monotone. Nothing about the flow functions or injection distributions is
//! used here.

mod dsu;

pub use dsu::DisjointSetForest;

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{EdgeKey, NodeId};
use crate::simulator::MeasurementSet;
use crate::stats;

/// Default absolute-correlation threshold for [`group_components`].
pub const DEFAULT_GROUP_THRESHOLD: f64 = 0.1;

/// Estimated variance of the potential difference on each candidate edge.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWeightMap {
    samples: usize,
    weights: Vec<(EdgeKey, f64)>,
    index: HashMap<EdgeKey, usize>,
}

impl EdgeWeightMap {
    pub fn from_pairs(samples: usize, weights: Vec<(EdgeKey, f64)>) -> Self {
        let index = weights.iter().enumerate().map(|(i, (k, _))| (*k, i)).collect();
        EdgeWeightMap { samples, weights, index }
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Weight of an edge, looked up in either orientation.
    pub fn get(&self, a: NodeId, b: NodeId) -> Option<f64> {
        self.index.get(&EdgeKey::new(a, b)).map(|&i| self.weights[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (EdgeKey, f64)> + '_ {
        self.weights.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Unbiased sample variance of `pi_a - pi_b` for every candidate.
pub fn edge_variances(ms: &MeasurementSet, candidates: &[EdgeKey]) -> Result<EdgeWeightMap> {
    let m = ms.samples();
    if m < 2 {
        return Err(Error::InsufficientSamples { required: 2, found: m });
    }
    if let Some(k) = candidates.iter().find(|k| k.hi.0 >= ms.nodes()) {
        return Err(Error::UnmeasuredNode(k.hi));
    }
    let weights = candidates
        .par_iter()
        .map(|k| (*k, stats::variance_of_difference(ms.column(k.lo), ms.column(k.hi))))
        .collect();
    Ok(EdgeWeightMap::from_pairs(m, weights))
}

/// One selected edge and its weight margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnedEdge {
    pub u: NodeId,
    pub v: NodeId,
    pub weight: f64,
    /// Weight of the cheapest rejected candidate reconnecting the cut left by
    /// removing this edge, minus this edge's weight. `None` when no candidate
    /// crosses the cut.
    pub margin: Option<f64>,
}

impl LearnedEdge {
    pub fn key(&self) -> EdgeKey {
        EdgeKey::new(self.u, self.v)
    }
}

/// Result of the spanning-tree step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnedTopology {
    pub nodes: usize,
    pub edges: Vec<LearnedEdge>,
    pub total_weight: f64,
}

impl LearnedTopology {
    pub fn edge_keys(&self) -> Vec<EdgeKey> {
        let mut v: Vec<EdgeKey> = self.edges.iter().map(LearnedEdge::key).collect();
        v.sort();
        v
    }

    pub fn min_margin(&self) -> Option<f64> {
        self.edges.iter().filter_map(|e| e.margin).min_by(f64::total_cmp)
    }
}

/// Kruskal's algorithm over `candidates`.
///
/// Edges are taken in order of `(weight, min endpoint, max endpoint)`, so ties
/// resolve deterministically. Candidates without a weight are ignored.
pub fn kruskal_mst(nodes: usize, candidates: &[EdgeKey], weights: &EdgeWeightMap) -> Result<LearnedTopology> {
    let mut sorted: Vec<(EdgeKey, f64)> = candidates
        .iter()
        .filter_map(|k| weights.get(k.lo, k.hi).map(|w| (*k, w)))
        .collect();
    sort_edges(&mut sorted);
    sorted.dedup_by_key(|(k, _)| *k);

    let mut dsu = DisjointSetForest::new(nodes);
    let mut chosen = Vec::with_capacity(nodes.saturating_sub(1));
    let mut rejected = Vec::with_capacity(sorted.len().saturating_sub(nodes));
    for (k, w) in sorted {
        if dsu.union(k.lo.0, k.hi.0) {
            chosen.push((k, w));
        } else {
            rejected.push((k, w));
        }
    }
    if dsu.components() > 1 {
        let keys: Vec<EdgeKey> = chosen.iter().map(|(k, _)| *k).collect();
        return Err(Error::DisconnectedCandidates(crate::network::components(nodes, &keys)));
    }
    let margins = replacement_margins(nodes, &chosen, &rejected);
    let total_weight = chosen.iter().map(|(_, w)| w).sum();
    let edges = chosen
        .iter()
        .zip(margins)
        .map(|(&(k, w), m)| LearnedEdge { u: k.lo, v: k.hi, weight: w, margin: m })
        .collect();
    Ok(LearnedTopology { nodes, edges, total_weight })
}

fn sort_edges(edges: &mut [(EdgeKey, f64)]) {
    edges.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
}

// For each tree edge, the lightest non-tree edge whose tree path covers it.
// Non-tree edges arrive sorted by weight, so the first one to reach a tree
// edge is the minimum; a jump forest skips edges already assigned.
fn replacement_margins(nodes: usize, tree: &[(EdgeKey, f64)], rejected: &[(EdgeKey, f64)]) -> Vec<Option<f64>> {
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nodes];
    for (i, (k, _)) in tree.iter().enumerate() {
        adj[k.lo.0].push((k.hi.0, i));
        adj[k.hi.0].push((k.lo.0, i));
    }
    let mut parent = vec![usize::MAX; nodes];
    let mut parent_edge = vec![usize::MAX; nodes];
    let mut depth = vec![0usize; nodes];
    let mut seen = vec![false; nodes];
    for root in 0..nodes {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        let mut stack = vec![root];
        while let Some(a) = stack.pop() {
            for &(b, e) in &adj[a] {
                if !seen[b] {
                    seen[b] = true;
                    parent[b] = a;
                    parent_edge[b] = e;
                    depth[b] = depth[a] + 1;
                    stack.push(b);
                }
            }
        }
    }
    let mut jump: Vec<usize> = (0..nodes).collect();
    fn top(jump: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while jump[r] != r {
            r = jump[r];
        }
        let mut c = x;
        while jump[c] != r {
            let n = jump[c];
            jump[c] = r;
            c = n;
        }
        r
    }
    let mut best = vec![None; tree.len()];
    for &(k, w) in rejected {
        let (mut a, mut b) = (top(&mut jump, k.lo.0), top(&mut jump, k.hi.0));
        while a != b {
            if depth[a] < depth[b] {
                std::mem::swap(&mut a, &mut b);
            }
            // `a` is strictly deeper, hence not a root
            best[parent_edge[a]] = Some(w);
            jump[a] = parent[a];
            a = top(&mut jump, a);
        }
    }
    tree.iter().zip(best).map(|((_, w), r)| r.map(|r: f64| r - w)).collect()
}

/// All unordered pairs over `nodes` nodes.
pub fn complete_graph(nodes: usize) -> Vec<EdgeKey> {
    let mut out = Vec::with_capacity(nodes * nodes.saturating_sub(1) / 2);
    for a in 0..nodes {
        for b in a + 1..nodes {
            out.push(EdgeKey::new(NodeId(a), NodeId(b)));
        }
    }
    out
}

/// Edge variances followed by Kruskal; the complete graph when `candidates`
/// is `None`.
pub fn learn_structure(ms: &MeasurementSet, candidates: Option<&[EdgeKey]>) -> Result<LearnedTopology> {
    let all;
    let cands = match candidates {
        Some(c) => c,
        None => {
            all = complete_graph(ms.nodes());
            &all
        }
    };
    let weights = edge_variances(ms, cands)?;
    kruskal_mst(ms.nodes(), cands, &weights)
}

/// Partition of nodes into groups of mutually correlated potentials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeGroups {
    pub groups: Vec<Vec<NodeId>>,
    /// Nodes with constant potential (correlation undefined); each forms its
    /// own group.
    pub constant: Vec<NodeId>,
}

/// Connected components of the graph linking `a` and `b` when
/// `|corr(pi_a, pi_b)| >= threshold`.
///
/// A threshold of zero links every pair. Constant columns have undefined
/// correlation and stay singletons for any positive threshold.
pub fn group_components(ms: &MeasurementSet, threshold: f64) -> Result<NodeGroups> {
    let m = ms.samples();
    if m < 2 {
        return Err(Error::InsufficientSamples { required: 2, found: m });
    }
    let n = ms.nodes();
    let constant: Vec<NodeId> =
        (0..n).map(NodeId).filter(|&a| stats::variance(ms.column(a)) == 0.0).collect();
    let mut dsu = DisjointSetForest::new(n);
    if threshold <= 0.0 {
        for a in 1..n {
            dsu.union(0, a);
        }
    } else {
        let links: Vec<(usize, usize)> = (0..n)
            .into_par_iter()
            .flat_map_iter(|a| {
                let col_a = ms.column(NodeId(a));
                (a + 1..n).filter_map(move |b| {
                    let r = stats::correlation(col_a, ms.column(NodeId(b)));
                    (r.abs() >= threshold).then_some((a, b))
                })
            })
            .collect();
        for (a, b) in links {
            dsu.union(a, b);
        }
    }
    let mut by_root: std::collections::BTreeMap<usize, Vec<NodeId>> = Default::default();
    for a in 0..n {
        by_root.entry(dsu.find(a)).or_default().push(NodeId(a));
    }
    let mut groups: Vec<Vec<NodeId>> = by_root.into_values().collect();
    groups.sort_by_key(|g| g[0]);
    Ok(NodeGroups { groups, constant: if threshold <= 0.0 { Vec::new() } else { constant } })
}

/// Merges correlation groups so that each operational tree ends up in one
/// group.
///
/// Branches hanging off a reference carry independent flows, so
/// [`group_components`] splits them apart and leaves the constant reference on
/// its own. Candidates crossing between groups are scanned by increasing
/// weight and the two groups merge unless both already hold a constant node.
/// When no node is constant, only singleton groups are merged, each into the
/// group of its lightest candidate neighbour.
pub fn merge_groups(ms: &MeasurementSet, groups: &NodeGroups, candidates: &[EdgeKey]) -> Result<Vec<Vec<NodeId>>> {
    let n = ms.nodes();
    let mut label = vec![usize::MAX; n];
    for (g, members) in groups.groups.iter().enumerate() {
        for a in members {
            label[a.0] = g;
        }
    }
    if let Some(a) = label.iter().position(|&l| l == usize::MAX) {
        return Err(Error::InvalidConfig(format!("node {a} is in no group")));
    }
    if let Some(c) = candidates.iter().find(|c| c.hi.0 >= n) {
        return Err(Error::UnmeasuredNode(c.hi));
    }
    let is_constant: HashSet<NodeId> = groups.constant.iter().copied().collect();
    let anchored = !is_constant.is_empty();
    let k = groups.groups.len();
    let mut anchor: Vec<bool> = groups.groups.iter().map(|g| g.iter().any(|a| is_constant.contains(a))).collect();
    let mut size: Vec<usize> = groups.groups.iter().map(Vec::len).collect();

    let crossing: Vec<EdgeKey> = candidates.iter().copied().filter(|c| label[c.lo.0] != label[c.hi.0]).collect();
    let mut weighted: Vec<(EdgeKey, f64)> = edge_variances(ms, &crossing)?.iter().collect();
    sort_edges(&mut weighted);
    let mut dsu = DisjointSetForest::new(k);
    for (c, _) in weighted {
        let (x, y) = (dsu.find(label[c.lo.0]), dsu.find(label[c.hi.0]));
        if x == y {
            continue;
        }
        let allowed = if anchored { !(anchor[x] && anchor[y]) } else { size[x] == 1 || size[y] == 1 };
        if allowed {
            let (a, s) = (anchor[x] || anchor[y], size[x] + size[y]);
            dsu.union(x, y);
            let r = dsu.find(x);
            anchor[r] = a;
            size[r] = s;
        }
    }
    let mut merged: HashMap<usize, Vec<NodeId>> = HashMap::new();
    for (g, members) in groups.groups.iter().enumerate() {
        merged.entry(dsu.find(g)).or_default().extend(members);
    }
    let mut out: Vec<Vec<NodeId>> = merged.into_values().collect();
    for g in &mut out {
        g.sort();
    }
    out.sort_by_key(|g| g[0]);
    Ok(out)
}

/// Learns one tree per group, restricted to candidates inside the group.
pub fn learn_grouped(
    ms: &MeasurementSet,
    groups: &[Vec<NodeId>],
    candidates: Option<&[EdgeKey]>,
) -> Result<Vec<LearnedTopology>> {
    let n = ms.nodes();
    let mut out = Vec::with_capacity(groups.len());
    for g in groups {
        let mut local = vec![usize::MAX; n];
        for (i, a) in g.iter().enumerate() {
            local[a.0] = i;
        }
        let cands: Vec<EdgeKey> = match candidates {
            Some(c) => c
                .iter()
                .filter(|k| local[k.lo.0] != usize::MAX && local[k.hi.0] != usize::MAX)
                .copied()
                .collect(),
            None => complete_graph(g.len())
                .into_iter()
                .map(|k| EdgeKey::new(g[k.lo.0], g[k.hi.0]))
                .collect(),
        };
        let local_cands: Vec<EdgeKey> =
            cands.iter().map(|k| EdgeKey::new(NodeId(local[k.lo.0]), NodeId(local[k.hi.0]))).collect();
        let weights = edge_variances(ms, &cands)?;
        let local_weights = EdgeWeightMap::from_pairs(
            ms.samples(),
            weights.iter().map(|(k, w)| (EdgeKey::new(NodeId(local[k.lo.0]), NodeId(local[k.hi.0])), w)).collect(),
        );
        let mut topo = kruskal_mst(g.len(), &local_cands, &local_weights)?;
        for e in &mut topo.edges {
            let (u, v) = (g[e.u.0], g[e.v.0]);
            let k = EdgeKey::new(u, v);
            e.u = k.lo;
            e.v = k.hi;
        }
        topo.nodes = g.len();
        out.push(topo);
    }
    Ok(out)
}

/// JSON document written by `learn` and read by `estimate` and `eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeFile {
    pub nodes: usize,
    pub samples: usize,
    pub total_weight: f64,
    pub edges: Vec<LearnedEdge>,
    /// Node groups learned separately, when grouping was requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<Vec<NodeId>>>,
    /// Whether the candidate-restricted tree equals the complete-graph tree,
    /// when that comparison was requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matches_complete_graph: Option<bool>,
}

impl TreeFile {
    pub fn edge_keys(&self) -> Vec<EdgeKey> {
        let mut v: Vec<EdgeKey> = self.edges.iter().map(LearnedEdge::key).collect();
        v.sort();
        v
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.to_owned(), message: e.to_string() })
    }
}
