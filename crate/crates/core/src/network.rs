//! Candidate graphs, radial validation and tree combinatorics.
//!
//! A [`NetworkGraph`] holds every permissible edge. The operational subset is
//! validated into a [`RadialTree`] whose edges are oriented toward the
//! reference node; everything downstream (flows, potentials, the oracles) works
//! on that orientation.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowmodel::FlowFunctionSpec;

/// Dense 0-based node index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<usize> for NodeId {
    fn from(i: usize) -> Self {
        NodeId(i)
    }
}

/// Unordered node pair, stored with `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeKey {
    pub lo: NodeId,
    pub hi: NodeId,
}

impl EdgeKey {
    pub fn new(a: NodeId, b: NodeId) -> Self {
        if a <= b {
            EdgeKey { lo: a, hi: b }
        } else {
            EdgeKey { lo: b, hi: a }
        }
    }
}

impl fmt::Display for EdgeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lo, self.hi)
    }
}

/// A permissible edge.
///
/// `operational` is ground truth known to the simulator; the learner never
/// reads it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateEdge {
    pub u: NodeId,
    pub v: NodeId,
    pub operational: bool,
    pub flow: FlowFunctionSpec,
}

impl CandidateEdge {
    pub fn key(&self) -> EdgeKey {
        EdgeKey::new(self.u, self.v)
    }
}

/// Mean and variance of one node's injection, per commodity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectionSpec {
    pub node: NodeId,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// The loopy permissible-edge graph plus the operational subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkFile", into = "NetworkFile")]
pub struct NetworkGraph {
    node_count: usize,
    reference: NodeId,
    edges: Vec<CandidateEdge>,
    injections: Option<Vec<InjectionSpec>>,
}

/// On-disk JSON layout of a network.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub nodes: usize,
    pub reference: NodeId,
    pub edges: Vec<CandidateEdge>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub injections: Option<Vec<InjectionSpec>>,
}

impl TryFrom<NetworkFile> for NetworkGraph {
    type Error = Error;

    fn try_from(f: NetworkFile) -> Result<Self> {
        let mut g = NetworkGraph::new(f.nodes, f.reference, f.edges)?;
        if let Some(inj) = f.injections {
            g = g.with_injections(inj)?;
        }
        Ok(g)
    }
}

impl From<NetworkGraph> for NetworkFile {
    fn from(g: NetworkGraph) -> Self {
        NetworkFile {
            nodes: g.node_count,
            reference: g.reference,
            edges: g.edges,
            injections: g.injections,
        }
    }
}

impl NetworkGraph {
    /// Builds and validates a candidate graph.
    ///
    /// Requires distinct endpoints, no duplicate pairs, monotone flow
    /// functions with a common commodity count, every node covered by an edge,
    /// and a connected candidate graph.
    pub fn new(node_count: usize, reference: NodeId, edges: Vec<CandidateEdge>) -> Result<Self> {
        if node_count < 2 {
            return Err(Error::InvalidNetwork(format!("need at least 2 nodes, got {node_count}")));
        }
        if reference.0 >= node_count {
            return Err(Error::InvalidNetwork(format!("reference {reference} out of range")));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        let mut covered = vec![false; node_count];
        let commodities = edges.first().map(|e| e.flow.commodities()).unwrap_or(1);
        for e in &edges {
            if e.u.0 >= node_count || e.v.0 >= node_count {
                return Err(Error::InvalidNetwork(format!("edge {} references unknown node", e.key())));
            }
            if e.u == e.v {
                return Err(Error::InvalidNetwork(format!("self loop at node {}", e.u)));
            }
            if !seen.insert(e.key()) {
                return Err(Error::InvalidNetwork(format!("duplicate edge {}", e.key())));
            }
            if !e.flow.is_monotone().monotone {
                return Err(Error::InvalidFlowSpec(format!("flow function on edge {} is not monotone", e.key())));
            }
            if e.flow.commodities() != commodities {
                return Err(Error::InvalidNetwork(format!(
                    "edge {} has {} commodities, expected {commodities}",
                    e.key(),
                    e.flow.commodities()
                )));
            }
            covered[e.u.0] = true;
            covered[e.v.0] = true;
        }
        if let Some(i) = covered.iter().position(|c| !c) {
            return Err(Error::InvalidNetwork(format!("node {i} has no edges")));
        }
        let pairs: Vec<EdgeKey> = edges.iter().map(CandidateEdge::key).collect();
        let comps = components(node_count, &pairs);
        if comps.len() > 1 {
            return Err(Error::InvalidNetwork(format!(
                "candidate graph has {} connected components",
                comps.len()
            )));
        }
        Ok(NetworkGraph { node_count, reference, edges, injections: None })
    }

    /// Attaches explicit injection statistics for the simulator.
    pub fn with_injections(mut self, injections: Vec<InjectionSpec>) -> Result<Self> {
        let k = self.commodities();
        let mut seen = vec![false; self.node_count];
        for s in &injections {
            if s.node.0 >= self.node_count {
                return Err(Error::InvalidModel(format!("injection for unknown node {}", s.node)));
            }
            if std::mem::replace(&mut seen[s.node.0], true) {
                return Err(Error::InvalidModel(format!("duplicate injection for node {}", s.node)));
            }
            if s.mean.len() != k || s.variance.len() != k {
                return Err(Error::InvalidModel(format!("node {} needs {k} commodities", s.node)));
            }
        }
        self.injections = Some(injections);
        Ok(self)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn reference(&self) -> NodeId {
        self.reference
    }

    pub fn edges(&self) -> &[CandidateEdge] {
        &self.edges
    }

    pub fn injections(&self) -> Option<&[InjectionSpec]> {
        self.injections.as_deref()
    }

    /// Commodity count shared by every edge.
    pub fn commodities(&self) -> usize {
        self.edges.first().map(|e| e.flow.commodities()).unwrap_or(1)
    }

    pub fn candidate_keys(&self) -> Vec<EdgeKey> {
        self.edges.iter().map(CandidateEdge::key).collect()
    }

    pub fn operational_keys(&self) -> Vec<EdgeKey> {
        self.edges.iter().filter(|e| e.operational).map(CandidateEdge::key).collect()
    }

    pub fn find_edge(&self, a: NodeId, b: NodeId) -> Option<&CandidateEdge> {
        let k = EdgeKey::new(a, b);
        self.edges.iter().find(|e| e.key() == k)
    }

    /// Strict validation: the operational edges must form one spanning tree
    /// rooted at the reference.
    pub fn validate_radial(&self) -> Result<RadialTree> {
        let ops = self.operational_keys();
        RadialTree::from_edges(self.node_count, self.reference, &ops)
    }

    /// Relaxed validation accepting a forest of operational trees.
    ///
    /// The component containing the graph reference keeps it; every other
    /// component is rooted at the first entry of `references` that falls in
    /// it, or at its smallest node id.
    pub fn validate_forest(&self, references: &[NodeId]) -> Result<Vec<RadialTree>> {
        let ops = self.operational_keys();
        if ops.len() >= self.node_count {
            return Err(Error::WrongEdgeCount { expected: self.node_count - 1, found: ops.len() });
        }
        check_acyclic(self.node_count, &ops)?;
        let mut trees = Vec::new();
        for comp in components(self.node_count, &ops) {
            let root = if comp.contains(&self.reference) {
                self.reference
            } else {
                references.iter().copied().find(|r| comp.contains(r)).unwrap_or(comp[0])
            };
            let members: BTreeSet<NodeId> = comp.iter().copied().collect();
            let sub: Vec<EdgeKey> =
                ops.iter().copied().filter(|k| members.contains(&k.lo)).collect();
            trees.push(RadialTree::build(self.node_count, root, &members, &sub)?);
        }
        trees.sort_by_key(|t| t.reference());
        Ok(trees)
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("network serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.to_owned(), message: e.to_string() })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// One oriented tree edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeEdge {
    pub child: NodeId,
    pub parent: NodeId,
    /// Position of the edge in the list the tree was built from.
    pub source: usize,
}

impl TreeEdge {
    pub fn key(&self) -> EdgeKey {
        EdgeKey::new(self.child, self.parent)
    }
}

/// An operational tree oriented toward its reference node.
///
/// Arrays are indexed by global node id; nodes outside the tree (possible for
/// one component of a forest) have no parent and are not members.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialTree {
    node_count: usize,
    reference: NodeId,
    member: Vec<bool>,
    parent: Vec<Option<TreeEdge>>,
    depth: Vec<usize>,
    children: Vec<Vec<NodeId>>,
    // breadth-first from the reference, parents before children
    order: Vec<NodeId>,
}

impl RadialTree {
    /// Validates that `edges` form a spanning tree of all `node_count` nodes
    /// and orients it toward `reference`.
    pub fn from_edges(node_count: usize, reference: NodeId, edges: &[EdgeKey]) -> Result<Self> {
        if reference.0 >= node_count {
            return Err(Error::UnknownNode(reference));
        }
        if let Some(k) = edges.iter().find(|k| k.hi.0 >= node_count) {
            return Err(Error::UnknownNode(k.hi));
        }
        let expected = node_count - 1;
        if edges.len() > expected {
            return Err(Error::WrongEdgeCount { expected, found: edges.len() });
        }
        check_acyclic(node_count, edges)?;
        let members: BTreeSet<NodeId> = (0..node_count).map(NodeId).collect();
        Self::build(node_count, reference, &members, edges)
    }

    fn build(node_count: usize, reference: NodeId, members: &BTreeSet<NodeId>, edges: &[EdgeKey]) -> Result<Self> {
        let mut adj: Vec<Vec<(NodeId, usize)>> = vec![Vec::new(); node_count];
        for (i, k) in edges.iter().enumerate() {
            adj[k.lo.0].push((k.hi, i));
            adj[k.hi.0].push((k.lo, i));
        }
        let mut member = vec![false; node_count];
        let mut parent = vec![None; node_count];
        let mut depth = vec![0; node_count];
        let mut children = vec![Vec::new(); node_count];
        let mut order = Vec::with_capacity(members.len());
        let mut seen = vec![false; node_count];
        let mut queue = VecDeque::from([reference]);
        seen[reference.0] = true;
        while let Some(a) = queue.pop_front() {
            member[a.0] = true;
            order.push(a);
            let mut nbrs = adj[a.0].clone();
            nbrs.sort();
            for (b, src) in nbrs {
                if seen[b.0] {
                    continue;
                }
                seen[b.0] = true;
                parent[b.0] = Some(TreeEdge { child: b, parent: a, source: src });
                depth[b.0] = depth[a.0] + 1;
                children[a.0].push(b);
                queue.push_back(b);
            }
        }
        if let Some(lost) = members.iter().find(|n| !seen[n.0]) {
            return Err(Error::Disconnected(*lost));
        }
        if order.len() != edges.len() + 1 {
            return Err(Error::WrongEdgeCount { expected: order.len() - 1, found: edges.len() });
        }
        Ok(RadialTree { node_count, reference, member, parent, depth, children, order })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn reference(&self) -> NodeId {
        self.reference
    }

    pub fn contains(&self, a: NodeId) -> bool {
        a.0 < self.node_count && self.member[a.0]
    }

    /// Member nodes, parents before children.
    pub fn order(&self) -> &[NodeId] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn parent(&self, a: NodeId) -> Option<TreeEdge> {
        self.parent.get(a.0).copied().flatten()
    }

    pub fn depth(&self, a: NodeId) -> Result<usize> {
        self.check(a)?;
        Ok(self.depth[a.0])
    }

    pub fn children(&self, a: NodeId) -> Result<&[NodeId]> {
        self.check(a)?;
        Ok(&self.children[a.0])
    }

    /// Tree edges ordered by child id.
    pub fn edges(&self) -> Vec<TreeEdge> {
        let mut out: Vec<TreeEdge> = self.parent.iter().flatten().copied().collect();
        out.sort_by_key(|e| e.child);
        out
    }

    /// Undirected keys of the tree edges, sorted.
    pub fn edge_keys(&self) -> Vec<EdgeKey> {
        let mut v: Vec<EdgeKey> = self.edges().iter().map(TreeEdge::key).collect();
        v.sort();
        v
    }

    fn check(&self, a: NodeId) -> Result<()> {
        if self.contains(a) {
            Ok(())
        } else {
            Err(Error::UnknownNode(a))
        }
    }

    /// Edges from `a` up to the reference, nearest first.
    pub fn path_to_reference(&self, a: NodeId) -> Result<Vec<TreeEdge>> {
        self.check(a)?;
        let mut path = Vec::with_capacity(self.depth[a.0]);
        let mut cur = a;
        while let Some(e) = self.parent[cur.0] {
            path.push(e);
            cur = e.parent;
        }
        Ok(path)
    }

    /// Nodes whose path to the reference passes through `a`, `a` included.
    pub fn descendants(&self, a: NodeId) -> Result<BTreeSet<NodeId>> {
        self.check(a)?;
        let mut out = BTreeSet::new();
        let mut stack = vec![a];
        while let Some(x) = stack.pop() {
            out.insert(x);
            stack.extend(self.children[x.0].iter().copied());
        }
        Ok(out)
    }

    /// Lowest common ancestor of two members.
    pub fn meet(&self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a)?;
        self.check(b)?;
        let (mut a, mut b) = (a, b);
        while self.depth[a.0] > self.depth[b.0] {
            a = self.parent[a.0].unwrap().parent;
        }
        while self.depth[b.0] > self.depth[a.0] {
            b = self.parent[b.0].unwrap().parent;
        }
        while a != b {
            a = self.parent[a.0].unwrap().parent;
            b = self.parent[b.0].unwrap().parent;
        }
        Ok(a)
    }

    /// Tree path between two members as a node sequence `a, ..., b`.
    pub fn node_path(&self, a: NodeId, b: NodeId) -> Result<Vec<NodeId>> {
        let k = self.meet(a, b)?;
        let mut up = vec![a];
        let mut cur = a;
        while cur != k {
            cur = self.parent[cur.0].unwrap().parent;
            up.push(cur);
        }
        let mut down = Vec::new();
        let mut cur = b;
        while cur != k {
            down.push(cur);
            cur = self.parent[cur.0].unwrap().parent;
        }
        up.extend(down.into_iter().rev());
        Ok(up)
    }

    /// Reduced incidence matrix and its path-indicator inverse.
    pub fn reduced_incidence(&self) -> ReducedIncidence {
        let nodes: Vec<NodeId> = {
            let mut v: Vec<NodeId> = self.order.iter().copied().filter(|&a| a != self.reference).collect();
            v.sort();
            v
        };
        let col: std::collections::HashMap<NodeId, usize> =
            nodes.iter().enumerate().map(|(i, &a)| (a, i)).collect();
        let edges: Vec<TreeEdge> = nodes.iter().map(|&a| self.parent[a.0].unwrap()).collect();
        let n = nodes.len();
        let mut incidence = vec![vec![0i8; n]; n];
        for (r, e) in edges.iter().enumerate() {
            incidence[r][col[&e.child]] = 1;
            if let Some(&c) = col.get(&e.parent) {
                incidence[r][c] = -1;
            }
        }
        let mut inverse = vec![vec![0i8; n]; n];
        for (i, &a) in nodes.iter().enumerate() {
            for e in self.path_to_reference(a).expect("member") {
                inverse[i][col[&e.child]] = 1;
            }
        }
        ReducedIncidence { nodes, edges, incidence, inverse }
    }
}

/// Reduced incidence matrix `M` of a tree (reference column removed) with its
/// inverse.
///
/// Row `r` of `incidence` is edge `edges[r]` (child `+1`, parent `-1`); column
/// `j` is node `nodes[j]`. Edges are indexed so that `edges[r].child ==
/// nodes[r]`. `inverse[a][r] = 1` iff edge `r` lies on the path from
/// `nodes[a]` to the reference.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedIncidence {
    pub nodes: Vec<NodeId>,
    pub edges: Vec<TreeEdge>,
    pub incidence: Vec<Vec<i8>>,
    pub inverse: Vec<Vec<i8>>,
}

fn check_acyclic(node_count: usize, edges: &[EdgeKey]) -> Result<()> {
    let mut dsu = crate::learner::DisjointSetForest::new(node_count);
    for k in edges {
        if !dsu.union(k.lo.0, k.hi.0) {
            return Err(Error::CycleDetected(k.lo, k.hi));
        }
    }
    Ok(())
}

/// Connected components, each sorted, ordered by smallest member.
pub fn components(node_count: usize, edges: &[EdgeKey]) -> Vec<Vec<NodeId>> {
    let mut dsu = crate::learner::DisjointSetForest::new(node_count);
    for k in edges {
        dsu.union(k.lo.0, k.hi.0);
    }
    let mut by_root: std::collections::BTreeMap<usize, Vec<NodeId>> = Default::default();
    for i in 0..node_count {
        by_root.entry(dsu.find(i)).or_default().push(NodeId(i));
    }
    let mut out: Vec<Vec<NodeId>> = by_root.into_values().collect();
    out.sort_by_key(|c| c[0]);
    out
}
