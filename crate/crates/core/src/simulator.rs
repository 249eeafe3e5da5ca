//! Ground-truth simulation: injections, flows, potentials and measurement
//! noise on an operational tree.
//!
//! Samples are produced in chunks of [`rng::CHUNK`] rows, chunk `c` drawing
//! from stream `c` of the run seed. Chunks are computed in parallel and
//! stitched in order, so output is identical for any thread count.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowmodel::FlowFunctionSpec;
use crate::network::{EdgeKey, NetworkGraph, NodeId, RadialTree};
use crate::rng::{self, CHUNK};
use crate::stats;

/// Default potential of the reference node (per-unit voltage squared).
pub const DEFAULT_REFERENCE_POTENTIAL: f64 = 1.0;

/// Range of default injection means (net withdrawal).
pub const DEFAULT_MEAN_RANGE: (f64, f64) = (-1.5, -0.5);
/// Range of default injection standard deviations.
pub const DEFAULT_STD_RANGE: (f64, f64) = (0.1, 0.3);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    pub variance: f64,
}

/// Independent Gaussian injections at every non-reference node.
///
/// There are no covariance parameters: independence across nodes and
/// commodities is structural.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionModel {
    node_count: usize,
    commodities: usize,
    references: Vec<NodeId>,
    // per node, per commodity; empty for reference nodes
    params: Vec<Vec<Gaussian>>,
}

impl InjectionModel {
    /// `params[a]` lists one distribution per commodity for node `a`; it must
    /// be empty exactly for the reference nodes.
    pub fn new(commodities: usize, references: Vec<NodeId>, params: Vec<Vec<Gaussian>>) -> Result<Self> {
        let model = Self::new_unchecked(commodities, references, params)?;
        for (a, ps) in model.params.iter().enumerate() {
            if let Some(g) = ps.iter().find(|g| !(g.variance > 0.0 && g.variance.is_finite())) {
                return Err(Error::InvalidModel(format!("node {a}: variance must be > 0, got {}", g.variance)));
            }
        }
        Ok(model)
    }

    /// Point-mass injections (zero variance). Produces constant potentials;
    /// meant for degenerate checks only.
    pub fn deterministic(commodities: usize, references: Vec<NodeId>, means: Vec<Vec<f64>>) -> Result<Self> {
        let params = means
            .into_iter()
            .map(|ms| ms.into_iter().map(|mean| Gaussian { mean, variance: 0.0 }).collect())
            .collect();
        Self::new_unchecked(commodities, references, params)
    }

    fn new_unchecked(commodities: usize, references: Vec<NodeId>, params: Vec<Vec<Gaussian>>) -> Result<Self> {
        if commodities == 0 {
            return Err(Error::InvalidModel("need at least one commodity".into()));
        }
        let node_count = params.len();
        for (a, ps) in params.iter().enumerate() {
            let is_ref = references.contains(&NodeId(a));
            if is_ref && !ps.is_empty() {
                return Err(Error::InvalidModel(format!("reference node {a} cannot have an injection model")));
            }
            if !is_ref && ps.len() != commodities {
                return Err(Error::InvalidModel(format!(
                    "node {a} needs {commodities} distributions, has {}",
                    ps.len()
                )));
            }
            if let Some(g) = ps.iter().find(|g| !g.mean.is_finite()) {
                return Err(Error::InvalidModel(format!("node {a}: mean must be finite, got {}", g.mean)));
            }
        }
        if let Some(r) = references.iter().find(|r| r.0 >= node_count) {
            return Err(Error::InvalidModel(format!("reference {r} out of range")));
        }
        Ok(InjectionModel { node_count, commodities, references, params })
    }

    /// Same mean and variance at every non-reference node and commodity.
    pub fn homogeneous(node_count: usize, reference: NodeId, commodities: usize, mean: f64, variance: f64) -> Result<Self> {
        let params = (0..node_count)
            .map(|a| {
                if a == reference.0 {
                    Vec::new()
                } else {
                    vec![Gaussian { mean, variance }; commodities]
                }
            })
            .collect();
        Self::new(commodities, vec![reference], params)
    }

    /// Seeded defaults: mean uniform in [`DEFAULT_MEAN_RANGE`], standard
    /// deviation uniform in [`DEFAULT_STD_RANGE`], drawn per node and commodity.
    pub fn random_defaults(node_count: usize, references: Vec<NodeId>, commodities: usize, seed: u64) -> Result<Self> {
        let mut r = rng::stream(rng::derive(seed, &[0x1A7]), 0);
        let params = (0..node_count)
            .map(|a| {
                if references.contains(&NodeId(a)) {
                    return Vec::new();
                }
                (0..commodities)
                    .map(|_| {
                        let mean = r.random_range(DEFAULT_MEAN_RANGE.0..DEFAULT_MEAN_RANGE.1);
                        let sd: f64 = r.random_range(DEFAULT_STD_RANGE.0..DEFAULT_STD_RANGE.1);
                        Gaussian { mean, variance: sd * sd }
                    })
                    .collect()
            })
            .collect();
        Self::new(commodities, references, params)
    }

    /// Uses the network's explicit injection block when present, otherwise
    /// seeded defaults.
    pub fn for_network(graph: &NetworkGraph, references: Vec<NodeId>, seed: u64) -> Result<Self> {
        let k = graph.commodities();
        match graph.injections() {
            None => Self::random_defaults(graph.node_count(), references, k, seed),
            Some(specs) => {
                let mut params = vec![Vec::new(); graph.node_count()];
                for s in specs {
                    params[s.node.0] = s
                        .mean
                        .iter()
                        .zip(&s.variance)
                        .map(|(&mean, &variance)| Gaussian { mean, variance })
                        .collect();
                }
                Self::new(k, references, params)
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn commodities(&self) -> usize {
        self.commodities
    }

    pub fn references(&self) -> &[NodeId] {
        &self.references
    }

    /// Distributions at node `a`, one per commodity; empty for references.
    pub fn params(&self, a: NodeId) -> &[Gaussian] {
        &self.params[a.0]
    }

    pub fn variance(&self, a: NodeId, commodity: usize) -> f64 {
        self.params[a.0].get(commodity).map_or(0.0, |g| g.variance)
    }

    /// Writes one sample row (`node_count * commodities`, node-major).
    fn draw(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let k = self.commodities;
        for (a, ps) in self.params.iter().enumerate() {
            if ps.is_empty() {
                out[a * k..(a + 1) * k].fill(0.0);
                continue;
            }
            for (c, g) in ps.iter().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                out[a * k + c] = g.mean + g.variance.sqrt() * z;
            }
        }
    }
}

/// Row-major samples of a per-node (or per-edge, keyed by child node) vector
/// quantity with `commodities` components.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    samples: usize,
    nodes: usize,
    commodities: usize,
    data: Vec<f64>,
}

impl SampleMatrix {
    pub fn zeros(samples: usize, nodes: usize, commodities: usize) -> Self {
        SampleMatrix { samples, nodes, commodities, data: vec![0.0; samples * nodes * commodities] }
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn commodities(&self) -> usize {
        self.commodities
    }

    fn width(&self) -> usize {
        self.nodes * self.commodities
    }

    pub fn row(&self, s: usize) -> &[f64] {
        let w = self.width();
        &self.data[s * w..(s + 1) * w]
    }

    pub fn row_mut(&mut self, s: usize) -> &mut [f64] {
        let w = self.width();
        &mut self.data[s * w..(s + 1) * w]
    }

    pub fn get(&self, s: usize, a: NodeId, commodity: usize) -> f64 {
        self.data[s * self.width() + a.0 * self.commodities + commodity]
    }

    pub fn set(&mut self, s: usize, a: NodeId, commodity: usize, v: f64) {
        let w = self.width();
        self.data[s * w + a.0 * self.commodities + commodity] = v;
    }

    /// All samples of one node and commodity.
    pub fn series(&self, a: NodeId, commodity: usize) -> Vec<f64> {
        (0..self.samples).map(|s| self.get(s, a, commodity)).collect()
    }
}

/// Injection samples; reference entries are zero.
pub type InjectionSamples = SampleMatrix;
/// Edge flow samples indexed by the child node of each tree edge, directed
/// toward the reference; reference entries are zero.
pub type FlowSamples = SampleMatrix;

/// Draws `m` injection rows, chunk `c` from stream `c` of `seed`.
pub fn sample_injections(model: &InjectionModel, m: usize, seed: u64) -> Result<InjectionSamples> {
    if m == 0 {
        return Err(Error::InsufficientSamples { required: 1, found: 0 });
    }
    let mut out = SampleMatrix::zeros(m, model.node_count, model.commodities);
    let w = out.width();
    out.data.par_chunks_mut(CHUNK * w).enumerate().for_each(|(c, block)| {
        let mut r = rng::stream(seed, c as u64);
        for row in block.chunks_mut(w) {
            model.draw(&mut r, row);
        }
    });
    Ok(out)
}

/// Per-tree evaluation order and edge functions.
#[derive(Debug, Clone)]
pub struct FlowPlan {
    node_count: usize,
    commodities: usize,
    reference: NodeId,
    // non-reference members, parents before children
    order: Vec<usize>,
    parent: Vec<usize>,
    spec: Vec<Option<FlowFunctionSpec>>,
}

impl FlowPlan {
    pub fn new(tree: &RadialTree, specs: &HashMap<EdgeKey, FlowFunctionSpec>) -> Result<Self> {
        let n = tree.node_count();
        let mut parent = vec![usize::MAX; n];
        let mut spec = vec![None; n];
        let mut commodities = None;
        let order: Vec<usize> = tree.order().iter().skip(1).map(|a| a.0).collect();
        for &a in &order {
            let e = tree.parent(NodeId(a)).expect("non-reference member has a parent");
            let s = specs.get(&e.key()).ok_or(Error::UnknownEdgeSpec(e.child, e.parent))?;
            match commodities {
                None => commodities = Some(s.commodities()),
                Some(k) if k != s.commodities() => {
                    return Err(Error::DimensionMismatch { expected: k, found: s.commodities() })
                }
                _ => {}
            }
            parent[a] = e.parent.0;
            spec[a] = Some(s.clone());
        }
        Ok(FlowPlan {
            node_count: n,
            commodities: commodities.unwrap_or(1),
            reference: tree.reference(),
            order,
            parent,
            spec,
        })
    }

    pub fn for_network(graph: &NetworkGraph, tree: &RadialTree) -> Result<Self> {
        Self::new(tree, &edge_specs(graph))
    }

    pub fn commodities(&self) -> usize {
        self.commodities
    }

    fn check_model(&self, model: &InjectionModel) -> Result<()> {
        if model.commodities != self.commodities {
            return Err(Error::DimensionMismatch { expected: self.commodities, found: model.commodities });
        }
        if model.node_count != self.node_count {
            return Err(Error::InvalidModel(format!(
                "model covers {} nodes, network has {}",
                model.node_count, self.node_count
            )));
        }
        if let Some(&a) = self.order.iter().find(|&&a| model.params[a].is_empty()) {
            return Err(Error::InvalidModel(format!("no injection model for node {a}")));
        }
        Ok(())
    }

    /// Flow on every tree edge: the sum of injections over the child's
    /// descendants, accumulated leaves first.
    pub fn flows_into(&self, injections: &[f64], flows: &mut [f64]) {
        let k = self.commodities;
        flows.fill(0.0);
        for &a in self.order.iter().rev() {
            for c in 0..k {
                flows[a * k + c] += injections[a * k + c];
            }
            let p = self.parent[a];
            if p != self.reference.0 {
                for c in 0..k {
                    flows[p * k + c] += flows[a * k + c];
                }
            }
        }
    }

    /// Potentials from the reference outward: `pi_a = pi_parent + g(f_a)`.
    pub fn potentials_into(&self, flows: &[f64], reference_potential: f64, potentials: &mut [f64]) {
        let k = self.commodities;
        potentials[self.reference.0] = reference_potential;
        for &a in &self.order {
            let g = self.spec[a].as_ref().unwrap().eval_unchecked(&flows[a * k..(a + 1) * k]);
            potentials[a] = potentials[self.parent[a]] + g;
        }
    }

    /// Draws, solves and emits `len` samples from one stream.
    pub(crate) fn run_stream(
        &self,
        model: &InjectionModel,
        rng: &mut ChaCha8Rng,
        len: usize,
        reference_potential: f64,
        mut sink: impl FnMut(&[f64]),
    ) {
        let w = self.node_count * self.commodities;
        let mut inj = vec![0.0; w];
        let mut flows = vec![0.0; w];
        let mut pot = vec![0.0; self.node_count];
        for _ in 0..len {
            model.draw(rng, &mut inj);
            self.flows_into(&inj, &mut flows);
            self.potentials_into(&flows, reference_potential, &mut pot);
            sink(&pot);
        }
    }

    pub(crate) fn validate_model(&self, model: &InjectionModel) -> Result<()> {
        self.check_model(model)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }
}

/// Flow function of every candidate edge keyed by endpoint pair.
pub fn edge_specs(graph: &NetworkGraph) -> HashMap<EdgeKey, FlowFunctionSpec> {
    graph.edges().iter().map(|e| (e.key(), e.flow.clone())).collect()
}

/// Flow on each tree edge for every sample (sum over descendant injections).
pub fn solve_flows(tree: &RadialTree, injections: &InjectionSamples) -> Result<FlowSamples> {
    if injections.nodes() != tree.node_count() {
        return Err(Error::InvalidModel(format!(
            "injections cover {} nodes, tree has {}",
            injections.nodes(),
            tree.node_count()
        )));
    }
    let k = injections.commodities();
    let order: Vec<usize> = tree.order().iter().skip(1).map(|a| a.0).collect();
    let parent: Vec<usize> =
        (0..tree.node_count()).map(|a| tree.parent(NodeId(a)).map_or(usize::MAX, |e| e.parent.0)).collect();
    let plan = FlowPlan {
        node_count: tree.node_count(),
        commodities: k,
        reference: tree.reference(),
        order,
        parent,
        spec: vec![None; tree.node_count()],
    };
    let mut out = SampleMatrix::zeros(injections.samples(), injections.nodes(), k);
    let w = out.width();
    out.data.par_chunks_mut(w).enumerate().for_each(|(s, row)| plan.flows_into(injections.row(s), row));
    Ok(out)
}

/// Noise-free potentials from flows on a tree.
pub fn solve_potentials(
    tree: &RadialTree,
    specs: &HashMap<EdgeKey, FlowFunctionSpec>,
    flows: &FlowSamples,
    reference_potential: f64,
) -> Result<MeasurementSet> {
    let plan = FlowPlan::new(tree, specs)?;
    if flows.commodities() != plan.commodities {
        return Err(Error::DimensionMismatch { expected: plan.commodities, found: flows.commodities() });
    }
    let (m, n) = (flows.samples(), tree.node_count());
    let mut rows = vec![0.0; m * n];
    rows.par_chunks_mut(n).enumerate().for_each(|(s, pot)| plan.potentials_into(flows.row(s), reference_potential, pot));
    let mut ms = MeasurementSet::from_rows(n, &rows)?;
    ms.meta.reference_nodes = vec![tree.reference()];
    ms.meta.reference_potential = reference_potential;
    Ok(ms)
}

/// Full noise-free simulation of `m` samples on one tree.
///
/// Equivalent, bit for bit, to [`sample_injections`] followed by
/// [`solve_flows`] and [`solve_potentials`].
pub fn simulate(
    graph: &NetworkGraph,
    tree: &RadialTree,
    model: &InjectionModel,
    m: usize,
    seed: u64,
    reference_potential: f64,
) -> Result<MeasurementSet> {
    let plan = FlowPlan::for_network(graph, tree)?;
    let mut ms = simulate_plan(&plan, model, m, seed, reference_potential)?;
    ms.meta.network_hash = Some(graph.content_hash());
    Ok(ms)
}

pub fn simulate_plan(
    plan: &FlowPlan,
    model: &InjectionModel,
    m: usize,
    seed: u64,
    reference_potential: f64,
) -> Result<MeasurementSet> {
    if m == 0 {
        return Err(Error::InsufficientSamples { required: 1, found: 0 });
    }
    plan.check_model(model)?;
    let n = plan.node_count;
    let mut rows = vec![0.0; m * n];
    rows.par_chunks_mut(CHUNK * n).enumerate().for_each(|(c, block)| {
        let mut r = rng::stream(seed, c as u64);
        let rows_in_block = block.len() / n;
        let mut it = block.chunks_mut(n);
        plan.run_stream(model, &mut r, rows_in_block, reference_potential, |pot| {
            it.next().unwrap().copy_from_slice(pot)
        });
    });
    let mut ms = MeasurementSet::from_rows(n, &rows)?;
    ms.meta.seed = Some(seed);
    ms.meta.reference_nodes = vec![plan.reference];
    ms.meta.reference_potential = reference_potential;
    Ok(ms)
}

/// Simulates several independent operational trees sharing one node space.
///
/// Tree `i` draws from seed `derive(seed, [i])`; the model must list every
/// tree reference among its references.
pub fn simulate_forest(
    graph: &NetworkGraph,
    trees: &[RadialTree],
    model: &InjectionModel,
    m: usize,
    seed: u64,
    reference_potential: f64,
) -> Result<MeasurementSet> {
    let n = graph.node_count();
    let mut columns = vec![0.0; n * m];
    for (i, tree) in trees.iter().enumerate() {
        let plan = FlowPlan::for_network(graph, tree)?;
        let part = simulate_plan(&plan, model, m, rng::derive(seed, &[i as u64]), reference_potential)?;
        for a in tree.order() {
            columns[a.0 * m..(a.0 + 1) * m].copy_from_slice(part.column(*a));
        }
    }
    let mut ms = MeasurementSet::from_columns(n, m, columns)?;
    ms.meta.seed = Some(seed);
    ms.meta.reference_nodes = trees.iter().map(RadialTree::reference).collect();
    ms.meta.reference_potential = reference_potential;
    ms.meta.network_hash = Some(graph.content_hash());
    Ok(ms)
}

/// Additive Gaussian measurement noise with variance `fraction` times the
/// mean pre-noise potential variance of the non-reference nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub fraction: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(fraction: f64, seed: u64) -> Result<Self> {
        if !(fraction >= 0.0 && fraction.is_finite()) {
            return Err(Error::InvalidConfig(format!("noise fraction must be >= 0, got {fraction}")));
        }
        Ok(NoiseSpec { fraction, seed })
    }
}

/// Adds i.i.d. noise to every entry, reference columns included.
pub fn add_noise(ms: &MeasurementSet, noise: NoiseSpec) -> Result<MeasurementSet> {
    let m = ms.samples();
    if m < 2 {
        return Err(Error::InsufficientSamples { required: 2, found: m });
    }
    let n = ms.nodes();
    let mut out = ms.clone();
    out.meta.noise_fraction = noise.fraction;
    out.meta.noise_seed = Some(noise.seed);
    if noise.fraction == 0.0 {
        out.meta.noise_variance = 0.0;
        return Ok(out);
    }
    let variances: Vec<f64> = (0..n)
        .filter(|a| !ms.meta.reference_nodes.contains(&NodeId(*a)))
        .map(|a| stats::variance(ms.column(NodeId(a))))
        .collect();
    let avg = stats::mean(&variances);
    let sd = (noise.fraction * avg).sqrt();
    out.meta.noise_variance = noise.fraction * avg;
    let chunks: Vec<Vec<f64>> = (0..m.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let len = CHUNK.min(m - c * CHUNK);
            let mut r = rng::stream(noise.seed, c as u64);
            (0..len * n).map(|_| sd * r.sample::<f64, _>(StandardNormal)).collect()
        })
        .collect();
    for (c, block) in chunks.iter().enumerate() {
        for (i, z) in block.iter().enumerate() {
            let (s, a) = (c * CHUNK + i / n, i % n);
            out.columns[a * m + s] += z;
        }
    }
    Ok(out)
}

/// Provenance carried alongside measurements (written as a sidecar JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementMeta {
    pub samples: usize,
    pub nodes: usize,
    pub seed: Option<u64>,
    pub noise_fraction: f64,
    pub noise_seed: Option<u64>,
    /// Variance of the added noise (zero when noise-free).
    pub noise_variance: f64,
    pub network_hash: Option<String>,
    pub reference_nodes: Vec<NodeId>,
    pub reference_potential: f64,
}

/// `m` samples of the potential at each of `n` nodes, stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    samples: usize,
    nodes: usize,
    columns: Vec<f64>,
    pub meta: MeasurementMeta,
}

impl MeasurementSet {
    /// `columns[a * m + s]` is sample `s` of node `a`.
    pub fn from_columns(nodes: usize, samples: usize, columns: Vec<f64>) -> Result<Self> {
        if columns.len() != nodes * samples {
            return Err(Error::InvalidConfig(format!(
                "expected {} values for {samples} samples of {nodes} nodes, got {}",
                nodes * samples,
                columns.len()
            )));
        }
        if let Some(i) = columns.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "non-finite potential at sample {} node {}",
                i % samples.max(1),
                i / samples.max(1)
            )));
        }
        Ok(MeasurementSet {
            samples,
            nodes,
            columns,
            meta: MeasurementMeta {
                samples,
                nodes,
                seed: None,
                noise_fraction: 0.0,
                noise_seed: None,
                noise_variance: 0.0,
                network_hash: None,
                reference_nodes: Vec::new(),
                reference_potential: DEFAULT_REFERENCE_POTENTIAL,
            },
        })
    }

    /// Row-major input: `rows[s * n + a]`.
    pub fn from_rows(nodes: usize, rows: &[f64]) -> Result<Self> {
        let samples = rows.len().checked_div(nodes).unwrap_or(0);
        let mut columns = vec![0.0; rows.len()];
        for (i, x) in rows.iter().enumerate() {
            columns[(i % nodes) * samples + i / nodes] = *x;
        }
        Self::from_columns(nodes, samples, columns)
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn column(&self, a: NodeId) -> &[f64] {
        &self.columns[a.0 * self.samples..(a.0 + 1) * self.samples]
    }

    pub fn get(&self, s: usize, a: NodeId) -> f64 {
        self.columns[a.0 * self.samples + s]
    }

    /// Entry-wise square, for users holding raw voltage or pressure
    /// magnitudes instead of potentials.
    pub fn squared(&self) -> Self {
        let mut out = self.clone();
        out.columns.iter_mut().for_each(|x| *x *= *x);
        out
    }

    /// Every entry multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        let mut out = self.clone();
        out.columns.iter_mut().for_each(|x| *x *= k);
        out
    }

    /// Columns reordered so that new node `perm[a]` holds old node `a`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let m = self.samples;
        let mut columns = vec![0.0; self.columns.len()];
        for (a, &b) in perm.iter().enumerate() {
            columns[b * m..(b + 1) * m].copy_from_slice(&self.columns[a * m..(a + 1) * m]);
        }
        let mut out = self.clone();
        out.columns = columns;
        out.meta.reference_nodes = self.meta.reference_nodes.iter().map(|r| NodeId(perm[r.0])).collect();
        out
    }

    /// Writes `sample_id,node_0,...` rows and a `<stem>.meta.json` sidecar.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["sample_id".to_string()];
        header.extend((0..self.nodes).map(|a| format!("node_{a}")));
        w.write_record(&header)?;
        let mut rec = Vec::with_capacity(self.nodes + 1);
        for s in 0..self.samples {
            rec.clear();
            rec.push(s.to_string());
            rec.extend((0..self.nodes).map(|a| self.get(s, NodeId(a)).to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        std::fs::write(meta_path(path), serde_json::to_string_pretty(&self.meta)? + "\n")?;
        Ok(())
    }

    /// Reads a measurement CSV; the sidecar is used when present.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let parse_err = |message: String| Error::Parse { path: path.to_owned(), message };
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        if header.get(0) != Some("sample_id") {
            return Err(parse_err("first column must be sample_id".into()));
        }
        let n = header.len() - 1;
        for (a, h) in header.iter().skip(1).enumerate() {
            if h != format!("node_{a}") {
                return Err(parse_err(format!("column {} must be node_{a}, found {h}", a + 1)));
            }
        }
        let mut rows = Vec::new();
        for (s, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.get(0).and_then(|x| x.parse::<usize>().ok()) != Some(s) {
                return Err(parse_err(format!("row {s}: sample_id out of sequence")));
            }
            for field in rec.iter().skip(1) {
                rows.push(field.trim().parse::<f64>().map_err(|e| parse_err(format!("row {s}: {e}")))?);
            }
        }
        let mut ms = Self::from_rows(n, &rows)?;
        let mp = meta_path(path);
        if mp.exists() {
            let meta: MeasurementMeta = serde_json::from_str(&std::fs::read_to_string(&mp)?)
                .map_err(|e| Error::Parse { path: mp.clone(), message: e.to_string() })?;
            if meta.samples != ms.samples || meta.nodes != ms.nodes {
                return Err(Error::Parse { path: mp, message: "sidecar shape disagrees with CSV".into() });
            }
            ms.meta = meta;
        }
        Ok(ms)
    }
}

/// `dir/x.csv` -> `dir/x.meta.json`.
pub fn meta_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::CandidateEdge;

    fn lin(c: f64) -> FlowFunctionSpec {
        FlowFunctionSpec::linear(vec![c]).unwrap()
    }

    fn graph(n: usize, edges: &[(usize, usize)], flow: impl Fn(usize) -> FlowFunctionSpec) -> NetworkGraph {
        let edges = edges
            .iter()
            .enumerate()
            .map(|(i, &(u, v))| CandidateEdge { u: NodeId(u), v: NodeId(v), operational: true, flow: flow(i) })
            .collect();
        NetworkGraph::new(n, NodeId(0), edges).unwrap()
    }

    #[test]
    fn zero_variance_rejected() {
        let err = InjectionModel::homogeneous(3, NodeId(0), 1, 0.0, 0.0).unwrap_err();
        assert!(matches!(err, Error::InvalidModel(_)));
    }

    #[test]
    fn same_seed_same_samples() {
        let model = InjectionModel::homogeneous(4, NodeId(0), 2, -1.0, 0.5).unwrap();
        let a = sample_injections(&model, 3000, 11).unwrap();
        let b = sample_injections(&model, 3000, 11).unwrap();
        let c = sample_injections(&model, 3000, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.series(NodeId(0), 0).iter().all(|x| *x == 0.0));
    }

    #[test]
    fn injections_are_uncorrelated() {
        let model = InjectionModel::homogeneous(4, NodeId(0), 1, 0.0, 1.0).unwrap();
        let inj = sample_injections(&model, 100_000, 5).unwrap();
        let cols: Vec<Vec<f64>> = (1..4).map(|a| inj.series(NodeId(a), 0)).collect();
        for i in 0..3 {
            assert!((stats::variance(&cols[i]) - 1.0).abs() < 0.02);
            for j in i + 1..3 {
                let mi = stats::mean(&cols[i]);
                let mj = stats::mean(&cols[j]);
                let cov = cols[i].iter().zip(&cols[j]).map(|(x, y)| (x - mi) * (y - mj)).sum::<f64>() / 99_999.0;
                assert!(cov.abs() < 0.02, "cov({i},{j}) = {cov}");
            }
        }
    }

    #[test]
    fn chain_flows_by_hand() {
        // 0 <- 1 <- 2
        let g = graph(3, &[(0, 1), (1, 2)], |_| lin(1.0));
        let tree = g.validate_radial().unwrap();
        let mut inj = SampleMatrix::zeros(1, 3, 1);
        inj.set(0, NodeId(1), 0, 1.0);
        inj.set(0, NodeId(2), 0, 2.0);
        let f = solve_flows(&tree, &inj).unwrap();
        assert_eq!(f.get(0, NodeId(2), 0), 2.0);
        assert_eq!(f.get(0, NodeId(1), 0), 3.0);
    }

    #[test]
    fn small_example_root_edge_flow() {
        let g = graph(4, &[(1, 0), (2, 1), (3, 1)], |_| lin(1.0));
        let tree = g.validate_radial().unwrap();
        let mut inj = SampleMatrix::zeros(1, 4, 1);
        for a in 1..4 {
            inj.set(0, NodeId(a), 0, 1.0);
        }
        let f = solve_flows(&tree, &inj).unwrap();
        assert_eq!(f.get(0, NodeId(1), 0), 3.0);
    }

    #[test]
    fn single_edge_potential() {
        let g = graph(2, &[(0, 1)], |_| lin(1.0));
        let tree = g.validate_radial().unwrap();
        let mut f = SampleMatrix::zeros(1, 2, 1);
        f.set(0, NodeId(1), 0, 5.0);
        let ms = solve_potentials(&tree, &edge_specs(&g), &f, 0.0).unwrap();
        assert_eq!(ms.get(0, NodeId(1)), 5.0);
        assert_eq!(ms.get(0, NodeId(0)), 0.0);
    }

    #[test]
    fn telescoping_between_siblings() {
        let g = graph(4, &[(1, 0), (2, 1), (3, 1)], |i| FlowFunctionSpec::quadratic(0.5 + i as f64, 0.1).unwrap());
        let tree = g.validate_radial().unwrap();
        let model = InjectionModel::homogeneous(4, NodeId(0), 1, -1.0, 0.2).unwrap();
        let inj = sample_injections(&model, 500, 3).unwrap();
        let flows = solve_flows(&tree, &inj).unwrap();
        let specs = edge_specs(&g);
        let ms = solve_potentials(&tree, &specs, &flows, 1.0).unwrap();
        let g_cb = &specs[&EdgeKey::new(NodeId(2), NodeId(1))];
        let g_db = &specs[&EdgeKey::new(NodeId(3), NodeId(1))];
        for s in 0..500 {
            let lhs = ms.get(s, NodeId(2)) - ms.get(s, NodeId(3));
            let rhs = g_cb.eval_unchecked(&[flows.get(s, NodeId(2), 0)]) - g_db.eval_unchecked(&[flows.get(s, NodeId(3), 0)]);
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn offsets_shift_potentials_not_difference_variances() {
        let edges = [(0, 1), (1, 2), (2, 3), (1, 4)];
        let g = graph(5, &edges, |i| FlowFunctionSpec::quadratic(1.0 + i as f64 * 0.3, 0.0).unwrap());
        let shifted = graph(5, &edges, |i| FlowFunctionSpec::quadratic(1.0 + i as f64 * 0.3, 10.0).unwrap());
        let tree = g.validate_radial().unwrap();
        let model = InjectionModel::homogeneous(5, NodeId(0), 1, -1.0, 0.3).unwrap();
        let a = simulate(&g, &tree, &model, 2000, 9, 1.0).unwrap();
        let b = simulate(&shifted, &tree, &model, 2000, 9, 1.0).unwrap();
        for x in 0..5 {
            let depth = tree.depth(NodeId(x)).unwrap() as f64;
            for s in [0, 100, 1999] {
                let d = b.get(s, NodeId(x)) - a.get(s, NodeId(x));
                assert!((d - 10.0 * depth).abs() < 1e-9);
            }
            for y in 0..5 {
                let va = stats::variance_of_difference(a.column(NodeId(x)), a.column(NodeId(y)));
                let vb = stats::variance_of_difference(b.column(NodeId(x)), b.column(NodeId(y)));
                assert!((va - vb).abs() <= 1e-9 * va.max(1.0));
            }
        }
    }

    #[test]
    fn composed_pipeline_equals_fused_simulation() {
        let g = graph(6, &[(0, 1), (1, 2), (1, 3), (3, 4), (0, 5)], |i| {
            FlowFunctionSpec::lin_dist_flow(0.01 * (i + 1) as f64, 0.02).unwrap()
        });
        let tree = g.validate_radial().unwrap();
        let model = InjectionModel::random_defaults(6, vec![NodeId(0)], 2, 4).unwrap();
        let fused = simulate(&g, &tree, &model, 2500, 77, 1.0).unwrap();
        let inj = sample_injections(&model, 2500, 77).unwrap();
        let flows = solve_flows(&tree, &inj).unwrap();
        let split = solve_potentials(&tree, &edge_specs(&g), &flows, 1.0).unwrap();
        for a in 0..6 {
            assert_eq!(fused.column(NodeId(a)), split.column(NodeId(a)));
        }
        assert!(fused.column(NodeId(0)).iter().all(|x| *x == 1.0));
    }

    #[test]
    fn noise_levels() {
        let g = graph(4, &[(0, 1), (1, 2), (1, 3)], |_| lin(1.0));
        let tree = g.validate_radial().unwrap();
        let model = InjectionModel::homogeneous(4, NodeId(0), 1, -1.0, 1.0).unwrap();
        let clean = simulate(&g, &tree, &model, 100_000, 1, 1.0).unwrap();

        let same = add_noise(&clean, NoiseSpec::new(0.0, 3).unwrap()).unwrap();
        assert_eq!(same.column(NodeId(2)), clean.column(NodeId(2)));

        let noisy = add_noise(&clean, NoiseSpec::new(0.05, 3).unwrap()).unwrap();
        let avg = stats::mean(&(1..4).map(|a| stats::variance(clean.column(NodeId(a)))).collect::<Vec<_>>());
        for a in 0..4 {
            let added: Vec<f64> = noisy.column(NodeId(a)).iter().zip(clean.column(NodeId(a))).map(|(x, y)| x - y).collect();
            let v = stats::variance(&added);
            assert!((v / (0.05 * avg) - 1.0).abs() < 0.05, "node {a}: {v} vs {}", 0.05 * avg);
        }

        let other = add_noise(&clean, NoiseSpec::new(0.05, 4).unwrap()).unwrap();
        assert_ne!(other.column(NodeId(1)), noisy.column(NodeId(1)));
        let mut m1 = other.meta.clone();
        m1.noise_seed = noisy.meta.noise_seed;
        assert_eq!(m1, noisy.meta);
    }

    #[test]
    fn csv_round_trip_with_sidecar() {
        let g = graph(3, &[(0, 1), (1, 2)], |_| lin(0.3));
        let tree = g.validate_radial().unwrap();
        let model = InjectionModel::homogeneous(3, NodeId(0), 1, -1.0, 0.1).unwrap();
        let ms = simulate(&g, &tree, &model, 50, 2, 1.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        ms.write_csv(&p).unwrap();
        assert!(dir.path().join("m.meta.json").exists());
        let back = MeasurementSet::read_csv(&p).unwrap();
        assert_eq!(back, ms);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("sample_id,node_0,node_1,node_2\n"));
    }

    #[test]
    fn squared_magnitudes() {
        let ms = MeasurementSet::from_rows(2, &[1.0, 0.9, 1.0, 0.8]).unwrap().squared();
        assert!((ms.get(1, NodeId(1)) - 0.64).abs() < 1e-15);
    }
}
