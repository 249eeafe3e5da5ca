//! Network templates, the fractional-error metric, sample-size sweeps and the
//! oracle-backed verification report.

use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowmodel::{FlowFunctionSpec, HAZEN_WILLIAMS_EXPONENT};
use crate::learner;
use crate::network::{CandidateEdge, EdgeKey, NetworkGraph, NodeId};
use crate::oracles::{self, Verdict};
use crate::rng;
use crate::simulator::{self, InjectionModel, NoiseSpec, DEFAULT_REFERENCE_POTENTIAL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Template {
    Chain,
    Star,
    RandomRadial,
}

/// Flow family used when generating edges. `Mixed` draws each edge's family
/// at random and uses single-commodity linear edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyChoice {
    Linear,
    Quadratic,
    PowerLaw,
    Mixed,
}

impl FamilyChoice {
    pub fn commodities(self) -> usize {
        match self {
            FamilyChoice::Linear => 2,
            _ => 1,
        }
    }
}

// Parameter ranges of generated edges (per-unit scale).
const RESISTANCE: (f64, f64) = (0.005, 0.015);
const REACTANCE: (f64, f64) = (0.005, 0.015);
const FRICTION: (f64, f64) = (0.5e-3, 1.5e-3);
const COMPRESSOR_SHARE: f64 = 0.2;
const COMPRESSOR_BOOST: (f64, f64) = (0.0, 0.05);

fn random_spec(family: FamilyChoice, r: &mut impl Rng) -> FlowFunctionSpec {
    let family = match family {
        FamilyChoice::Mixed => [FamilyChoice::Linear, FamilyChoice::Quadratic, FamilyChoice::PowerLaw][r.random_range(0..3)],
        f => return spec_for(f, 2, r),
    };
    spec_for(family, 1, r)
}

fn spec_for(family: FamilyChoice, linear_commodities: usize, r: &mut impl Rng) -> FlowFunctionSpec {
    match family {
        FamilyChoice::Linear => {
            let res = r.random_range(RESISTANCE.0..RESISTANCE.1);
            if linear_commodities == 2 {
                let x = r.random_range(REACTANCE.0..REACTANCE.1);
                FlowFunctionSpec::lin_dist_flow(res, x).unwrap()
            } else {
                FlowFunctionSpec::linear(vec![2.0 * res]).unwrap()
            }
        }
        FamilyChoice::Quadratic => {
            let alpha = r.random_range(FRICTION.0..FRICTION.1);
            let beta = if r.random_bool(COMPRESSOR_SHARE) {
                r.random_range(COMPRESSOR_BOOST.0..COMPRESSOR_BOOST.1)
            } else {
                0.0
            };
            FlowFunctionSpec::quadratic(alpha, beta).unwrap()
        }
        FamilyChoice::PowerLaw => {
            let alpha = r.random_range(FRICTION.0..FRICTION.1);
            FlowFunctionSpec::power_law(alpha, HAZEN_WILLIAMS_EXPONENT, 0.0).unwrap()
        }
        FamilyChoice::Mixed => unreachable!(),
    }
}

/// Uniform random labelled tree on `n` nodes from a Prufer sequence.
fn random_tree(n: usize, r: &mut impl Rng) -> Vec<EdgeKey> {
    if n == 2 {
        return vec![EdgeKey::new(NodeId(0), NodeId(1))];
    }
    let seq: Vec<usize> = (0..n - 2).map(|_| r.random_range(0..n)).collect();
    let mut degree = vec![1usize; n];
    for &s in &seq {
        degree[s] += 1;
    }
    let mut leaves: BTreeSet<usize> = (0..n).filter(|&i| degree[i] == 1).collect();
    let mut edges = Vec::with_capacity(n - 1);
    for &s in &seq {
        let leaf = *leaves.iter().next().unwrap();
        leaves.remove(&leaf);
        edges.push(EdgeKey::new(NodeId(leaf), NodeId(s)));
        degree[s] -= 1;
        if degree[s] == 1 {
            leaves.insert(s);
        }
    }
    let last: Vec<usize> = leaves.into_iter().collect();
    edges.push(EdgeKey::new(NodeId(last[0]), NodeId(last[1])));
    edges
}

/// Seeded synthetic network: an operational tree from `template` plus
/// `fictitious` non-operational edges drawn uniformly among the non-tree
/// pairs. Node 0 is the reference.
pub fn gen_network(template: Template, n: usize, fictitious: usize, family: FamilyChoice, seed: u64) -> Result<NetworkGraph> {
    if n < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 nodes, got {n}")));
    }
    let mut r = rng::stream(rng::derive(seed, &[0x6E7]), 0);
    let tree: Vec<EdgeKey> = match template {
        Template::Chain => (1..n).map(|i| EdgeKey::new(NodeId(i - 1), NodeId(i))).collect(),
        Template::Star => (1..n).map(|i| EdgeKey::new(NodeId(0), NodeId(i))).collect(),
        Template::RandomRadial => random_tree(n, &mut r),
    };
    let in_tree: HashSet<EdgeKey> = tree.iter().copied().collect();
    let mut others: Vec<EdgeKey> = learner::complete_graph(n).into_iter().filter(|k| !in_tree.contains(k)).collect();
    if fictitious > others.len() {
        return Err(Error::TooManyFictitious { requested: fictitious, available: others.len() });
    }
    others.shuffle(&mut r);
    others.truncate(fictitious);
    others.sort();
    let mut edges: Vec<CandidateEdge> = tree
        .iter()
        .map(|k| (k, true))
        .chain(others.iter().map(|k| (k, false)))
        .map(|(k, operational)| CandidateEdge { u: k.lo, v: k.hi, operational, flow: random_spec(family, &mut r) })
        .collect();
    edges.sort_by_key(|e| e.key());
    NetworkGraph::new(n, NodeId(0), edges)
}

/// Fraction of true edges missing from the learned edge set.
///
/// For two spanning trees this equals `|learned \ truth| / |truth|` and half
/// the symmetric difference over `|truth|`.
pub fn eval_topology(learned: &[EdgeKey], truth: &[EdgeKey]) -> Result<f64> {
    if learned.len() != truth.len() {
        return Err(Error::SizeMismatch { learned: learned.len(), truth: truth.len() });
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    let t: HashSet<&EdgeKey> = truth.iter().collect();
    let wrong = learned.iter().collect::<HashSet<_>>().iter().filter(|k| !t.contains(**k)).count();
    Ok(wrong as f64 / truth.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum NetworkSource {
    File { path: PathBuf },
    Template { template: Template, nodes: usize, fictitious: usize, family: FamilyChoice },
}

/// Parameters of a sample-size / noise sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: NetworkSource,
    pub samples: Vec<usize>,
    #[serde(default = "default_noise")]
    pub noise: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_reference_potential")]
    pub reference_potential: f64,
}

fn default_noise() -> Vec<f64> {
    vec![0.0]
}

fn default_reference_potential() -> f64 {
    DEFAULT_REFERENCE_POTENTIAL
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be >= 1".into()));
        }
        if self.samples.is_empty() || self.samples.iter().any(|&m| m < 2) {
            return Err(Error::InvalidConfig("sample counts must be >= 2".into()));
        }
        if self.noise.is_empty() || self.noise.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::InvalidConfig("noise fractions must be >= 0".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.to_owned(), message: e.to_string() })
    }

    pub fn network(&self) -> Result<NetworkGraph> {
        match &self.network {
            NetworkSource::File { path } => NetworkGraph::load(path),
            NetworkSource::Template { template, nodes, fictitious, family } => {
                gen_network(*template, *nodes, *fictitious, *family, self.seed)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub m: usize,
    pub rho: f64,
    pub mean_err: f64,
    /// Standard deviation of the per-trial errors.
    pub std_err: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub rows: Vec<ErrorRow>,
    /// Per-trial errors, ordered like `rows`.
    pub per_trial: Vec<Vec<f64>>,
}

impl ErrorReport {
    pub fn row(&self, m: usize, rho: f64) -> Option<&ErrorRow> {
        self.rows.iter().find(|r| r.m == m && r.rho == rho)
    }

    pub fn trials(&self, m: usize, rho: f64) -> Option<&[f64]> {
        self.rows.iter().position(|r| r.m == m && r.rho == rho).map(|i| self.per_trial[i].as_slice())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,rho,mean_err,std_err,trials\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{},{}\n", r.m, r.rho, r.mean_err, r.std_err, r.trials));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Error of one learning run: fresh injections, simulation, noise, learning.
///
/// Injection samples depend on `(seed, m, trial)` only, so every noise level
/// sees the same clean samples.
pub fn run_trial(
    graph: &NetworkGraph,
    model: &InjectionModel,
    m: usize,
    rho: f64,
    trial: usize,
    seed: u64,
    reference_potential: f64,
) -> Result<f64> {
    let tree = graph.validate_radial()?;
    let sim_seed = rng::derive(seed, &[0x51A, m as u64, trial as u64]);
    let clean = simulator::simulate(graph, &tree, model, m, sim_seed, reference_potential)?;
    let ms = if rho > 0.0 {
        simulator::add_noise(&clean, NoiseSpec::new(rho, rng::derive(sim_seed, &[rho.to_bits()]))?)?
    } else {
        clean
    };
    let candidates = graph.candidate_keys();
    let learned = learner::learn_structure(&ms, Some(&candidates))?;
    eval_topology(&learned.edge_keys(), &tree.edge_keys())
}

/// Runs every `(m, rho, trial)` combination and aggregates per `(m, rho)`.
///
/// Trials run in parallel; rows come out sorted by `m`, then `rho`.
pub fn run_sweep(config: &ExperimentConfig) -> Result<ErrorReport> {
    config.validate()?;
    let graph = config.network()?;
    let tree = graph.validate_radial()?;
    let model = InjectionModel::for_network(&graph, vec![tree.reference()], config.seed)?;
    let mut samples = config.samples.clone();
    samples.sort_unstable();
    samples.dedup();
    let mut noise = config.noise.clone();
    noise.sort_by(f64::total_cmp);
    noise.dedup();

    let jobs: Vec<(usize, f64, usize)> = samples
        .iter()
        .flat_map(|&m| noise.iter().flat_map(move |&rho| (0..config.trials).map(move |t| (m, rho, t))))
        .collect();
    let errors: Vec<f64> = jobs
        .par_iter()
        .map(|&(m, rho, t)| run_trial(&graph, &model, m, rho, t, config.seed, config.reference_potential))
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut per_trial = Vec::new();
    for (i, chunk) in errors.chunks(config.trials).enumerate() {
        let (m, rho, _) = jobs[i * config.trials];
        let mean_err = crate::stats::mean(chunk);
        let std_err = if chunk.len() > 1 { crate::stats::variance(chunk).sqrt() } else { 0.0 };
        rows.push(ErrorRow { m, rho, mean_err, std_err, trials: chunk.len() });
        per_trial.push(chunk.to_vec());
    }
    Ok(ErrorReport { rows, per_trial })
}

/// Oracle-backed checks of one network, as emitted by `verify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub nodes: usize,
    pub phi_provenance: oracles::PhiProvenance,
    /// MST over oracle weights reproduces the operational edges.
    pub mst_recovers_tree: bool,
    pub mst_min_margin: Option<f64>,
    pub ordering: oracles::OrderingReport,
    pub correlation: Vec<oracles::CorrelationReport>,
    pub pqd: PqdSummary,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PqdSummary {
    pub samples: usize,
    pub violations: usize,
    pub worst_normalized: f64,
}

/// Runs the oracles against a network: exact weights for all-linear networks,
/// Monte-Carlo with `mc_samples` otherwise.
pub fn verify_network(graph: &NetworkGraph, seed: u64, mc_samples: usize) -> Result<VerifyReport> {
    let tree = graph.validate_radial()?;
    let model = InjectionModel::for_network(graph, vec![tree.reference()], seed)?;
    let specs = simulator::edge_specs(graph);
    let all_linear = graph.edges().iter().all(|e| e.flow.is_linear());
    let phi = if all_linear {
        oracles::exact_phi_linear(&tree, &model, &specs)?
    } else {
        oracles::monte_carlo_phi(&tree, &model, &specs, mc_samples, rng::derive(seed, &[0xF1]))?
    };
    let candidates = graph.candidate_keys();
    let mst = learner::kruskal_mst(graph.node_count(), &candidates, &phi.edge_weights(&candidates))?;
    let mst_recovers_tree = mst.edge_keys() == tree.edge_keys();
    let ordering = oracles::check_ordering(&tree, &phi)?;

    // nested node sets along every root path: a node's descendants inside its
    // parent's descendants, pushed through the flow functions of both edges
    let mut correlation = Vec::new();
    let corr_samples = mc_samples.clamp(1000, 100_000);
    for e in tree.edges().iter().filter(|e| e.parent != tree.reference()).take(8) {
        let v1: Vec<NodeId> = tree.descendants(e.child)?.into_iter().collect();
        let v2: Vec<NodeId> = tree.descendants(e.parent)?.into_iter().collect();
        let g_i = &specs[&e.key()];
        let g_j = &specs[&tree.parent(e.parent).unwrap().key()];
        correlation.push(oracles::positive_correlation_check(
            &tree,
            &model,
            g_i,
            g_j,
            &v1,
            &v2,
            corr_samples,
            rng::derive(seed, &[0xC0, e.child.0 as u64]),
        )?);
    }

    let inj = simulator::sample_injections(&model, corr_samples, rng::derive(seed, &[0x9D]))?;
    let (x, y) = match tree.edges().first() {
        Some(e) if tree.edges().len() > 1 => {
            let other = tree.edges()[1].child;
            (inj.series(e.child, 0), inj.series(other, 0))
        }
        _ => {
            let a = tree.order()[1];
            (inj.series(a, 0), vec![0.0; corr_samples])
        }
    };
    let pqd = oracles::pqd_empirical_check(&x, &y, &oracles::quantile_levels(9))?;

    let ok = mst_recovers_tree
        && ordering.violations.is_empty()
        && correlation.iter().all(|c| c.verdict == Verdict::Pass)
        && pqd.verdict == Verdict::Pass;
    Ok(VerifyReport {
        nodes: graph.node_count(),
        phi_provenance: phi.provenance,
        mst_recovers_tree,
        mst_min_margin: mst.min_margin(),
        ordering,
        correlation,
        pqd: PqdSummary { samples: pqd.samples, violations: pqd.violations, worst_normalized: pqd.worst_normalized },
        verdict: if ok { Verdict::Pass } else { Verdict::Fail },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k(a: usize, b: usize) -> EdgeKey {
        EdgeKey::new(NodeId(a), NodeId(b))
    }

    #[test]
    fn thirty_and_twenty_five_node_templates() {
        let g = gen_network(Template::RandomRadial, 30, 30, FamilyChoice::Linear, 1).unwrap();
        assert_eq!(g.operational_keys().len(), 29);
        assert_eq!(g.edges().len(), 59);
        assert_eq!(g.commodities(), 2);
        g.validate_radial().unwrap();

        let g = gen_network(Template::RandomRadial, 25, 25, FamilyChoice::Quadratic, 1).unwrap();
        assert_eq!(g.operational_keys().len(), 24);
        assert_eq!(g.edges().len(), 49);

        let g = gen_network(Template::Chain, 2, 0, FamilyChoice::Linear, 1).unwrap();
        assert_eq!(g.edges().len(), 1);
        assert!(matches!(
            gen_network(Template::Chain, 3, 2, FamilyChoice::Linear, 1),
            Err(Error::TooManyFictitious { requested: 2, available: 1 })
        ));
    }

    #[test]
    fn generation_is_seeded() {
        let a = gen_network(Template::RandomRadial, 12, 6, FamilyChoice::Mixed, 5).unwrap();
        let b = gen_network(Template::RandomRadial, 12, 6, FamilyChoice::Mixed, 5).unwrap();
        let c = gen_network(Template::RandomRadial, 12, 6, FamilyChoice::Mixed, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.commodities(), 1);
    }

    #[test]
    fn fractional_error() {
        let truth: Vec<EdgeKey> = (1..30).map(|i| k(i - 1, i)).collect();
        assert_eq!(eval_topology(&truth, &truth).unwrap(), 0.0);
        let mut learned = truth.clone();
        learned[5] = k(0, 29);
        assert_eq!(eval_topology(&learned, &truth).unwrap(), 1.0 / 29.0);
        assert!(matches!(eval_topology(&truth[1..], &truth), Err(Error::SizeMismatch { .. })));
    }

    #[test]
    fn config_validation() {
        let mut cfg = ExperimentConfig {
            network: NetworkSource::Template { template: Template::Chain, nodes: 4, fictitious: 1, family: FamilyChoice::Linear },
            samples: vec![2],
            noise: vec![0.0],
            trials: 1,
            seed: 0,
            output_dir: None,
            reference_potential: 1.0,
        };
        cfg.validate().unwrap();
        let report = run_sweep(&cfg).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert!((0.0..=1.0).contains(&report.rows[0].mean_err));
        cfg.trials = 0;
        assert!(cfg.validate().is_err());
        cfg.trials = 1;
        cfg.samples = vec![1];
        assert!(cfg.validate().is_err());
        cfg.samples = vec![2];
        cfg.noise = vec![-0.1];
        assert!(cfg.validate().is_err());
    }
}
