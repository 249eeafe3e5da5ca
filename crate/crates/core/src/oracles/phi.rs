use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowmodel::FlowFunctionSpec;
use crate::network::{EdgeKey, NodeId, RadialTree};
use crate::rng;
use crate::simulator::{FlowPlan, InjectionModel};
use crate::stats::CovarianceAccumulator;

use super::SIGMA_SLACK;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum PhiProvenance {
    ExactLinear,
    MonteCarlo { samples: usize, batches: usize },
}

/// Symmetric table of `phi_ab = Var(pi_a - pi_b)` over all node pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiTable {
    pub nodes: usize,
    pub provenance: PhiProvenance,
    values: Vec<f64>,
    /// Batch-means standard error per pair (Monte-Carlo only).
    std_errors: Option<Vec<f64>>,
    /// Largest absolute cross-branch covariance met while assembling an exact
    /// table; zero under independent injections.
    pub max_cross_term: f64,
}

impl PhiTable {
    pub fn from_values(nodes: usize, values: Vec<f64>, provenance: PhiProvenance, std_errors: Option<Vec<f64>>) -> Self {
        assert_eq!(values.len(), nodes * nodes);
        PhiTable { nodes, provenance, values, std_errors, max_cross_term: 0.0 }
    }

    pub fn get(&self, a: NodeId, b: NodeId) -> f64 {
        self.values[a.0 * self.nodes + b.0]
    }

    pub fn set(&mut self, a: NodeId, b: NodeId, v: f64) {
        self.values[a.0 * self.nodes + b.0] = v;
        self.values[b.0 * self.nodes + a.0] = v;
    }

    pub fn std_error(&self, a: NodeId, b: NodeId) -> f64 {
        self.std_errors.as_ref().map_or(0.0, |se| se[a.0 * self.nodes + b.0])
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.provenance, PhiProvenance::ExactLinear)
    }

    /// Weights for the given candidate edges, for feeding the learner.
    pub fn edge_weights(&self, candidates: &[EdgeKey]) -> crate::learner::EdgeWeightMap {
        let samples = match self.provenance {
            PhiProvenance::MonteCarlo { samples, .. } => samples,
            PhiProvenance::ExactLinear => 0,
        };
        crate::learner::EdgeWeightMap::from_pairs(samples, candidates.iter().map(|k| (*k, self.get(k.lo, k.hi))).collect())
    }
}

/// Closed-form `phi` for linear flow functions under independent injections.
///
/// Flow on the edge above node `j` is the sum of injections over `D_j`, so
/// the covariance of the drops on edges `j` and `s` is
/// `sum_i c_i^j c_i^s sum_{r in D_j and D_s} var_{r,i}`. The variance of a
/// potential difference is assembled from the edges on either side of the
/// meeting point of the two root paths.
pub fn exact_phi_linear(
    tree: &RadialTree,
    model: &InjectionModel,
    specs: &HashMap<EdgeKey, FlowFunctionSpec>,
) -> Result<PhiTable> {
    let n = tree.node_count();
    if tree.len() != n {
        return Err(Error::InvalidNetwork("exact phi needs a spanning tree".into()));
    }
    let k = model.commodities();
    let mut coeffs: Vec<Vec<f64>> = vec![Vec::new(); n];
    for e in tree.edges() {
        let spec = specs.get(&e.key()).ok_or(Error::UnknownEdgeSpec(e.child, e.parent))?;
        match spec {
            FlowFunctionSpec::LinearMulti { coefficients } if coefficients.len() == k => {
                coeffs[e.child.0] = coefficients.clone()
            }
            FlowFunctionSpec::LinearMulti { coefficients } => {
                return Err(Error::DimensionMismatch { expected: k, found: coefficients.len() })
            }
            _ => return Err(Error::NonlinearSpec(e.child, e.parent)),
        }
    }
    // per-commodity variance of the flow above each node: subtree sums
    let mut subtree_var = vec![vec![0.0; k]; n];
    for &a in tree.order().iter().rev() {
        for (c, v) in subtree_var[a.0].iter_mut().enumerate() {
            *v += model.variance(a, c);
        }
        if let Some(e) = tree.parent(a) {
            let add = subtree_var[a.0].clone();
            for c in 0..k {
                subtree_var[e.parent.0][c] += add[c];
            }
        }
    }
    // ancestor test through the descendant sets
    let desc: Vec<Vec<bool>> = (0..n)
        .map(|j| {
            let mut row = vec![false; n];
            for d in tree.descendants(NodeId(j)).expect("member") {
                row[d.0] = true;
            }
            row
        })
        .collect();
    let omega = |j: usize, s: usize| -> f64 {
        // D_j and D_s intersect iff one contains the other
        let deeper = if desc[j][s] {
            s
        } else if desc[s][j] {
            j
        } else {
            return 0.0;
        };
        (0..k).map(|c| coeffs[j][c] * coeffs[s][c] * subtree_var[deeper][c]).sum()
    };
    let up_path = |a: NodeId, stop: NodeId| -> Vec<usize> {
        let mut v = Vec::new();
        let mut cur = a;
        while cur != stop {
            v.push(cur.0);
            cur = tree.parent(cur).unwrap().parent;
        }
        v
    };
    let mut table = PhiTable::from_values(n, vec![0.0; n * n], PhiProvenance::ExactLinear, None);
    let mut max_cross: f64 = 0.0;
    for a in 0..n {
        for b in a + 1..n {
            let (na, nb) = (NodeId(a), NodeId(b));
            let meet = tree.meet(na, nb)?;
            // edges are named by their child node
            let side_a = up_path(na, meet);
            let side_b = up_path(nb, meet);
            let within = |side: &[usize]| -> f64 { side.iter().flat_map(|&j| side.iter().map(move |&s| (j, s))).map(|(j, s)| omega(j, s)).sum() };
            let cross: f64 = side_b.iter().flat_map(|&j| side_a.iter().map(move |&s| omega(j, s))).sum();
            max_cross = max_cross.max(cross.abs());
            table.set(na, nb, within(&side_a) + within(&side_b) - 2.0 * cross);
        }
    }
    table.max_cross_term = max_cross;
    Ok(table)
}

/// Number of batches used for the Monte-Carlo standard errors.
const MC_BATCHES: usize = 64;

/// Sample variance of every potential difference from a fresh noise-free
/// simulation of `m` samples, with batch-means standard errors.
pub fn monte_carlo_phi(
    tree: &RadialTree,
    model: &InjectionModel,
    specs: &HashMap<EdgeKey, FlowFunctionSpec>,
    m: usize,
    seed: u64,
) -> Result<PhiTable> {
    if m < 4 {
        return Err(Error::InsufficientSamples { required: 4, found: m });
    }
    let plan = FlowPlan::new(tree, specs)?;
    plan.validate_model(model)?;
    let n = tree.node_count();
    let batches = MC_BATCHES.min(m / 2);
    let accs: Vec<CovarianceAccumulator> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let len = m / batches + usize::from(b < m % batches);
            let mut r = rng::stream(seed, b as u64);
            let mut acc = CovarianceAccumulator::new(n);
            let mut buf = Vec::with_capacity(rng::CHUNK * n);
            plan.run_stream(model, &mut r, len, 0.0, |pot| {
                buf.extend_from_slice(pot);
                if buf.len() == rng::CHUNK * n {
                    acc.push_block(&buf, rng::CHUNK);
                    buf.clear();
                }
            });
            acc.push_block(&buf, buf.len() / n);
            acc
        })
        .collect();
    let mut total = CovarianceAccumulator::new(n);
    for a in &accs {
        total.merge(a);
    }
    let mut values = vec![0.0; n * n];
    let mut se = vec![0.0; n * n];
    for a in 0..n {
        for b in a + 1..n {
            let v = total.variance_of_difference(a, b);
            let per: Vec<f64> = accs.iter().map(|acc| acc.variance_of_difference(a, b)).collect();
            let s = (crate::stats::variance(&per) / batches as f64).sqrt();
            for (i, j) in [(a, b), (b, a)] {
                values[i * n + j] = v;
                se[i * n + j] = s;
            }
        }
    }
    Ok(PhiTable::from_values(n, values, PhiProvenance::MonteCarlo { samples: m, batches }, Some(se)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingViolation {
    pub a: NodeId,
    pub b: NodeId,
    pub c: NodeId,
    pub phi_ab: f64,
    pub phi_ac: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingReport {
    pub triples: usize,
    pub violations: Vec<OrderingViolation>,
    /// Triples where `b` is where the paths from `a` and `c` meet.
    pub branch_triples: usize,
    /// Largest `|phi_ac - phi_ab - phi_cb| / phi_ac` over those triples.
    pub max_branch_additivity_error: f64,
}

/// For every ordered triple with `b` strictly inside the tree path from `a` to
/// `c`, checks `phi_ab < phi_ac`.
///
/// Monte-Carlo tables tolerate `phi_ab - phi_ac` up to three combined
/// standard errors.
pub fn check_ordering(tree: &RadialTree, phi: &PhiTable) -> Result<OrderingReport> {
    let n = tree.node_count();
    let mut report = OrderingReport { triples: 0, violations: Vec::new(), branch_triples: 0, max_branch_additivity_error: 0.0 };
    for a in tree.order().iter().copied() {
        for c in tree.order().iter().copied() {
            if a == c {
                continue;
            }
            let path = tree.node_path(a, c)?;
            let meet = tree.meet(a, c)?;
            let phi_ac = phi.get(a, c);
            for &b in &path[1..path.len() - 1] {
                report.triples += 1;
                let phi_ab = phi.get(a, b);
                let slack = SIGMA_SLACK * (phi.std_error(a, b).powi(2) + phi.std_error(a, c).powi(2)).sqrt();
                let violated = if phi.is_exact() { phi_ab >= phi_ac } else { phi_ab >= phi_ac + slack };
                if violated {
                    report.violations.push(OrderingViolation { a, b, c, phi_ab, phi_ac, slack });
                }
                if b == meet {
                    report.branch_triples += 1;
                    let err = (phi_ac - phi_ab - phi.get(c, b)).abs() / phi_ac.abs().max(f64::MIN_POSITIVE);
                    report.max_branch_additivity_error = report.max_branch_additivity_error.max(err);
                }
            }
        }
    }
    debug_assert!(report.triples <= n * n * n);
    Ok(report)
}
