//! Injection recovery on a known tree with known flow functions.
//!
//! Potential differences across tree edges are inverted to flows, and flow
//! conservation at each node gives the injection.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowmodel::FlowFunctionSpec;
use crate::network::{EdgeKey, NodeId, RadialTree};
use crate::simulator::{FlowSamples, InjectionSamples, MeasurementSet, SampleMatrix};
use crate::stats;

/// Flow toward the reference on every tree edge, per sample.
///
/// Every tree edge needs a single-commodity flow function.
pub fn recover_flows(
    tree: &RadialTree,
    specs: &HashMap<EdgeKey, FlowFunctionSpec>,
    ms: &MeasurementSet,
) -> Result<FlowSamples> {
    let edges = tree.edges();
    let mut resolved = Vec::with_capacity(edges.len());
    for e in &edges {
        let spec = specs.get(&e.key()).ok_or(Error::UnknownEdgeSpec(e.child, e.parent))?;
        if e.child.0 >= ms.nodes() {
            return Err(Error::UnmeasuredNode(e.child));
        }
        if e.parent.0 >= ms.nodes() {
            return Err(Error::UnmeasuredNode(e.parent));
        }
        // surfaces NotInvertible before any work is done
        spec.invert_g(spec.offset())?;
        resolved.push((e, spec));
    }
    let m = ms.samples();
    let mut flows = SampleMatrix::zeros(m, tree.node_count(), 1);
    for (e, spec) in resolved {
        let (pa, pb) = (ms.column(e.child), ms.column(e.parent));
        for s in 0..m {
            let f = spec.invert_g(pa[s] - pb[s])?.0[0];
            flows.set(s, e.child, 0, f);
        }
    }
    Ok(flows)
}

/// Injections by conservation: `P_a = f_(a -> parent) - sum over children f`.
///
/// The reference entry receives the balancing injection, so every row sums
/// to zero.
pub fn recover_injections(tree: &RadialTree, flows: &FlowSamples) -> Result<InjectionSamples> {
    let k = flows.commodities();
    let mut out = SampleMatrix::zeros(flows.samples(), flows.nodes(), k);
    for s in 0..flows.samples() {
        for &a in tree.order() {
            for c in 0..k {
                let own = if a == tree.reference() { 0.0 } else { flows.get(s, a, c) };
                let inflow: f64 = tree.children(a)?.iter().map(|ch| flows.get(s, *ch, c)).sum();
                out.set(s, a, c, own - inflow);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeEstimate {
    pub node: NodeId,
    pub mean: f64,
    pub variance: f64,
    pub samples: usize,
}

/// First two moments of the injection at every non-reference tree node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionEstimate {
    pub nodes: Vec<NodeEstimate>,
    /// Set when the measurements carried noise; no de-noising is attempted.
    pub biased: bool,
}

impl InjectionEstimate {
    pub fn get(&self, a: NodeId) -> Option<&NodeEstimate> {
        self.nodes.iter().find(|e| e.node == a)
    }
}

/// Sample mean and unbiased variance of recovered injections (commodity 0).
pub fn injection_statistics(tree: &RadialTree, injections: &InjectionSamples, biased: bool) -> InjectionEstimate {
    let mut nodes: Vec<NodeEstimate> = tree
        .order()
        .iter()
        .filter(|&&a| a != tree.reference())
        .map(|&a| {
            let series = injections.series(a, 0);
            NodeEstimate { node: a, mean: stats::mean(&series), variance: stats::variance(&series).max(0.0), samples: series.len() }
        })
        .collect();
    nodes.sort_by_key(|e| e.node);
    InjectionEstimate { nodes, biased }
}

/// Flows, injections and statistics in one pass.
pub fn estimate_injections(
    tree: &RadialTree,
    specs: &HashMap<EdgeKey, FlowFunctionSpec>,
    ms: &MeasurementSet,
) -> Result<(InjectionSamples, InjectionEstimate)> {
    let flows = recover_flows(tree, specs, ms)?;
    let inj = recover_injections(tree, &flows)?;
    let est = injection_statistics(tree, &inj, ms.meta.noise_fraction > 0.0);
    Ok((inj, est))
}
