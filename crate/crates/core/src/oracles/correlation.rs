use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Verdict, SIGMA_SLACK};
use crate::error::{Error, Result};
use crate::flowmodel::FlowFunctionSpec;
use crate::network::{NodeId, RadialTree};
use crate::simulator::{sample_injections, InjectionModel};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub samples: usize,
    pub nested: bool,
    pub correlation: f64,
    pub std_error: f64,
    /// `correlation / std_error`.
    pub z: f64,
    pub verdict: Verdict,
}

/// Monte-Carlo estimate of `corr(g_i(P_V1), g_j(P_V2))`, where `P_V` is the
/// summed injection over a node set.
///
/// For nested sets and monotone functions the correlation is positive. The
/// verdict is `Pass` when the estimate exceeds three standard errors, `Fail`
/// when it is below minus three, `Inconclusive` otherwise. Non-nested sets are
/// accepted (as negative controls) and flagged in the report.
#[allow(clippy::too_many_arguments)]
pub fn positive_correlation_check(
    tree: &RadialTree,
    model: &InjectionModel,
    g_i: &FlowFunctionSpec,
    g_j: &FlowFunctionSpec,
    v1: &[NodeId],
    v2: &[NodeId],
    m: usize,
    seed: u64,
) -> Result<CorrelationReport> {
    if m < 3 {
        return Err(Error::InsufficientSamples { required: 3, found: m });
    }
    if v1.is_empty() || v2.is_empty() {
        return Err(Error::InvalidConfig("node sets must be nonempty".into()));
    }
    let k = model.commodities();
    for g in [g_i, g_j] {
        if g.commodities() != k {
            return Err(Error::DimensionMismatch { expected: k, found: g.commodities() });
        }
    }
    for &a in v1.iter().chain(v2) {
        if !tree.contains(a) || a == tree.reference() {
            return Err(Error::UnknownNode(a));
        }
    }
    let s1: BTreeSet<NodeId> = v1.iter().copied().collect();
    let s2: BTreeSet<NodeId> = v2.iter().copied().collect();
    let nested = s1.is_subset(&s2);

    let inj = sample_injections(model, m, seed)?;
    let transform = |set: &BTreeSet<NodeId>, g: &FlowFunctionSpec| -> Vec<f64> {
        let mut total = vec![0.0; k];
        (0..m)
            .map(|s| {
                total.fill(0.0);
                for a in set {
                    for (c, t) in total.iter_mut().enumerate() {
                        *t += inj.get(s, *a, c);
                    }
                }
                g.eval_unchecked(&total)
            })
            .collect()
    };
    let x = transform(&s1, g_i);
    let y = transform(&s2, g_j);
    let r = stats::correlation(&x, &y);
    let std_error = (1.0 - r * r).max(0.0) / ((m - 1) as f64).sqrt();
    let z = if std_error > 0.0 { r / std_error } else { f64::INFINITY.copysign(r) };
    let verdict = if r.is_nan() {
        Verdict::Inconclusive
    } else if r > SIGMA_SLACK * std_error {
        Verdict::Pass
    } else if r < -SIGMA_SLACK * std_error {
        Verdict::Fail
    } else {
        Verdict::Inconclusive
    };
    Ok(CorrelationReport { samples: m, nested, correlation: r, std_error, z, verdict })
}
