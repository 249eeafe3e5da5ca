//! Independent ground truth for the learner and the theory behind it.
//!
//! Nothing here is used by the learning pipeline; these computations exist to
//! check it. Statistical checks use a uniform 3-sigma slack and report a
//! tri-state [`Verdict`].

mod correlation;
mod mst;
mod phi;
mod pqd;

pub use correlation::{positive_correlation_check, CorrelationReport};
pub use mst::{brute_force_mst, BruteForceMst, MAX_BRUTE_FORCE_NODES, MAX_SPANNING_TREES};
pub use phi::{check_ordering, exact_phi_linear, monte_carlo_phi, OrderingReport, OrderingViolation, PhiProvenance, PhiTable};
pub use pqd::{pqd_empirical_check, quantile_levels, PqdReport};

use serde::{Deserialize, Serialize};

/// Slack multiplier applied to standard errors in every statistical check.
pub const SIGMA_SLACK: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}
