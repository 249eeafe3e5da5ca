//! Monotone edge flow functions `g(f)` giving the potential drop across an edge
//! as a function of the flow through it.
//!
//! Three families cover the networks of interest:
//!
//! | family            | drop                     | typical use                      |
//! | :---------------- | :----------------------- | :------------------------------- |
//! | `linear-multi`    | `sum_i c_i f_i`          | LinDistFlow, `c = (2r, 2x)`      |
//! | `quadratic-boost` | `alpha f abs(f) + beta`  | gas pipes with compressor boost  |
//! | `power-law`       | `alpha f abs(f)^(gamma-1) + beta` | water pipes (Hazen-Williams) |
//!
//! The flow argument is always the flow directed from the child endpoint to the
//! parent endpoint, i.e. toward the reference node.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hazen-Williams exponent, the default for water networks.
pub const HAZEN_WILLIAMS_EXPONENT: f64 = 1.852;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowFamily {
    LinearMulti,
    QuadraticBoost,
    PowerLaw,
}

impl FlowFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            FlowFamily::LinearMulti => "linear-multi",
            FlowFamily::QuadraticBoost => "quadratic-boost",
            FlowFamily::PowerLaw => "power-law",
        }
    }
}

impl fmt::Display for FlowFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FlowFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear-multi" | "linear" => Ok(FlowFamily::LinearMulti),
            "quadratic-boost" | "quadratic" => Ok(FlowFamily::QuadraticBoost),
            "power-law" => Ok(FlowFamily::PowerLaw),
            other => Err(Error::InvalidFlowSpec(format!("unknown family {other:?}"))),
        }
    }
}

/// Per-commodity flow on one edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FlowVector(pub Vec<f64>);

impl FlowVector {
    pub fn scalar(f: f64) -> Self {
        FlowVector(vec![f])
    }

    pub fn commodities(&self) -> usize {
        self.0.len()
    }
}

impl From<Vec<f64>> for FlowVector {
    fn from(v: Vec<f64>) -> Self {
        FlowVector(v)
    }
}

/// A validated flow function.
///
/// Construct through [`FlowFunctionSpec::linear`], [`FlowFunctionSpec::quadratic`]
/// or [`FlowFunctionSpec::power_law`]; deserialization goes through the same
/// checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFlow", into = "RawFlow")]
pub enum FlowFunctionSpec {
    LinearMulti { coefficients: Vec<f64> },
    QuadraticBoost { alpha: f64, beta: f64 },
    PowerLaw { alpha: f64, exponent: f64, beta: f64 },
}

impl FlowFunctionSpec {
    /// Linear multi-commodity drop `sum_i c_i f_i`.
    ///
    /// Coefficients must be finite and nonnegative. An all-zero vector is
    /// representable (it is reported by [`is_monotone`](Self::is_monotone)) but
    /// rejected when placed on a network edge.
    pub fn linear(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::InvalidFlowSpec("linear flow needs at least one coefficient".into()));
        }
        if let Some(c) = coefficients.iter().find(|c| !c.is_finite() || **c < 0.0) {
            return Err(Error::InvalidFlowSpec(format!(
                "linear coefficients must be finite and >= 0, got {c}"
            )));
        }
        Ok(FlowFunctionSpec::LinearMulti { coefficients })
    }

    /// LinDistFlow edge with resistance `r` and reactance `x`.
    pub fn lin_dist_flow(r: f64, x: f64) -> Result<Self> {
        Self::linear(vec![2.0 * r, 2.0 * x])
    }

    pub fn quadratic(alpha: f64, beta: f64) -> Result<Self> {
        check_alpha(alpha)?;
        check_finite("beta", beta)?;
        Ok(FlowFunctionSpec::QuadraticBoost { alpha, beta })
    }

    pub fn power_law(alpha: f64, exponent: f64, beta: f64) -> Result<Self> {
        check_alpha(alpha)?;
        check_finite("beta", beta)?;
        if !(exponent.is_finite() && exponent >= 1.0) {
            return Err(Error::InvalidFlowSpec(format!("exponent must be >= 1, got {exponent}")));
        }
        Ok(FlowFunctionSpec::PowerLaw { alpha, exponent, beta })
    }

    pub fn family(&self) -> FlowFamily {
        match self {
            FlowFunctionSpec::LinearMulti { .. } => FlowFamily::LinearMulti,
            FlowFunctionSpec::QuadraticBoost { .. } => FlowFamily::QuadraticBoost,
            FlowFunctionSpec::PowerLaw { .. } => FlowFamily::PowerLaw,
        }
    }

    /// Number of flow components the function consumes.
    pub fn commodities(&self) -> usize {
        match self {
            FlowFunctionSpec::LinearMulti { coefficients } => coefficients.len(),
            _ => 1,
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, FlowFunctionSpec::LinearMulti { .. })
    }

    /// Additive constant of the drop (compressor boost); zero for linear.
    pub fn offset(&self) -> f64 {
        match *self {
            FlowFunctionSpec::LinearMulti { .. } => 0.0,
            FlowFunctionSpec::QuadraticBoost { beta, .. } | FlowFunctionSpec::PowerLaw { beta, .. } => beta,
        }
    }

    /// Same function with the additive constant shifted by `delta`.
    /// Linear functions have no constant and are returned unchanged.
    pub fn with_offset_shift(&self, delta: f64) -> Self {
        let mut s = self.clone();
        match &mut s {
            FlowFunctionSpec::LinearMulti { .. } => {}
            FlowFunctionSpec::QuadraticBoost { beta, .. } | FlowFunctionSpec::PowerLaw { beta, .. } => {
                *beta += delta
            }
        }
        s
    }

    /// Same function with the friction constant (or linear coefficients)
    /// multiplied by `k > 0`.
    pub fn scaled(&self, k: f64) -> Self {
        let mut s = self.clone();
        match &mut s {
            FlowFunctionSpec::LinearMulti { coefficients } => coefficients.iter_mut().for_each(|c| *c *= k),
            FlowFunctionSpec::QuadraticBoost { alpha, .. } | FlowFunctionSpec::PowerLaw { alpha, .. } => {
                *alpha *= k
            }
        }
        s
    }

    /// Potential drop for the given flow.
    pub fn eval_g(&self, f: &FlowVector) -> Result<f64> {
        if f.commodities() != self.commodities() {
            return Err(Error::DimensionMismatch {
                expected: self.commodities(),
                found: f.commodities(),
            });
        }
        Ok(self.eval_unchecked(&f.0))
    }

    /// Hot-path evaluation; `f` must have [`commodities`](Self::commodities) entries.
    #[inline]
    pub fn eval_unchecked(&self, f: &[f64]) -> f64 {
        match self {
            FlowFunctionSpec::LinearMulti { coefficients } => {
                coefficients.iter().zip(f).map(|(c, x)| c * x).sum()
            }
            FlowFunctionSpec::QuadraticBoost { alpha, beta } => alpha * f[0] * f[0].abs() + beta,
            FlowFunctionSpec::PowerLaw { alpha, exponent, beta } => {
                alpha * f[0] * f[0].abs().powf(exponent - 1.0) + beta
            }
        }
    }

    /// Unique flow producing `drop`, in closed form.
    ///
    /// Only single-commodity functions are invertible: a two-commodity linear
    /// drop is one equation in two unknowns.
    pub fn invert_g(&self, drop: f64) -> Result<FlowVector> {
        self.check_invertible()?;
        let f = match *self {
            FlowFunctionSpec::LinearMulti { ref coefficients } => drop / coefficients[0],
            FlowFunctionSpec::QuadraticBoost { alpha, beta } => {
                let x = drop - beta;
                x.signum() * (x.abs() / alpha).sqrt()
            }
            FlowFunctionSpec::PowerLaw { alpha, exponent, beta } => {
                let x = drop - beta;
                x.signum() * (x.abs() / alpha).powf(exponent.recip())
            }
        };
        Ok(FlowVector::scalar(if drop - self.offset() == 0.0 { 0.0 } else { f }))
    }

    /// Inversion by bisection, for families without a closed form.
    ///
    /// The bracket starts at `[-1, 1]` and doubles until it contains the root.
    pub fn invert_g_bisection(&self, drop: f64) -> Result<FlowVector> {
        self.check_invertible()?;
        let g = |x: f64| self.eval_unchecked(&[x]) - drop;
        let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
        let mut expansions = 0;
        while g(lo) > 0.0 || g(hi) < 0.0 {
            lo *= 2.0;
            hi *= 2.0;
            expansions += 1;
            if expansions > 1100 || !lo.is_finite() {
                return Err(Error::NotInvertible(format!("no bracket found for drop {drop}")));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(FlowVector::scalar(0.5 * (lo + hi)))
    }

    fn check_invertible(&self) -> Result<()> {
        match self {
            FlowFunctionSpec::LinearMulti { coefficients } if coefficients.len() != 1 => {
                Err(Error::NotInvertible(format!(
                    "linear flow with {} commodities has one equation and {} unknowns",
                    coefficients.len(),
                    coefficients.len()
                )))
            }
            FlowFunctionSpec::LinearMulti { coefficients } if coefficients[0] == 0.0 => {
                Err(Error::NotInvertible("zero linear coefficient".into()))
            }
            _ => Ok(()),
        }
    }

    /// Whether the drop is strictly increasing in every commodity.
    ///
    /// Decided from the parameters; on failure a pair of flows with equal drop,
    /// found on a sampling grid, is attached as a witness.
    pub fn is_monotone(&self) -> MonotoneReport {
        let monotone = match self {
            FlowFunctionSpec::LinearMulti { coefficients } => coefficients.iter().all(|c| *c > 0.0),
            FlowFunctionSpec::QuadraticBoost { alpha, .. } => *alpha > 0.0,
            FlowFunctionSpec::PowerLaw { alpha, exponent, .. } => *alpha > 0.0 && *exponent >= 1.0,
        };
        if monotone {
            return MonotoneReport { monotone, witness: None };
        }
        MonotoneReport { monotone, witness: self.grid_witness() }
    }

    fn grid_witness(&self) -> Option<(FlowVector, FlowVector)> {
        let k = self.commodities();
        let grid: Vec<f64> = (-20..=20).map(|i| i as f64 * 0.5).collect();
        for axis in 0..k {
            let at = |t: f64| {
                let mut v = vec![0.0; k];
                v[axis] = t;
                v
            };
            for w in grid.windows(2) {
                let (lo, hi) = (at(w[0]), at(w[1]));
                if self.eval_unchecked(&hi) <= self.eval_unchecked(&lo) {
                    return Some((FlowVector(lo), FlowVector(hi)));
                }
            }
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneReport {
    pub monotone: bool,
    /// `(f1, f2)` with `f1 < f2` but `g(f1) >= g(f2)`.
    pub witness: Option<(FlowVector, FlowVector)>,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidFlowSpec(format!("alpha must be > 0, got {alpha}")))
    }
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidFlowSpec(format!("{name} must be finite, got {v}")))
    }
}

// Wire form: `{"family": "...", "params": {...}}`.
#[derive(Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "kebab-case")]
enum RawFlow {
    LinearMulti(RawLinear),
    QuadraticBoost(RawQuadratic),
    PowerLaw(RawPowerLaw),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLinear {
    coefficients: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuadratic {
    alpha: f64,
    #[serde(default)]
    beta: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPowerLaw {
    alpha: f64,
    #[serde(default = "default_exponent")]
    exponent: f64,
    #[serde(default)]
    beta: f64,
}

fn default_exponent() -> f64 {
    HAZEN_WILLIAMS_EXPONENT
}

impl TryFrom<RawFlow> for FlowFunctionSpec {
    type Error = Error;

    fn try_from(raw: RawFlow) -> Result<Self> {
        match raw {
            RawFlow::LinearMulti(p) => FlowFunctionSpec::linear(p.coefficients),
            RawFlow::QuadraticBoost(p) => FlowFunctionSpec::quadratic(p.alpha, p.beta),
            RawFlow::PowerLaw(p) => FlowFunctionSpec::power_law(p.alpha, p.exponent, p.beta),
        }
    }
}

impl From<FlowFunctionSpec> for RawFlow {
    fn from(spec: FlowFunctionSpec) -> Self {
        match spec {
            FlowFunctionSpec::LinearMulti { coefficients } => RawFlow::LinearMulti(RawLinear { coefficients }),
            FlowFunctionSpec::QuadraticBoost { alpha, beta } => RawFlow::QuadraticBoost(RawQuadratic { alpha, beta }),
            FlowFunctionSpec::PowerLaw { alpha, exponent, beta } => {
                RawFlow::PowerLaw(RawPowerLaw { alpha, exponent, beta })
            }
        }
    }
}
