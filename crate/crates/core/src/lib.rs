//! Simulation, topology learning and theory checks for radial flow networks.
//!
//! A flow network (power distribution, gas transmission, water) is modelled as
//! a loopy graph of permissible edges of which a spanning tree is operational.
//! Nodal potentials are driven by independent injections through monotone edge
//! flow functions. The operational tree is recovered from potential samples
//! alone by weighting every permissible edge with the variance of the
//! potential difference across it and taking the minimum spanning tree.
//!
//! Module map:
//!
//! - [`network`]: candidate graphs, radial validation, tree combinatorics.
//! - [`flowmodel`]: monotone edge flow functions and their inverses.
//! - [`simulator`]: injections, flows, potentials, measurement noise.
//! - [`learner`]: edge variances, Kruskal MST, grouping of independent trees.
//! - [`estimator`]: flows and injection statistics from a known tree.
//! - [`oracles`]: independent ground truth used to validate the above.
//! - [`experiment`]: network templates, error metric and sample sweeps.

pub mod error;
pub mod estimator;
pub mod experiment;
pub mod flowmodel;
pub mod learner;
pub mod network;
pub mod oracles;
pub mod rng;
pub mod simulator;
pub mod stats;

pub use error::{Error, Result};
pub use flowmodel::{FlowFamily, FlowFunctionSpec, FlowVector};
pub use learner::{EdgeWeightMap, LearnedTopology};
pub use network::{CandidateEdge, NetworkGraph, NodeId, RadialTree};
pub use simulator::{InjectionModel, MeasurementSet, NoiseSpec};
