//! Command-line front end.
//!
//! Exit codes: 0 success, 2 invalid input, 3 pipeline failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use flowtree::error::Error;
use flowtree::experiment::{self, ExperimentConfig, FamilyChoice, NetworkSource, Template};
use flowtree::learner::{self, LearnedTopology, TreeFile};
use flowtree::network::{NetworkGraph, RadialTree};
use flowtree::simulator::{self, InjectionModel, MeasurementSet, NoiseSpec};
use flowtree::{estimator, rng};

/// Default output directory when `--out` is omitted.
const OUT_DIR_ENV: &str = "FLOWTREE_OUT_DIR";

#[derive(Parser)]
#[command(name = "flowtree", version, about = "Radial flow network simulation and topology learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic network file.
    GenNetwork(GenNetworkArgs),
    /// Simulate potential measurements on a network.
    Simulate(SimulateArgs),
    /// Learn the operational tree from measurements.
    Learn(LearnArgs),
    /// Estimate injection statistics on a learned tree.
    Estimate(EstimateArgs),
    /// Fractional error of a learned tree against a network's operational edges.
    Eval(EvalArgs),
    /// Run the oracle checks on a network.
    Verify(VerifyArgs),
    /// Sweep sample counts and noise levels.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct GenNetworkArgs {
    #[arg(long, value_enum, default_value = "random-radial")]
    template: Template,
    #[arg(long)]
    nodes: usize,
    #[arg(long, default_value_t = 0)]
    fictitious: usize,
    #[arg(long, value_enum, default_value = "linear")]
    family: FamilyChoice,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    noise_frac: f64,
    /// Defaults to a value derived from `--seed`.
    #[arg(long)]
    noise_seed: Option<u64>,
    #[arg(long, default_value_t = simulator::DEFAULT_REFERENCE_POTENTIAL)]
    reference_potential: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LearnArgs {
    #[arg(long)]
    measurements: PathBuf,
    /// Network file whose edges are the permissible candidates; all pairs when omitted.
    #[arg(long)]
    candidates: Option<PathBuf>,
    /// Split nodes into independent trees by potential correlation first.
    #[arg(long)]
    group_threshold: Option<f64>,
    /// Also learn on the complete graph and report whether the trees agree.
    #[arg(long)]
    compare_complete: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    measurements: PathBuf,
    #[arg(long)]
    tree: PathBuf,
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    tree: PathBuf,
    #[arg(long)]
    network: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200_000)]
    mc_samples: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON experiment config; flags below are ignored when given.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, conflicts_with = "template")]
    network: Option<PathBuf>,
    #[arg(long, value_enum)]
    template: Option<Template>,
    #[arg(long, default_value_t = 30)]
    nodes: usize,
    #[arg(long, default_value_t = 30)]
    fictitious: usize,
    #[arg(long, value_enum, default_value = "linear")]
    family: FamilyChoice,
    #[arg(long, value_delimiter = ',', default_values_t = vec![25, 50, 100, 200, 400])]
    samples: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0])]
    noise: Vec<f64>,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let validation = err.chain().any(|c| c.downcast_ref::<Error>().is_some_and(Error::is_validation))
                || err.downcast_ref::<Usage>().is_some();
            ExitCode::from(if validation { 2 } else { 3 })
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct Usage(String);

fn output(out: Option<PathBuf>, default_name: &str) -> anyhow::Result<PathBuf> {
    if let Some(p) = out {
        return Ok(p);
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) => Ok(Path::new(&dir).join(default_name)),
        None => Err(Usage(format!("--out is required when {OUT_DIR_ENV} is unset")).into()),
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::GenNetwork(a) => {
            let g = experiment::gen_network(a.template, a.nodes, a.fictitious, a.family, a.seed)?;
            let out = output(a.out, "network.json")?;
            write_json(&out, &g)?;
            println!("{}", out.display());
        }
        Command::Simulate(a) => {
            let g = NetworkGraph::load(&a.network)?;
            let tree = g.validate_radial()?;
            let model = InjectionModel::for_network(&g, vec![tree.reference()], a.seed)?;
            let mut ms = simulator::simulate(&g, &tree, &model, a.samples, a.seed, a.reference_potential)?;
            if a.noise_frac > 0.0 || a.noise_seed.is_some() {
                let seed = a.noise_seed.unwrap_or_else(|| rng::derive(a.seed, &[0x4E]));
                ms = simulator::add_noise(&ms, NoiseSpec::new(a.noise_frac, seed)?)?;
            }
            let dir = output(a.out, "")?;
            std::fs::create_dir_all(&dir)?;
            let csv = dir.join("measurements.csv");
            ms.write_csv(&csv)?;
            println!("{}", csv.display());
        }
        Command::Learn(a) => {
            let ms = MeasurementSet::read_csv(&a.measurements)?;
            let candidates = match &a.candidates {
                Some(p) => Some(NetworkGraph::load(p)?.candidate_keys()),
                None => None,
            };
            let file = learn(&ms, candidates.as_deref(), a.group_threshold, a.compare_complete)?;
            let out = output(a.out, "tree.json")?;
            write_json(&out, &file)?;
            println!("{}", out.display());
        }
        Command::Estimate(a) => {
            let ms = MeasurementSet::read_csv(&a.measurements)?;
            let learned = TreeFile::load(&a.tree)?;
            let g = NetworkGraph::load(&a.network)?;
            let tree = RadialTree::from_edges(g.node_count(), g.reference(), &learned.edge_keys())?;
            let (_, est) = estimator::estimate_injections(&tree, &simulator::edge_specs(&g), &ms)?;
            let out = output(a.out, "injections.json")?;
            write_json(&out, &est)?;
            println!("{}", out.display());
        }
        Command::Eval(a) => {
            let learned = TreeFile::load(&a.tree)?;
            let g = NetworkGraph::load(&a.network)?;
            let mut truth = g.operational_keys();
            truth.sort();
            let err = experiment::eval_topology(&learned.edge_keys(), &truth)?;
            println!("{err}");
        }
        Command::Verify(a) => {
            let g = NetworkGraph::load(&a.network)?;
            let report = experiment::verify_network(&g, a.seed, a.mc_samples)?;
            match a.out {
                Some(p) => write_json(&p, &report)?,
                None => println!("{}", serde_json::to_string_pretty(&report)?),
            }
        }
        Command::Sweep(a) => {
            let mut config = match &a.config {
                Some(p) => ExperimentConfig::load(p)?,
                None => ExperimentConfig {
                    network: match (a.network, a.template) {
                        (Some(path), _) => NetworkSource::File { path },
                        (None, template) => NetworkSource::Template {
                            template: template.unwrap_or(Template::RandomRadial),
                            nodes: a.nodes,
                            fictitious: a.fictitious,
                            family: a.family,
                        },
                    },
                    samples: a.samples,
                    noise: a.noise,
                    trials: a.trials,
                    seed: a.seed,
                    output_dir: None,
                    reference_potential: simulator::DEFAULT_REFERENCE_POTENTIAL,
                },
            };
            if a.out.is_some() {
                config.output_dir = a.out;
            }
            let dir = output(config.output_dir.clone(), "")?;
            let report = experiment::run_sweep(&config)?;
            std::fs::create_dir_all(&dir)?;
            let csv = dir.join("sweep.csv");
            report.write_csv(&csv)?;
            println!("{}", csv.display());
        }
    }
    Ok(())
}

fn learn(
    ms: &MeasurementSet,
    candidates: Option<&[flowtree::network::EdgeKey]>,
    group_threshold: Option<f64>,
    compare_complete: bool,
) -> anyhow::Result<TreeFile> {
    let (edges, total_weight, groups) = match group_threshold {
        Some(tau) => {
            let grouped = learner::group_components(ms, tau)?;
            let all = learner::complete_graph(ms.nodes());
            let groups = learner::merge_groups(ms, &grouped, candidates.unwrap_or(&all))?;
            let trees = learner::learn_grouped(ms, &groups, candidates)?;
            let edges: Vec<_> = trees.iter().flat_map(|t| t.edges.clone()).collect();
            let total = trees.iter().map(|t| t.total_weight).sum();
            (edges, total, Some(groups))
        }
        None => {
            let t: LearnedTopology = learner::learn_structure(ms, candidates)?;
            (t.edges, t.total_weight, None)
        }
    };
    let matches_complete_graph = if compare_complete && candidates.is_some() && groups.is_none() {
        let full = learner::learn_structure(ms, None)?;
        let mut mine: Vec<_> = edges.iter().map(|e| e.key()).collect();
        mine.sort();
        Some(mine == full.edge_keys())
    } else {
        None
    };
    Ok(TreeFile { nodes: ms.nodes(), samples: ms.samples(), total_weight, edges, groups, matches_complete_graph })
}
