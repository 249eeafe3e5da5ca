//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Run with `cargo test -p flowtree --test acceptance`. A single criterion can
//! be selected by passing its number: `... --test acceptance -- 4`.

use std::collections::HashSet;
use std::time::{Duration, Instant};

use flowtree::estimator::{recover_flows, recover_injections, injection_statistics};
use flowtree::experiment::{gen_network, run_sweep, ErrorReport, ExperimentConfig, FamilyChoice, NetworkSource, Template};
use flowtree::learner::{complete_graph, kruskal_mst, learn_structure, EdgeWeightMap};
use flowtree::network::EdgeKey;
use flowtree::oracles::{
    brute_force_mst, check_ordering, exact_phi_linear, monte_carlo_phi, pqd_empirical_check, positive_correlation_check,
    quantile_levels, PhiTable, Verdict,
};
use flowtree::simulator::{edge_specs, sample_injections, simulate, solve_flows, solve_potentials, InjectionModel};
use flowtree::{rng, NetworkGraph, NodeId, RadialTree};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Uniform};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn secs(d: Duration) -> String {
    format!("{:.2} s", d.as_secs_f64())
}

// Criteria 1 and 2 share the networks.
struct OracleNetwork {
    graph: NetworkGraph,
    tree: RadialTree,
    phi: PhiTable,
    reruns: usize,
}

const MC_SAMPLES: usize = 1_000_000;
const MAX_RERUNS: usize = 2;

fn oracle_networks() -> (Vec<OracleNetwork>, Duration) {
    let start = Instant::now();
    let mut out = Vec::with_capacity(100);
    for i in 0..100u64 {
        let n = 6 + (i as usize % 10);
        let family = [FamilyChoice::Linear, FamilyChoice::Quadratic, FamilyChoice::PowerLaw, FamilyChoice::Mixed][i as usize % 4];
        let graph = gen_network(Template::RandomRadial, n, n, family, 1000 + i).unwrap();
        let tree = graph.validate_radial().unwrap();
        let model = InjectionModel::for_network(&graph, vec![tree.reference()], 1000 + i).unwrap();
        let specs = edge_specs(&graph);
        let tree_linear = tree.edge_keys().iter().all(|k| specs[k].is_linear());
        let cands = graph.candidate_keys();
        let mut reruns = 0;
        let phi = if tree_linear {
            exact_phi_linear(&tree, &model, &specs).unwrap()
        } else {
            let mut phi = monte_carlo_phi(&tree, &model, &specs, MC_SAMPLES, rng::derive(i, &[0xAC1])).unwrap();
            // a mismatch is only rerun when every disagreement is within noise
            while reruns < MAX_RERUNS && !recovers(&graph, &tree, &phi, &cands) && inconclusive(&tree, &phi, &cands) {
                reruns += 1;
                let m = MC_SAMPLES << (2 * reruns);
                phi = monte_carlo_phi(&tree, &model, &specs, m, rng::derive(i, &[0xAC1, reruns as u64])).unwrap();
            }
            phi
        };
        out.push(OracleNetwork { graph, tree, phi, reruns });
    }
    (out, start.elapsed())
}

fn recovers(graph: &NetworkGraph, tree: &RadialTree, phi: &PhiTable, cands: &[EdgeKey]) -> bool {
    let mst = kruskal_mst(graph.node_count(), cands, &phi.edge_weights(cands)).unwrap();
    mst.edge_keys() == tree.edge_keys()
}

// Every fictitious edge that is not clearly heavier than some tree edge on
// its cycle is within three combined standard errors of it.
fn inconclusive(tree: &RadialTree, phi: &PhiTable, cands: &[EdgeKey]) -> bool {
    let ops: HashSet<EdgeKey> = tree.edge_keys().into_iter().collect();
    cands.iter().filter(|k| !ops.contains(k)).all(|k| {
        let path = tree.node_path(k.lo, k.hi).unwrap();
        path.windows(2).all(|w| {
            let (fw, tw) = (phi.get(k.lo, k.hi), phi.get(w[0], w[1]));
            let se = (phi.std_error(k.lo, k.hi).powi(2) + phi.std_error(w[0], w[1]).powi(2)).sqrt();
            fw > tw || tw - fw <= 3.0 * se
        })
    })
}

fn criterion_1(nets: &[OracleNetwork], elapsed: Duration) -> Outcome {
    let mut ok = 0;
    let mut exact = 0;
    let reruns: usize = nets.iter().map(|n| n.reruns).sum();
    for net in nets {
        exact += usize::from(net.phi.is_exact());
        ok += usize::from(recovers(&net.graph, &net.tree, &net.phi, &net.graph.candidate_keys()));
    }
    let pass = ok == 100 && elapsed < Duration::from_secs(120);
    outcome(
        pass,
        format!("{ok}/100 networks recovered ({exact} exact, {} Monte-Carlo, {reruns} reruns) in {} (limit 120 s)", 100 - exact, secs(elapsed)),
    )
}

fn criterion_2(nets: &[OracleNetwork]) -> Outcome {
    let mut triples = 0;
    let mut exact_violations = 0;
    let mut mc_violations = 0;
    let mut additivity: f64 = 0.0;
    for net in nets {
        let r = check_ordering(&net.tree, &net.phi).unwrap();
        triples += r.triples;
        if net.phi.is_exact() {
            exact_violations += r.violations.len();
            additivity = additivity.max(r.max_branch_additivity_error);
        } else {
            mc_violations += r.violations.len();
        }
    }
    let pass = exact_violations == 0 && mc_violations == 0;
    outcome(
        pass,
        format!(
            "{triples} triples; {exact_violations} exact violations, {mc_violations} Monte-Carlo violations beyond 3 sigma; \
             worst exact branch additivity error {additivity:.1e}"
        ),
    )
}

fn sweep(template_nodes: usize, family: FamilyChoice, samples: Vec<usize>, noise: Vec<f64>, seed: u64) -> ErrorReport {
    let config = ExperimentConfig {
        network: NetworkSource::Template { template: Template::RandomRadial, nodes: template_nodes, fictitious: template_nodes, family },
        samples,
        noise,
        trials: 50,
        seed,
        output_dir: None,
        reference_potential: 1.0,
    };
    run_sweep(&config).unwrap()
}

const POWER: (usize, FamilyChoice, &str) = (30, FamilyChoice::Linear, "30-node linear");
const GAS: (usize, FamilyChoice, &str) = (25, FamilyChoice::Quadratic, "25-node quadratic");

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for (n, family, name) in [POWER, GAS] {
        let report = sweep(n, family, vec![200, 400], vec![0.0], 1);
        let zeros = report.trials(400, 0.0).unwrap().iter().filter(|&&e| e == 0.0).count();
        let mean200 = report.row(200, 0.0).unwrap().mean_err;
        pass &= zeros as f64 >= 0.95 * 50.0 && mean200 < 0.02;
        parts.push(format!("{name}: {zeros}/50 exact at m=400, mean error {mean200:.4} at m=200"));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(60);
    outcome(pass, format!("{}; {} (limit 60 s)", parts.join("; "), secs(elapsed)))
}

fn criterion_4() -> Outcome {
    let rhos = [0.05, 0.08, 0.1];
    let mut pass = true;
    let mut parts = Vec::new();
    for (n, family, name) in [POWER, GAS] {
        let report = sweep(n, family, vec![100, 400, 1600], rhos.to_vec(), 2);
        let mut decreasing = Vec::new();
        for rho in rhos {
            let (lo, hi) = (report.row(100, rho).unwrap().mean_err, report.row(1600, rho).unwrap().mean_err);
            pass &= hi < lo;
            decreasing.push(format!("rho={rho}: {lo:.3} -> {hi:.3}"));
        }
        let at400: Vec<_> = rhos.iter().map(|&r| report.row(400, r).unwrap()).collect();
        let mut monotone = true;
        for w in at400.windows(2) {
            let pooled = (w[0].std_err.powi(2) / w[0].trials as f64 + w[1].std_err.powi(2) / w[1].trials as f64).sqrt();
            monotone &= w[1].mean_err >= w[0].mean_err - pooled;
        }
        pass &= monotone;
        let means: Vec<String> = at400.iter().map(|r| format!("{:.3}", r.mean_err)).collect();
        parts.push(format!(
            "{name}: m=100 -> m=1600 [{}]; m=400 across rho [{}] {}",
            decreasing.join(", "),
            means.join(", "),
            if monotone { "non-decreasing" } else { "decreasing beyond 1 pooled SE" }
        ));
    }
    outcome(pass, parts.join("; "))
}

fn criterion_5() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let mut matched = 0;
    let mut ties = 0;
    for i in 0..200 {
        let n = r.random_range(2..=8);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut r);
        let mut cands: HashSet<EdgeKey> =
            (1..n).map(|j| EdgeKey::new(NodeId(order[j]), NodeId(order[r.random_range(0..j)]))).collect();
        for k in complete_graph(n) {
            if r.random_bool(0.5) {
                cands.insert(k);
            }
        }
        let mut cands: Vec<EdgeKey> = cands.into_iter().collect();
        cands.sort();
        // every fourth graph uses small integer weights to force ties
        let w = EdgeWeightMap::from_pairs(
            0,
            cands.iter().map(|k| (*k, if i % 4 == 0 { r.random_range(1..=3) as f64 } else { r.random_range(0.0..1.0) })).collect(),
        );
        let k = kruskal_mst(n, &cands, &w).unwrap();
        let b = brute_force_mst(n, &cands, &w).unwrap();
        ties += usize::from(b.optimal.len() > 1);
        let same = (k.total_weight - b.min_weight).abs() <= 1e-12 * b.min_weight.abs().max(1.0) && b.optimal.contains(&k.edge_keys());
        matched += usize::from(same);
    }
    outcome(matched == 200, format!("{matched}/200 graphs match the brute-force minimum ({ties} with tied optima)"))
}

fn criterion_6() -> Outcome {
    let m = 100_000;
    let grid = quantile_levels(9);
    let mut r = ChaCha8Rng::seed_from_u64(6);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let wide = Normal::new(2.0, 3.0).unwrap();
    let unif = Uniform::new(-1.0, 1.0).unwrap();
    let exp = Exp::new(1.0).unwrap();
    let slow = Exp::new(0.2).unwrap();
    type Draw<'a> = Box<dyn Fn(&mut ChaCha8Rng) -> f64 + 'a>;
    let draws: Vec<(&str, Draw, Draw)> = vec![
        ("N(0,1)+N(0,1)", Box::new(|r| normal.sample(r)), Box::new(|r| normal.sample(r))),
        ("N(0,1)+N(2,9)", Box::new(|r| normal.sample(r)), Box::new(|r| wide.sample(r))),
        ("U(-1,1)+U(-1,1)", Box::new(|r| unif.sample(r)), Box::new(|r| unif.sample(r))),
        ("Exp(1)+Exp(1)", Box::new(|r| exp.sample(r)), Box::new(|r| exp.sample(r))),
        ("N(0,1)+U(-1,1)", Box::new(|r| normal.sample(r)), Box::new(|r| unif.sample(r))),
        ("U(-1,1)+Exp(1)", Box::new(|r| unif.sample(r)), Box::new(|r| exp.sample(r))),
        ("Exp(1)+N(0,1)", Box::new(|r| exp.sample(r)), Box::new(|r| normal.sample(r))),
        ("Exp(0.2)+U(-1,1)", Box::new(|r| slow.sample(r)), Box::new(|r| unif.sample(r))),
        ("-Exp(1)+N(2,9)", Box::new(|r| -exp.sample(r)), Box::new(|r| wide.sample(r))),
        ("mix(N,Exp)+mix(U,N)", Box::new(|r| if r.random_bool(0.5) { normal.sample(r) } else { exp.sample(r) }), Box::new(|r| {
            if r.random_bool(0.3) { unif.sample(r) } else { wide.sample(r) }
        })),
    ];
    let mut passed = 0;
    let mut worst = f64::INFINITY;
    for (_, dx, dy) in &draws {
        let x: Vec<f64> = (0..m).map(|_| dx(&mut r)).collect();
        let y: Vec<f64> = (0..m).map(|_| dy(&mut r)).collect();
        let rep = pqd_empirical_check(&x, &y, &grid).unwrap();
        passed += usize::from(rep.violations == 0);
        worst = worst.min(rep.worst_normalized);
    }
    let x: Vec<f64> = (0..m).map(|_| normal.sample(&mut r)).collect();
    let y: Vec<f64> = x.iter().map(|a| -2.0 * a + 0.3 * normal.sample(&mut r)).collect();
    let control = pqd_empirical_check(&x, &y, &grid).unwrap();
    let flagged = control.violations > 0 && control.verdict == Verdict::Fail;
    outcome(
        passed == draws.len() && flagged,
        format!(
            "{passed}/{} pairs without violations (worst margin {worst:.2} tolerances); negative control {} ({} violations)",
            draws.len(),
            if flagged { "flagged" } else { "NOT flagged" },
            control.violations
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut significant = 0;
    let mut min_z = f64::INFINITY;
    for i in 0..50u64 {
        let g = gen_network(Template::RandomRadial, 10, 5, FamilyChoice::Quadratic, 700 + i).unwrap();
        let tree = g.validate_radial().unwrap();
        let model = InjectionModel::for_network(&g, vec![tree.reference()], 700 + i).unwrap();
        let specs = edge_specs(&g);
        let mut r = ChaCha8Rng::seed_from_u64(i);
        let mut nodes: Vec<NodeId> = (1..10).map(NodeId).collect();
        nodes.shuffle(&mut r);
        let big = r.random_range(2..=9);
        let small = r.random_range(1..big);
        let v2 = &nodes[..big];
        let v1 = &nodes[..small];
        let edges = tree.edge_keys();
        let gi = &specs[&edges[r.random_range(0..edges.len())]];
        let gj = &specs[&edges[r.random_range(0..edges.len())]];
        let rep = positive_correlation_check(&tree, &model, gi, gj, v1, v2, 20_000, rng::derive(i, &[0x7])).unwrap();
        significant += usize::from(rep.nested && rep.verdict == Verdict::Pass);
        min_z = min_z.min(rep.z);
    }
    outcome(significant == 50, format!("{significant}/50 nested instances positive at 3 sigma (smallest z {min_z:.1})"))
}

fn criterion_8() -> Outcome {
    let m = 100_000;
    let g = gen_network(Template::RandomRadial, 25, 25, FamilyChoice::Quadratic, 8).unwrap();
    let tree = g.validate_radial().unwrap();
    let specs = edge_specs(&g);
    let model = InjectionModel::for_network(&g, vec![tree.reference()], 8).unwrap();
    let inj = sample_injections(&model, m, 8).unwrap();
    let ms = solve_potentials(&tree, &specs, &solve_flows(&tree, &inj).unwrap(), 1.0).unwrap();
    let got = recover_injections(&tree, &recover_flows(&tree, &specs, &ms).unwrap()).unwrap();
    let mut worst: f64 = 0.0;
    for s in 0..m {
        for a in (0..25).map(NodeId).filter(|&a| a != tree.reference()) {
            worst = worst.max((got.get(s, a, 0) - inj.get(s, a, 0)).abs());
        }
    }
    let est = injection_statistics(&tree, &got, false);
    let worst_var = est
        .nodes
        .iter()
        .map(|e| {
            let v = model.variance(e.node, 0);
            (e.variance - v).abs() / v
        })
        .fold(0.0, f64::max);
    outcome(
        worst <= 1e-8 && worst_var <= 0.1,
        format!("max injection error {worst:.1e} (limit 1e-8); max variance relative error {:.2}% (limit 10%)", 100.0 * worst_var),
    )
}

fn large_instance(edges: usize) -> (flowtree::MeasurementSet, Vec<EdgeKey>) {
    let n = 2000;
    let g = gen_network(Template::RandomRadial, n, 0, FamilyChoice::Quadratic, 9).unwrap();
    let tree = g.validate_radial().unwrap();
    let model = InjectionModel::for_network(&g, vec![tree.reference()], 9).unwrap();
    let ms = simulate(&g, &tree, &model, 200, 9, 1.0).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(99);
    let mut cands: HashSet<EdgeKey> = tree.edge_keys().into_iter().collect();
    while cands.len() < edges {
        let (a, b) = (r.random_range(0..n), r.random_range(0..n));
        if a != b {
            cands.insert(EdgeKey::new(NodeId(a), NodeId(b)));
        }
    }
    let mut cands: Vec<EdgeKey> = cands.into_iter().collect();
    cands.sort();
    (ms, cands)
}

fn best_of(runs: usize, f: impl Fn()) -> Duration {
    (0..runs)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed()
        })
        .min()
        .unwrap()
}

fn criterion_9() -> Outcome {
    let (ms, small) = large_instance(20_000);
    let (_, big) = large_instance(40_000);
    let single = {
        let t = Instant::now();
        learn_structure(&ms, Some(&small)).unwrap();
        t.elapsed()
    };
    let t1 = best_of(5, || {
        learn_structure(&ms, Some(&small)).unwrap();
    });
    let t2 = best_of(5, || {
        learn_structure(&ms, Some(&big)).unwrap();
    });
    let ratio = t2.as_secs_f64() / t1.as_secs_f64();
    outcome(
        single < Duration::from_secs(5) && ratio < 2.6,
        format!(
            "n=2000, |E|=20000, m=200: first run {} (limit 5 s), best {}; |E|=40000 best {}; ratio {ratio:.2} (limit 2.6)",
            secs(single),
            secs(t1),
            secs(t2)
        ),
    )
}

fn criterion_10() -> Outcome {
    let config = ExperimentConfig {
        network: NetworkSource::Template { template: Template::RandomRadial, nodes: 20, fictitious: 20, family: FamilyChoice::Mixed },
        samples: vec![25, 100],
        noise: vec![0.0, 0.05],
        trials: 10,
        seed: 10,
        output_dir: None,
        reference_potential: 1.0,
    };
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    run_sweep(&config).unwrap().write_csv(&a).unwrap();
    // second run on a single worker thread
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    pool.install(|| run_sweep(&config).unwrap().write_csv(&b).unwrap());
    let (x, y) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    outcome(x == y && !x.is_empty(), format!("two sweeps wrote {} and {} bytes, {}", x.len(), y.len(), if x == y { "identical" } else { "DIFFERENT" }))
}

const NAMES: [&str; 10] = [
    "exact-weight recovery",
    "ordering property",
    "noise-free empirical recovery",
    "noisy trend",
    "Kruskal vs brute force",
    "positive quadrant dependence",
    "nested-set positive correlation",
    "estimator round trip",
    "learner scaling",
    "sweep determinism",
];

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |i: usize| selected.is_empty() || selected.contains(&i);
    let oracle = if want(1) || want(2) { Some(oracle_networks()) } else { None };
    let mut failed = 0;
    for i in 1..=10 {
        if !want(i) {
            continue;
        }
        let o = match i {
            1 => {
                let (nets, t) = oracle.as_ref().unwrap();
                criterion_1(nets, *t)
            }
            2 => criterion_2(&oracle.as_ref().unwrap().0),
            3 => criterion_3(),
            4 => criterion_4(),
            5 => criterion_5(),
            6 => criterion_6(),
            7 => criterion_7(),
            8 => criterion_8(),
            9 => criterion_9(),
            _ => criterion_10(),
        };
        failed += usize::from(!o.pass);
        println!("criterion {i:>2} [{}] {}: {}", if o.pass { "PASS" } else { "FAIL" }, NAMES[i - 1], o.detail);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
