//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! MovieLens data is read from `HYPERMERW_ML100K` or `data/ml-100k/u.data`
//! at the workspace root.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use hypermerw::analysis::{is_primitive, mixing_curve, projected_kernel, spectral_gap, stationarity_residual, ProjectedKernel, Stepper};
use hypermerw::broadcast::{
    self, infer_broadcast, kl_divergence, pivot_weighted_reference, verify_front_factorization, BroadcastKernel,
    BroadcastOptions,
};
use hypermerw::hypergraph::{AdjacencyLayers, DegreeMode, DirectedHypergraph, Hyperedge, Orientation};
use hypermerw::merge::{
    self, contraction_constant, infer_merge, merge_reference, merge_step, verify_back_factorization, MergeKernel,
    MergeOptions,
};
use hypermerw::movielens::{
    build_events, context_counts, evaluate, fit_merw, load_ratings, FitOptions, LazyRwRanker, MerwRanker,
    PopularityRanker, Ranker, Subset, SuccessorWeighting,
};
use hypermerw::oracle::{broadcast_problem, kl_project_dense, merge_problem};
use hypermerw::tensor::SymSparseTensor;
use hypermerw::{l1_distance, Weights};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EXAMPLE_P: [[f64; 8]; 8] = [
    [0.257, 0.228, 0.257, 0.257, 0.0, 0.0, 0.0, 0.0],
    [0.257, 0.228, 0.257, 0.257, 0.0, 0.0, 0.0, 0.0],
    [0.257, 0.228, 0.257, 0.257, 0.0, 0.0, 0.0, 0.0],
    [0.228, 0.202, 0.228, 0.228, 0.0, 0.115, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 0.253, 0.242, 0.253, 0.253],
    [0.0, 0.045, 0.0, 0.0, 0.242, 0.231, 0.242, 0.242],
    [0.0, 0.0, 0.0, 0.0, 0.253, 0.242, 0.253, 0.253],
    [0.0, 0.0, 0.0, 0.0, 0.253, 0.242, 0.253, 0.253],
];

const BROADCAST_P: [f64; 8] = [0.07, 0.07, 0.07, 0.07, 0.18, 0.18, 0.18, 0.18];

const MERGE_P: [f64; 8] = [0.172, 0.226, 0.003, 0.146, 0.102, 0.081, 0.115, 0.156];

// receiver slices j = 1, 2, 3 of the example merging tensor (last slice in units of 1e-2)
const EXAMPLE_M: [[[f64; 8]; 8]; 3] = [
    [
        [0.223, 0.292, 0.0, 0.0, 0.0, 0.232, 0.217, 0.136],
        [0.292, 0.0, 0.237, 0.0, 0.143, 0.252, 0.162, 0.142],
        [0.0, 0.237, 0.276, 0.269, 0.166, 0.243, 0.272, 0.286],
        [0.0, 0.0, 0.269, 0.431, 0.134, 0.305, 0.167, 0.272],
        [0.0, 0.143, 0.166, 0.134, 0.253, 0.268, 0.237, 0.237],
        [0.232, 0.252, 0.243, 0.305, 0.268, 0.203, 0.139, 0.141],
        [0.217, 0.162, 0.272, 0.167, 0.237, 0.139, 0.375, 0.225],
        [0.136, 0.142, 0.286, 0.272, 0.237, 0.141, 0.225, 0.239],
    ],
    [
        [0.221, 0.145, 0.155, 0.298, 0.299, 0.230, 0.216, 0.270],
        [0.145, 0.364, 0.235, 0.176, 0.284, 0.250, 0.161, 0.281],
        [0.155, 0.235, 0.274, 0.133, 0.165, 0.241, 0.135, 0.142],
        [0.298, 0.176, 0.133, 0.0, 0.266, 0.151, 0.165, 0.135],
        [0.299, 0.284, 0.165, 0.266, 0.250, 0.265, 0.235, 0.235],
        [0.230, 0.250, 0.241, 0.151, 0.265, 0.201, 0.275, 0.140],
        [0.216, 0.161, 0.135, 0.165, 0.235, 0.275, 0.372, 0.223],
        [0.270, 0.281, 0.142, 0.135, 0.235, 0.140, 0.223, 0.237],
    ],
    [
        [0.288, 0.377, 0.202, 0.194, 0.389, 0.299, 0.281, 0.352],
        [0.377, 0.0, 0.305, 0.457, 0.185, 0.325, 0.419, 0.183],
        [0.202, 0.305, 0.356, 0.173, 0.429, 0.314, 0.351, 0.0],
        [0.194, 0.457, 0.173, 0.557, 0.346, 0.394, 0.215, 0.351],
        [0.389, 0.185, 0.429, 0.346, 0.0, 0.173, 0.305, 0.305],
        [0.299, 0.325, 0.314, 0.394, 0.173, 0.262, 0.179, 0.0],
        [0.281, 0.419, 0.351, 0.215, 0.305, 0.179, 0.484, 0.145],
        [0.352, 0.183, 0.0, 0.351, 0.305, 0.0, 0.145, 0.308],
    ],
];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

struct Solved<K> {
    adjacency: AdjacencyLayers,
    p: Vec<f64>,
    kernel: K,
}

struct Runs {
    broadcast: Vec<Solved<BroadcastKernel>>,
    merge: Vec<Solved<MergeKernel>>,
    curves: BTreeMap<String, String>,
    eval_csv: Option<String>,
}

fn artifact_dir() -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn active_layers(a: &AdjacencyLayers, weights: &Weights) -> BTreeMap<usize, SymSparseTensor> {
    a.layers()
        .iter()
        .filter(|(k, _)| weights.get(k).copied().unwrap_or(0.0) > 0.0)
        .map(|(k, t)| (*k, t.clone()))
        .collect()
}

fn broadcast_opts() -> BroadcastOptions {
    BroadcastOptions {
        tolerance: 1e-10,
        max_iter: 10_000,
        ..Default::default()
    }
}

fn merge_opts() -> MergeOptions {
    MergeOptions {
        tolerance: 1e-10,
        max_iter: 10_000,
        ..Default::default()
    }
}

fn criterion_1(runs: &mut Runs) -> Outcome {
    let mut worst_res: f64 = 0.0;
    let mut worst_time = Duration::ZERO;
    let mut failures = Vec::new();
    for i in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + i as u64);
        let n = 3 + i % 4;
        let inst = common::random_instance(&mut rng, Orientation::OneTail, n, common::sizes_for(i));
        let start = Instant::now();
        let res = infer_broadcast(&inst.layers, &inst.p, &inst.weights, &broadcast_opts());
        let elapsed = start.elapsed();
        worst_time = worst_time.max(elapsed);
        match res {
            Ok(kernel) => {
                let (row, stat) = broadcast::kernel_residuals(&kernel);
                let r = kernel.report.residual.max(row).max(stat);
                worst_res = worst_res.max(r);
                if !kernel.report.converged || r > 1e-10 || elapsed >= Duration::from_secs(1) {
                    failures.push(i);
                }
                runs.broadcast.push(Solved {
                    adjacency: inst.layers,
                    p: inst.p,
                    kernel,
                });
            }
            Err(e) => {
                eprintln!("criterion 1 instance {i}: {e}");
                failures.push(i);
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!("50 instances, worst residual {worst_res:.2e}, slowest {worst_time:.2?}, failing {failures:?}"),
    )
}

fn criterion_2(runs: &mut Runs) -> Outcome {
    let mut worst_res: f64 = 0.0;
    let mut worst_time = Duration::ZERO;
    let mut failures = Vec::new();
    for i in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + i as u64);
        let n = 3 + i % 4;
        let inst = common::random_instance(&mut rng, Orientation::OneHead, n, common::sizes_for(i));
        let start = Instant::now();
        let res = infer_merge(&inst.layers, &inst.p, &inst.weights, &merge_opts());
        let elapsed = start.elapsed();
        worst_time = worst_time.max(elapsed);
        match res {
            Ok(kernel) => {
                let (z, stat) = merge::kernel_residuals(&kernel).unwrap();
                let r = kernel.report.residual.max(z).max(stat);
                worst_res = worst_res.max(r);
                if !kernel.report.converged || r > 1e-10 || elapsed >= Duration::from_secs(1) {
                    failures.push(i);
                }
                runs.merge.push(Solved {
                    adjacency: inst.layers,
                    p: inst.p,
                    kernel,
                });
            }
            Err(e) => {
                eprintln!("criterion 2 instance {i}: {e}");
                failures.push(i);
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!("50 instances, worst residual {worst_res:.2e}, slowest {worst_time:.2?}, failing {failures:?}"),
    )
}

fn max_gap(a: &SymSparseTensor, b: &hypermerw::tensor::DenseTensor) -> f64 {
    a.to_dense()
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn criterion_3() -> Outcome {
    let mut worst_kl: f64 = 0.0;
    let mut worst_entry: f64 = 0.0;
    let mut errors = Vec::new();
    for i in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + i as u64);
        let n = 3 + i % 2;

        let inst = common::random_instance(&mut rng, Orientation::OneTail, n, &[3]);
        let run = || -> hypermerw::Result<(f64, f64)> {
            let kernel = infer_broadcast(&inst.layers, &inst.p, &inst.weights, &BroadcastOptions::default())?;
            let reference = pivot_weighted_reference(&inst.layers, &inst.p, &inst.weights)?;
            let joint = kernel.joint_layers();
            let sol = kl_project_dense(&broadcast_problem(&inst.layers, 3, &inst.p)?, 1e-12, 500)?;
            Ok(((kl_divergence(&joint, &reference) - sol.kl).abs(), max_gap(&joint[&3], &sol.tensor)))
        };
        match run() {
            Ok((kl, entry)) => {
                worst_kl = worst_kl.max(kl);
                worst_entry = worst_entry.max(entry);
            }
            Err(e) => errors.push(format!("broadcast {i}: {e}")),
        }

        let inst = common::random_instance(&mut rng, Orientation::OneHead, n, &[3]);
        let run = || -> hypermerw::Result<(f64, f64)> {
            let kernel = infer_merge(&inst.layers, &inst.p, &inst.weights, &MergeOptions::default())?;
            let reference = merge_reference(&inst.layers, &inst.p, &inst.weights)?;
            let joint = kernel.joint_layers();
            let sol = kl_project_dense(&merge_problem(&inst.layers, 3, &inst.p)?, 1e-12, 500)?;
            Ok(((kl_divergence(&joint, &reference) - sol.kl).abs(), max_gap(&joint[&3], &sol.tensor)))
        };
        match run() {
            Ok((kl, entry)) => {
                worst_kl = worst_kl.max(kl);
                worst_entry = worst_entry.max(entry);
            }
            Err(e) => errors.push(format!("merge {i}: {e}")),
        }
    }
    outcome(
        errors.is_empty() && worst_kl <= 1e-6 && worst_entry <= 1e-6,
        format!("20+20 instances, max |dKL| {worst_kl:.2e}, max entry gap {worst_entry:.2e}, errors {errors:?}"),
    )
}

fn criterion_4(runs: &Runs) -> Outcome {
    let mut worst_front: f64 = 0.0;
    let mut worst_back: f64 = 0.0;
    let mut errors = 0;
    for s in &runs.broadcast {
        match verify_front_factorization(&s.kernel.layers, &active_layers(&s.adjacency, &s.kernel.weights)) {
            Ok(r) => worst_front = worst_front.max(r),
            Err(_) => errors += 1,
        }
    }
    for s in &runs.merge {
        match verify_back_factorization(&s.kernel.layers, &active_layers(&s.adjacency, &s.kernel.weights)) {
            Ok(r) => worst_back = worst_back.max(r),
            Err(_) => errors += 1,
        }
    }
    outcome(
        errors == 0 && worst_front <= 1e-8 && worst_back <= 1e-8 && !runs.broadcast.is_empty() && !runs.merge.is_empty(),
        format!(
            "{} broadcast + {} merge kernels, front {worst_front:.2e}, back {worst_back:.2e}, errors {errors}",
            runs.broadcast.len(),
            runs.merge.len()
        ),
    )
}

fn example_matrix() -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_fn(8, 8, |i, j| EXAMPLE_P[i][j])
}

fn row_support(i: usize) -> Vec<u32> {
    (0..8).filter(|&j| EXAMPLE_P[i][j] > 0.0).map(|j| j as u32).collect()
}

/// One-tail graph whose projected support is the example zero pattern:
/// pivot `i` reaches every receiver multiset of size `k - 1` drawn from the
/// nonzero columns of row `i`.
fn example_pattern_graph(k: usize) -> DirectedHypergraph {
    let mut edges = Vec::new();
    for i in 0..8 {
        let cols = row_support(i);
        for g in common::multisets(cols.len() as u32, k - 1) {
            edges.push(Hyperedge {
                tail: vec![i as u32],
                head: g.iter().map(|&x| cols[x as usize]).collect(),
            });
        }
    }
    DirectedHypergraph::new(8, edges, Some(Orientation::OneTail), true).unwrap()
}

fn same_pattern(a: &nalgebra::DMatrix<f64>, b: &nalgebra::DMatrix<f64>) -> bool {
    a.iter().zip(b.iter()).all(|(x, y)| (*x > 0.0) == (*y > 0.0))
}

fn criterion_5() -> Outcome {
    let example = example_matrix();
    let example_res = stationarity_residual(&example, &BROADCAST_P);
    let layers = example_pattern_graph(3).adjacency_layers(DegreeMode::Global);
    let kernel = match infer_broadcast(&layers, &BROADCAST_P, &[(3, 1.0)].into(), &BroadcastOptions::default()) {
        Ok(k) => k,
        Err(e) => return outcome(false, format!("inference failed: {e}")),
    };
    let proj = projected_kernel(&kernel);
    let rows = proj.row_residual();
    let stat = stationarity_residual(proj.matrix(), &BROADCAST_P);
    let pattern = same_pattern(proj.matrix(), &example);
    outcome(
        example_res <= 5e-3 && rows <= 1e-8 && stat <= 1e-8 && pattern,
        format!(
            "example P residual {example_res:.2e}; inferred P: rows {rows:.2e}, stationarity {stat:.2e}, zero pattern {}",
            if pattern { "matches" } else { "differs" }
        ),
    )
}

fn merge_p() -> Vec<f64> {
    let s: f64 = MERGE_P.iter().sum();
    MERGE_P.iter().map(|x| x / s).collect()
}

/// One-head graph on every tail multiset `{a, b}`; receivers 1..3 follow the
/// example zeros, the remaining receivers are all present.
fn example_merge_graph() -> DirectedHypergraph {
    let mut edges = Vec::new();
    for g in common::multisets(8, 2) {
        for j in 0..8u32 {
            let present = (j as usize) >= 3 || EXAMPLE_M[j as usize][g[0] as usize][g[1] as usize] > 0.0;
            if present {
                edges.push(Hyperedge {
                    tail: g.clone(),
                    head: vec![j],
                });
            }
        }
    }
    DirectedHypergraph::new(8, edges, Some(Orientation::OneHead), true).unwrap()
}

fn criterion_6() -> Outcome {
    let symmetric = EXAMPLE_M
        .iter()
        .all(|s| (0..8).all(|a| (0..8).all(|b| s[a][b] == s[b][a])));
    let layers = example_merge_graph().adjacency_layers(DegreeMode::Global);
    let kernel = match infer_merge(&layers, &merge_p(), &[(3, 1.0)].into(), &MergeOptions::default()) {
        Ok(k) => k,
        Err(e) => return outcome(false, format!("inference failed: {e}")),
    };
    let dense = kernel.layers[&3].to_dense();
    let mut asym: f64 = 0.0;
    for a in 0..8 {
        for b in 0..8 {
            for j in 0..8 {
                asym = asym.max((dense.get(&[a, b, j]) - dense.get(&[b, a, j])).abs());
            }
        }
    }
    let (z, stat) = merge::kernel_residuals(&kernel).unwrap();
    outcome(
        symmetric && asym == 0.0 && z <= 1e-8 && stat <= 1e-8,
        format!(
            "example slices symmetric: {symmetric}; inferred: {} contexts, asymmetry {asym:.1e}, output residual {z:.2e}, stationarity {stat:.2e}",
            kernel.layers[&3].contexts().len()
        ),
    )
}

fn criterion_7(runs: &Runs) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for s in &runs.broadcast {
        let h = &s.kernel.report.residual_history;
        for t in 0..h.len().saturating_sub(10) {
            if h[t] <= 1e-2 && h[t] > 0.0 {
                worst = worst.max(h[t + 10] / h[t]);
                checked += 1;
            }
        }
    }
    outcome(
        worst <= 0.9 && checked > 0,
        format!("{checked} windows over {} runs, worst r(t+10)/r(t) {worst:.3}", runs.broadcast.len()),
    )
}

fn near_uniform_instance(rng: &mut ChaCha8Rng, n: usize) -> (AdjacencyLayers, Vec<f64>) {
    let mut t = SymSparseTensor::new(3, n, Orientation::OneHead.symmetry());
    for g in common::multisets(n as u32, 2) {
        let vals: Vec<f64> = (0..n).map(|_| rng.gen_range(0.8..1.25)).collect();
        let total: f64 = vals.iter().sum();
        for (j, v) in vals.into_iter().enumerate() {
            t.insert(hypermerw::tensor::CanonicalKey::new(j as u32, g.clone()), v / total)
                .unwrap();
        }
    }
    let layers = AdjacencyLayers::from_layers(Orientation::OneHead, n, [(3, t)].into()).unwrap();
    (layers, common::random_p(rng, n))
}

fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|x| x / s).collect()
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8000);
    let opts = MergeOptions {
        tolerance: 1e-13,
        ..Default::default()
    };
    let mut kernels = 0;
    let mut draws = 0;
    let mut worst_final: f64 = 0.0;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_c: f64 = 0.0;
    let mut problems = Vec::new();
    while kernels < 20 && draws < 200 {
        draws += 1;
        let n = 3 + draws % 4;
        let (layers, p) = near_uniform_instance(&mut rng, n);
        let kernel = match infer_merge(&layers, &p, &[(3, 1.0)].into(), &opts) {
            Ok(k) => k,
            Err(e) => {
                problems.push(format!("draw {draws}: {e}"));
                continue;
            }
        };
        let c = contraction_constant(&kernel);
        if c >= 1.0 {
            continue;
        }
        kernels += 1;
        worst_c = worst_c.max(c);
        for _ in 0..10 {
            let mut x = random_simplex(&mut rng, n);
            let mut err = l1_distance(&x, &kernel.stationary);
            for _ in 0..2000 {
                if err < 1e-12 {
                    break;
                }
                x = merge_step(&kernel, &x, false).unwrap().next;
                let next_err = l1_distance(&x, &kernel.stationary);
                worst_excess = worst_excess.max(next_err - (c * err + 1e-12));
                err = next_err;
            }
            worst_final = worst_final.max(err);
        }
    }
    outcome(
        kernels == 20 && worst_final <= 1e-10 && worst_excess <= 0.0 && problems.is_empty(),
        format!(
            "{kernels} kernels ({draws} draws), max contraction constant {worst_c:.3}, final L1 {worst_final:.2e}, \
             worst err(t+1) - c err(t) - 1e-12 = {worst_excess:.2e}, errors {problems:?}"
        ),
    )
}

fn delta_start(n: usize) -> Vec<f64> {
    let mut p0 = vec![0.0; n];
    p0[0] = 1.0;
    p0
}

fn criterion_9(runs: &mut Runs) -> Outcome {
    let p = BROADCAST_P.to_vec();
    let solve = |k: usize| -> hypermerw::Result<ProjectedKernel> {
        let layers = example_pattern_graph(k).adjacency_layers(DegreeMode::Global);
        Ok(projected_kernel(&infer_broadcast(&layers, &p, &[(k, 1.0)].into(), &BroadcastOptions::default())?))
    };
    let (p2, p3) = match (solve(2), solve(3)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return outcome(false, format!("inference failed: {e}")),
    };
    let dir = artifact_dir();
    let mut pass = true;
    let mut parts = Vec::new();
    for lam2 in [1.0, 0.75, 0.5, 0.25, 0.0] {
        let mix = ProjectedKernel::mixture(&[(lam2, &p2), (1.0 - lam2, &p3)]).unwrap();
        if !is_primitive(mix.matrix()) {
            parts.push(format!("lambda2={lam2}: not primitive"));
            pass = false;
            continue;
        }
        let gap = spectral_gap(mix.matrix()).gap;
        let horizon = (10.0 / gap).ceil() as usize;
        let curve = mixing_curve(&Stepper::Projected(&mix), &delta_start(8), &p, horizon.max(200)).unwrap();
        let monotone = curve.samples.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-15);
        let at_horizon = curve
            .samples
            .iter()
            .find(|(t, _)| *t == horizon)
            .map(|s| s.1)
            .unwrap_or(f64::NAN);
        let hit = curve.samples.iter().find(|(_, e)| *e < 1e-8).map(|s| s.0);
        let csv = curve.to_csv();
        std::fs::write(dir.join(format!("mixing_lambda2_{lam2:.2}.csv")), &csv).unwrap();
        runs.curves.insert(format!("{lam2:.2}"), csv);
        let ok = monotone && at_horizon < 1e-8;
        pass &= ok;
        parts.push(format!(
            "lambda2={lam2}: gap {gap:.4}, 10/gap={horizon}, err there {at_horizon:.2e}, below 1e-8 at t={}, monotone {monotone}",
            hit.map_or("never".to_string(), |t| t.to_string())
        ));
    }
    outcome(pass, parts.join("; "))
}

fn ml100k_path() -> PathBuf {
    match std::env::var_os("HYPERMERW_ML100K") {
        Some(p) => PathBuf::from(p),
        None => PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/ml-100k/u.data"),
    }
}

fn movielens_csv() -> Result<(String, hypermerw::movielens::EvalReport), String> {
    let path = ml100k_path();
    let ratings = load_ratings(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let corpus = build_events(&ratings, 500, 0.8).map_err(|e| e.to_string())?;
    let kernel = fit_merw(&corpus, &FitOptions::default()).map_err(|e| e.to_string())?;
    let merw = MerwRanker::new(&kernel);
    let lazy = LazyRwRanker::new(&corpus, SuccessorWeighting::Counts);
    let pop = PopularityRanker::new(&corpus);
    let rankers: [&dyn Ranker; 3] = [&merw, &lazy, &pop];
    let report =
        evaluate(&corpus, &context_counts(&corpus), &rankers, &[10, 20, 30, 40, 100]).map_err(|e| e.to_string())?;
    Ok((report.to_csv(), report))
}

fn criterion_10(runs: &mut Runs) -> Outcome {
    let start = Instant::now();
    let (csv, report) = match movielens_csv() {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("could not run: {e}")),
    };
    let elapsed = start.elapsed();
    std::fs::write(artifact_dir().join("movielens_eval.csv"), &csv).unwrap();
    runs.eval_csv = Some(csv);
    let mut pass = elapsed < Duration::from_secs(300);
    let mut parts = Vec::new();
    for l in [10, 100] {
        let h = |m: &str| report.hit_rate(m, Subset::SeenEdge, l).unwrap_or(f64::NAN);
        let (m, z, p) = (h("MERW"), h("Lazy RW"), h("Popularity"));
        pass &= m >= z && z >= p;
        parts.push(format!("H@{l}: MERW {m:.4}, Lazy RW {z:.4}, Popularity {p:.4}"));
    }
    outcome(
        pass,
        format!("{} seen-edge events; {}; {elapsed:.1?}", report.n_seen_edge, parts.join("; ")),
    )
}

fn criterion_11(runs: &Runs) -> Outcome {
    let mut mismatches = Vec::new();
    let mut compared = 0;

    for (i, s) in runs.broadcast.iter().enumerate() {
        let again = infer_broadcast(&s.adjacency, &s.p, &s.kernel.weights, &broadcast_opts()).unwrap();
        compared += 1;
        if again.to_json(None) != s.kernel.to_json(None) {
            mismatches.push(format!("broadcast {i}"));
        }
    }
    for (i, s) in runs.merge.iter().enumerate() {
        let again = infer_merge(&s.adjacency, &s.p, &s.kernel.weights, &merge_opts()).unwrap();
        compared += 1;
        if again.to_json(None) != s.kernel.to_json(None) {
            mismatches.push(format!("merge {i}"));
        }
    }
    let mut rerun = Runs {
        broadcast: Vec::new(),
        merge: Vec::new(),
        curves: BTreeMap::new(),
        eval_csv: None,
    };
    criterion_9(&mut rerun);
    for (lam, csv) in &runs.curves {
        compared += 1;
        if rerun.curves.get(lam) != Some(csv) {
            mismatches.push(format!("mixing curve lambda2={lam}"));
        }
    }
    if let Some(csv) = &runs.eval_csv {
        compared += 1;
        match movielens_csv() {
            Ok((again, _)) if &again == csv => {}
            _ => mismatches.push("movielens report".into()),
        }
    }
    outcome(
        mismatches.is_empty() && compared > 0,
        format!("{compared} artifacts regenerated, mismatches {mismatches:?}"),
    )
}

fn main() {
    let mut runs = Runs {
        broadcast: Vec::new(),
        merge: Vec::new(),
        curves: BTreeMap::new(),
        eval_csv: None,
    };
    let results = [
        ("broadcast constraint satisfaction", criterion_1(&mut runs)),
        ("merge constraint satisfaction", criterion_2(&mut runs)),
        ("dense oracle equivalence", criterion_3()),
        ("factorization certificates", criterion_4(&runs)),
        ("8-node broadcasting example", criterion_5()),
        ("8-node merging example", criterion_6()),
        ("linear convergence", criterion_7(&runs)),
        ("contraction and ergodicity", criterion_8()),
        ("mixing-curve envelope", criterion_9(&mut runs)),
        ("MovieLens method ordering", criterion_10(&mut runs)),
        ("determinism", criterion_11(&runs)),
    ];
    let mut failed = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        println!("{} criterion {:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
