use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use hypermerw::analysis::{is_primitive, mixing_curve, projected_kernel, spectral_gap, ProjectedKernel, Stepper};
use hypermerw::broadcast::{self, BroadcastOptions};
use hypermerw::hypergraph::{AdjacencyLayers, DegreeMode, Diagnostic, DirectedHypergraph, Orientation};
use hypermerw::merge::{self, contraction_constant, dobrushin_delta_with, DeltaMode, MergeOptions, StationarityTarget};
use hypermerw::movielens::{
    build_events, context_counts, evaluate, fit_merw, load_ratings, FitOptions, LazyRwRanker, MerwRanker,
    PopularityRanker, Ranker, ReferenceKind, SuccessorWeighting,
};
use hypermerw::{linf_distance, Weights};
use serde_json::{json, Value};

use crate::inputs::{self, Kernel};
use crate::{Degree, Delta, Ergodicity, EvalNextitem, Failure, InferBroadcast, InferMerge, Reference, Simulate, Solver, ValidateGraph};

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => inputs::write_text(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_graph(path: &Path) -> Result<DirectedHypergraph, Failure> {
    let text = inputs::read_text(path)?;
    DirectedHypergraph::from_json(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn check_solver(s: &Solver) -> Result<(), Failure> {
    if !(s.eps > 0.0 && s.eps < 1.0) {
        return Err(Failure::Usage(format!("eps must lie in (0, 1), got {}", s.eps)));
    }
    if s.max_iter == 0 {
        return Err(Failure::Usage("max-iter must be positive".into()));
    }
    Ok(())
}

struct Prepared {
    layers: AdjacencyLayers,
    p: Vec<f64>,
    weights: Weights,
}

fn prepare(s: &Solver, orientation: Orientation) -> Result<Prepared, Failure> {
    check_solver(s)?;
    let graph = load_graph(&s.graph)?;
    if graph.orientation() != orientation {
        let wanted = match orientation {
            Orientation::OneTail => "one-tail (broadcasting)",
            Orientation::OneHead => "one-head (merging)",
        };
        return Err(Failure::Usage(format!("{} is not a {wanted} hypergraph", s.graph.display())));
    }
    let mode = match s.degree_mode {
        Degree::Global => DegreeMode::Global,
        Degree::PerLayer => DegreeMode::PerLayer,
    };
    let layers = graph.adjacency_layers(mode);
    let sizes: Vec<usize> = layers.sizes().collect();
    let weights = inputs::layer_weights(&s.lambda, &sizes)?;
    let p = inputs::distribution(&s.p, graph.n(), "p")?;
    Ok(Prepared { layers, p, weights })
}

fn summary(what: &str, report: &broadcast::SolveReport) {
    eprintln!(
        "{what}: {} after {} iterations, residual {:.3e} (stochasticity {:.3e}, stationarity {:.3e})",
        if report.converged { "converged" } else { "stopped" },
        report.iterations,
        report.residual,
        report.stochasticity_residual,
        report.stationarity_residual
    );
}

pub fn infer_broadcast(a: &InferBroadcast, config: &Value) -> Result<(), Failure> {
    let prep = prepare(&a.solver, Orientation::OneTail)?;
    let source = match &a.source {
        Some(spec) => Some(inputs::distribution(spec, prep.p.len(), "source")?),
        None => None,
    };
    let opts = BroadcastOptions {
        tolerance: a.solver.eps,
        max_iter: a.solver.max_iter,
        source,
        ..Default::default()
    };
    let kernel = broadcast::infer_broadcast(&prep.layers, &prep.p, &prep.weights, &opts)?;
    summary("broadcast", &kernel.report);
    emit(&a.solver.out, &(kernel.to_json(Some(config)) + "\n"))
}

pub fn infer_merge(a: &InferMerge, config: &Value) -> Result<(), Failure> {
    let prep = prepare(&a.solver, Orientation::OneHead)?;
    let opts = MergeOptions {
        tolerance: a.solver.eps,
        max_iter: a.solver.max_iter,
        target: match a.target {
            crate::Target::Exact => StationarityTarget::Exact,
            crate::Target::MassAdjusted => StationarityTarget::MassAdjusted,
        },
        best_effort: a.best_effort,
        ..Default::default()
    };
    let kernel = merge::infer_merge(&prep.layers, &prep.p, &prep.weights, &opts)?;
    summary("merge", &kernel.report);
    emit(&a.solver.out, &(kernel.to_json(Some(config)) + "\n"))
}

fn comment_header(config: &Value) -> String {
    format!("# config: {}\n", serde_json::to_string(config).expect("config serializes"))
}

fn kernel_comment(out: &mut String, index: usize, path: &Path, kernel: &Kernel) -> Result<(), Failure> {
    let (kind, report) = match kernel {
        Kernel::Broadcast(k) => ("broadcast", &k.report),
        Kernel::Merge(k) => ("merge", &k.report),
    };
    let (stoch, stat) = match kernel {
        Kernel::Broadcast(k) => broadcast::kernel_residuals(k),
        Kernel::Merge(k) => merge::kernel_residuals(k)?,
    };
    writeln!(
        out,
        "# kernel {}: {} ({kind}), solver residual {:.3e}, stochasticity {stoch:.3e}, stationarity {stat:.3e}",
        index + 1,
        path.display(),
        report.residual
    )
    .unwrap();
    Ok(())
}

fn mixture_weights(specs: &[String], count: usize) -> Result<Vec<Vec<f64>>, Failure> {
    if specs.is_empty() {
        return Ok(vec![vec![1.0 / count as f64; count]]);
    }
    specs
        .iter()
        .map(|s| {
            let w = inputs::number_list(s, "weights")?;
            if w.len() != count {
                return Err(Failure::Usage(format!("weights {s:?}: need {count} values, one per kernel")));
            }
            if w.iter().any(|x| !(*x >= 0.0 && x.is_finite())) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Failure::Usage(format!("weights {s:?} must be nonnegative and sum to 1")));
            }
            Ok(w)
        })
        .collect()
}

fn label(w: &[f64]) -> String {
    w.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

pub fn simulate(a: &Simulate, seed: u64, config: &Value) -> Result<(), Failure> {
    let kernels: Vec<Kernel> = a.kernel.iter().map(|p| inputs::kernel(p)).collect::<Result<_, _>>()?;
    let n = kernels[0].n();
    if kernels.iter().any(|k| k.n() != n) {
        return Err(Failure::Usage("kernels have different node counts".into()));
    }
    let p = kernels[0].stationary().to_vec();
    let p0 = inputs::start_distribution(&a.p0, n, seed)?;
    let mut out = comment_header(config);
    for (i, (k, path)) in kernels.iter().zip(&a.kernel).enumerate() {
        kernel_comment(&mut out, i, path, k)?;
    }

    if let [Kernel::Merge(kernel)] = kernels.as_slice() {
        if !a.weights.is_empty() {
            return Err(Failure::Usage("weights apply to broadcasting kernel mixtures only".into()));
        }
        let stepper = Stepper::Merge {
            kernel,
            renormalize: a.renormalize,
        };
        let curve = mixing_curve(&stepper, &p0, &p, a.steps)?;
        if curve.max_leak > 1e-12 {
            let msg = format!(
                "largest per-step mass leak {:.6e}{}",
                curve.max_leak,
                if a.renormalize { " (renormalized)" } else { "" }
            );
            eprintln!("warning: {msg}");
            writeln!(out, "# {msg}").unwrap();
        }
        out.push_str(&curve.to_csv());
        return emit(&a.out, &out);
    }

    let mut projected = Vec::new();
    for k in &kernels {
        match k {
            Kernel::Broadcast(b) => {
                if linf_distance(&b.stationary, &p) > 1e-9 {
                    return Err(Failure::Usage("kernels prescribe different stationary distributions".into()));
                }
                projected.push(projected_kernel(b));
            }
            Kernel::Merge(_) => {
                return Err(Failure::Usage("merge kernels cannot be mixed; simulate one at a time".into()))
            }
        }
    }
    if a.renormalize {
        eprintln!("warning: --renormalize only affects merge kernels");
    }
    let grid = mixture_weights(&a.weights, projected.len())?;
    let single = grid.len() == 1 && projected.len() == 1;
    let mut rows = String::new();
    for w in &grid {
        let parts: Vec<(f64, &ProjectedKernel)> = w.iter().copied().zip(&projected).collect();
        let mix = ProjectedKernel::mixture(&parts)?;
        let gap = spectral_gap(mix.matrix());
        let primitive = is_primitive(mix.matrix());
        let line = format!(
            "weights {}: primitive {primitive}, spectral gap {:.10}{}",
            label(w),
            gap.gap,
            if gap.converged { "" } else { " (not converged)" }
        );
        eprintln!("{line}");
        writeln!(out, "# {line}").unwrap();
        let curve = mixing_curve(&Stepper::Projected(&mix), &p0, &p, a.steps)?;
        if single {
            rows.push_str(&curve.to_csv());
        } else {
            if rows.is_empty() {
                rows.push_str("weights,t,l1_error\n");
            }
            for (t, e) in &curve.samples {
                writeln!(rows, "{},{t},{e:.16e}", label(w)).unwrap();
            }
        }
    }
    out.push_str(&rows);
    emit(&a.out, &out)
}

pub fn ergodicity(a: &Ergodicity, config: &Value) -> Result<(), Failure> {
    let doc = match inputs::kernel(&a.kernel)? {
        Kernel::Broadcast(k) => {
            let proj = projected_kernel(&k);
            let gap = spectral_gap(proj.matrix());
            let (rows, stat) = broadcast::kernel_residuals(&k);
            json!({
                "kind": "broadcast",
                "primitive": is_primitive(proj.matrix()),
                "spectral_gap": gap.gap,
                "subdominant_modulus": gap.modulus,
                "gap_converged": gap.converged,
                "row_residual": rows,
                "stationarity_residual": stat,
                "config": config,
            })
        }
        Kernel::Merge(k) => {
            let mode = match a.delta {
                Delta::Auto => DeltaMode::Auto,
                Delta::Exact => DeltaMode::Exact,
                Delta::Bound => DeltaMode::Bound,
            };
            let layers: Vec<Value> = k
                .layers
                .iter()
                .map(|(order, t)| {
                    json!({
                        "k": order,
                        "weight": k.weights.get(order).copied().unwrap_or(0.0),
                        "delta": dobrushin_delta_with(t, mode),
                    })
                })
                .collect();
            // with the bound mode the constant is recomputed from the bounds
            let c = match mode {
                DeltaMode::Auto => contraction_constant(&k),
                _ => k
                    .layers
                    .iter()
                    .map(|(order, t)| {
                        k.weights.get(order).copied().unwrap_or(0.0) * (order - 1) as f64 * dobrushin_delta_with(t, mode)
                    })
                    .sum(),
            };
            let (z, stat) = merge::kernel_residuals(&k)?;
            json!({
                "kind": "merge",
                "layers": layers,
                "contraction_constant": c,
                "certified_ergodic": c < 1.0,
                "context_residual": z,
                "stationarity_residual": stat,
                "config": config,
            })
        }
    };
    let text = serde_json::to_string_pretty(&doc).expect("report serializes") + "\n";
    emit(&a.out, &text)
}

pub fn eval_nextitem(a: &EvalNextitem, config: &Value) -> Result<(), Failure> {
    if !(a.split > 0.0 && a.split < 1.0) {
        return Err(Failure::Usage(format!("split must lie in (0, 1), got {}", a.split)));
    }
    if a.topn == 0 {
        return Err(Failure::Usage("topn must be positive".into()));
    }
    if !(a.eps > 0.0 && a.eps < 1.0) || a.max_iter == 0 {
        return Err(Failure::Usage("eps must lie in (0, 1) and max-iter be positive".into()));
    }
    let limits: Vec<usize> = a
        .limits
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .ok()
                .filter(|&l| l > 0)
                .ok_or_else(|| Failure::Usage(format!("Ls: bad list length {s:?}")))
        })
        .collect::<Result<_, _>>()?;
    let ratings = load_ratings(&a.ratings).map_err(|e| match e {
        hypermerw::Error::Io(io) => Failure::Io(format!("{}: {io}", a.ratings.display())),
        other => Failure::Usage(format!("{}: {other}", a.ratings.display())),
    })?;
    let corpus = build_events(&ratings, a.topn, a.split)?;
    let opts = FitOptions {
        tolerance: a.eps,
        max_iter: a.max_iter,
        reference: match a.reference {
            Reference::Counts => ReferenceKind::Counts,
            Reference::Uniform => ReferenceKind::Uniform,
        },
        stationary: None,
    };
    let kernel = fit_merw(&corpus, &opts)?;
    summary("merw fit", &kernel.report);
    let merw = MerwRanker::new(&kernel);
    let lazy = LazyRwRanker::new(
        &corpus,
        match a.lazy {
            Reference::Counts => SuccessorWeighting::Counts,
            Reference::Uniform => SuccessorWeighting::Uniform,
        },
    );
    let popularity = PopularityRanker::new(&corpus);
    let rankers: [&dyn Ranker; 3] = [&merw, &lazy, &popularity];
    let report = evaluate(&corpus, &context_counts(&corpus), &rankers, &limits)?;
    print!("{}", report.to_table());
    if let Some(path) = &a.out {
        let mut text = comment_header(config);
        writeln!(
            text,
            "# items {}, train events {}, test events {}, fit {} after {} iterations, residual {:.3e}",
            corpus.n(),
            corpus.train().count(),
            corpus.test().count(),
            if kernel.report.converged { "converged" } else { "stopped" },
            kernel.report.iterations,
            kernel.report.residual
        )
        .unwrap();
        text.push_str(&report.to_csv());
        inputs::write_text(path, &text)?;
    }
    Ok(())
}

pub fn validate_graph(a: &ValidateGraph) -> Result<(), Failure> {
    let graph = load_graph(&a.graph)?;
    let mut sizes: Vec<usize> = graph.edges().iter().map(|e| e.size()).collect();
    sizes.sort_unstable();
    sizes.dedup();
    println!(
        "{} nodes, {} hyperedges, {}, edge sizes {:?}{}",
        graph.n(),
        graph.edges().len(),
        match graph.orientation() {
            Orientation::OneTail => "one-tail",
            Orientation::OneHead => "one-head",
        },
        sizes,
        if graph.is_relaxed() { ", relaxed" } else { "" }
    );
    let diagnostics = graph.validate();
    for d in &diagnostics {
        println!("{d}");
    }
    let blocking = diagnostics
        .iter()
        .filter(|d| !matches!(d, Diagnostic::NotStronglyConnected { .. }))
        .count();
    if blocking > 0 {
        return Err(Failure::Infeasible(format!(
            "{blocking} structural problem(s) rule out a strictly positive stationary distribution"
        )));
    }
    if diagnostics.is_empty() {
        println!("ok");
    }
    Ok(())
}
