//! Maximum-entropy broadcasting kernels.
//!
//! A broadcasting kernel is a family of front-symmetric tensors `B^(k)`, one
//! per edge size, mixed with weights `lambda_k`. Entry `B^(k)[i, j2..jk]` is the
//! probability that pivot `i` activates the receiver group `{j2..jk}` given
//! that a size-`k` interaction fires. Two constraints define admissibility:
//!
//! * every supported pivot row of the mixture sums to one;
//! * the projected node chain `P = sum_k lambda_k B^(k) x_{3..k} 1` keeps
//!   the prescribed `p` stationary.
//!
//! [`infer_broadcast`] returns the admissible kernel closest in relative
//! entropy to the reference `A`, measured on the joint law
//! `J^(k) = lambda_k p_i B^(k)` against `K^(k) = lambda_k p_i A^(k)`. The
//! optimum factors as `B^(k) = A^(k) * u_i * prod_r v^(k)_r` with
//! `v^(k) = w^(1/(k-1))` for a single receiver potential `w`, and the solver
//! finds `u` and `w` by alternating exact coordinate updates on the dual.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Infeasibility, InfeasibilityReason, Result};
use crate::hypergraph::{AdjacencyLayers, Orientation};
use crate::tensor::{for_each_distinct, multiplicity, orderings, CanonicalKey, SymSparseTensor, Symmetry};
use crate::util::{check_weights, linf_distance, positive_distribution, spread, weight, Weights};

/// Solver settings for [`infer_broadcast`].
#[derive(Clone, Debug, PartialEq)]
pub struct BroadcastOptions {
    /// Target for `max(|phi - 1|_inf, |eta - p|_inf)`.
    pub tolerance: f64,
    pub max_iter: usize,
    /// Declare infeasibility when the iteration cap is hit and the potentials
    /// span more than this ratio.
    pub divergence_ratio: f64,
    /// One-step transport source `q`: rows are weighted by `q` and the chain
    /// must push `q` to `p`. `None` means `q = p` (stationarity).
    pub source: Option<Vec<f64>>,
    /// Starting potentials `(u, w)`; all ones when `None`.
    pub initial: Option<(Vec<f64>, Vec<f64>)>,
}

impl Default for BroadcastOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iter: 100_000,
            divergence_ratio: 1e12,
            source: None,
            initial: None,
        }
    }
}

/// Convergence record shared by both solvers.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub converged: bool,
    /// Joint residual after the last sweep.
    pub residual: f64,
    /// Row (broadcast) or context (merge) stochasticity residual.
    pub stochasticity_residual: f64,
    pub stationarity_residual: f64,
    /// Joint residual after every sweep, starting with the initial point.
    pub residual_history: Vec<f64>,
    /// Dual objective after every sweep, starting with the initial point.
    pub dual_history: Vec<f64>,
    /// Sum of the prescribed distribution before it was rescaled to one.
    pub input_mass: f64,
    pub tolerance: f64,
    pub max_iter: usize,
    /// Merge only: total mass the supported contexts can carry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covered_mass: Option<f64>,
}

/// Scaling potentials of a broadcasting kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BroadcastPotentials {
    /// Pivot potentials.
    pub u: Vec<f64>,
    /// Receiver potentials per layer, `v^(k) = w^(1/(k-1))`.
    pub v: BTreeMap<usize, Vec<f64>>,
}

/// Inferred broadcasting kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct BroadcastKernel {
    pub n: usize,
    /// Conditional tensors `B^(k)` of the layers with positive weight.
    pub layers: BTreeMap<usize, SymSparseTensor>,
    pub weights: Weights,
    pub stationary: Vec<f64>,
    /// Transport source when it differs from `stationary`.
    pub source: Option<Vec<f64>>,
    pub potentials: BroadcastPotentials,
    pub report: SolveReport,
}

/// `K^(k) = lambda_k * q_pivot * A^(k)`, same support as `A^(k)` (empty when
/// `lambda_k = 0`).
pub fn pivot_weighted_reference(
    a: &AdjacencyLayers,
    q: &[f64],
    weights: &Weights,
) -> Result<BTreeMap<usize, SymSparseTensor>> {
    if a.orientation() != Orientation::OneTail {
        return Err(Error::InvalidInput("broadcasting needs a one-tail hypergraph".into()));
    }
    if q.len() != a.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            found: q.len(),
        });
    }
    if let Some(j) = q.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::InvalidInput(format!("pivot weight of node {} is {}", j + 1, q[j])));
    }
    Ok(a.layers()
        .iter()
        .map(|(&k, t)| {
            let lam = weight(weights, k);
            (k, t.map_values(|key, v| lam * q[key.distinguished() as usize] * v))
        })
        .collect())
}

/// Marginals of the scaled joint law `J^(k) = scale_front(K^(k), u, v^(k))`.
///
/// `phi[i]` is the mixture row mass at pivot `i` divided by the pivot weight
/// `q[i]` (so the row constraint reads `phi = 1`); `eta[j]` is the total
/// joint mass with `j` in the first receiver slot (constraint `eta = p`).
pub fn mixture_marginals(
    reference: &BTreeMap<usize, SymSparseTensor>,
    q: &[f64],
    u: &[f64],
    v: &BTreeMap<usize, Vec<f64>>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = q.len();
    for x in u.iter().chain(v.values().flatten()) {
        if !(*x > 0.0 && x.is_finite()) {
            return Err(Error::InvalidInput(format!("scaling potentials must be positive, got {x}")));
        }
    }
    let mut phi = vec![0.0; n];
    let mut eta = vec![0.0; n];
    for (k, t) in reference {
        let vk = v.get(k).ok_or_else(|| Error::InvalidInput(format!("no receiver potential for k={k}")))?;
        let scaled = t.scale_front(u, vk);
        for (i, m) in scaled.row_mass().into_iter().enumerate() {
            phi[i] += m / q[i];
        }
        let marg = scaled.receiver_marginal_matrix();
        for j in 0..n {
            eta[j] += marg.column(j).sum();
        }
    }
    Ok((phi, eta))
}

struct Entry {
    pivot: usize,
    log_ref: f64,
    ord: f64,
    /// `(node, multiplicity / (k - 1))` for each distinct receiver.
    receivers: Vec<(usize, f64)>,
}

struct Incidence {
    entry: usize,
    /// Orderings of the group with this node pinned to the first receiver slot.
    weight: f64,
    exponent: f64,
}

/// Runs the scaling iteration and returns the KL-closest admissible kernel.
///
/// `p` must be strictly positive; it is rescaled to sum to one (the original
/// sum is kept in the report). Layers with zero or missing weight are
/// ignored.
pub fn infer_broadcast(
    a: &AdjacencyLayers,
    p: &[f64],
    weights: &Weights,
    opts: &BroadcastOptions,
) -> Result<BroadcastKernel> {
    let n = a.n();
    let (p, input_mass) = positive_distribution(p, n, "stationary distribution")?;
    let q = match &opts.source {
        Some(q) => positive_distribution(q, n, "transport source")?.0,
        None => p.clone(),
    };
    check_weights(weights, a.sizes())?;
    let reference = pivot_weighted_reference(a, &q, weights)?;

    let mut entries = Vec::new();
    for (&k, t) in &reference {
        if weight(weights, k) == 0.0 {
            continue;
        }
        let inv = 1.0 / (k - 1) as f64;
        for (key, val) in t.iter() {
            let g = key.group();
            let mut receivers = Vec::new();
            for_each_distinct(g, |r| {
                receivers.push((r as usize, multiplicity(g, r) as f64 * inv));
            });
            entries.push(Entry {
                pivot: key.distinguished() as usize,
                log_ref: val.ln(),
                ord: orderings(g),
                receivers,
            });
        }
    }

    let mut sends = vec![false; n];
    let mut incidence: Vec<Vec<Incidence>> = (0..n).map(|_| Vec::new()).collect();
    let mut by_pivot: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (e, entry) in entries.iter().enumerate() {
        sends[entry.pivot] = true;
        by_pivot[entry.pivot].push(e);
        for &(r, alpha) in &entry.receivers {
            incidence[r].push(Incidence {
                entry: e,
                weight: entry.ord * alpha,
                exponent: alpha,
            });
        }
    }
    let silent: Vec<usize> = (0..n).filter(|&j| !sends[j]).collect();
    if !silent.is_empty() {
        return Err(Error::Infeasible(Infeasibility {
            reason: InfeasibilityReason::NoOutgoingSupport,
            nodes: silent,
            residual: None,
        }));
    }
    let deaf: Vec<usize> = (0..n).filter(|&j| incidence[j].is_empty()).collect();
    if !deaf.is_empty() {
        return Err(Error::Infeasible(Infeasibility {
            reason: InfeasibilityReason::NeverReceives,
            nodes: deaf,
            residual: None,
        }));
    }

    let (mut log_u, mut log_w) = match &opts.initial {
        Some((u, w)) => {
            if u.len() != n || w.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: u.len().min(w.len()),
                });
            }
            if u.iter().chain(w).any(|x| !(*x > 0.0 && x.is_finite())) {
                return Err(Error::InvalidInput("initial potentials must be positive".into()));
            }
            (u.iter().map(|x| x.ln()).collect(), w.iter().map(|x| x.ln()).collect())
        }
        None => (vec![0.0; n], vec![0.0; n]),
    };

    let ref_mass: f64 = entries.iter().map(|e| e.ord * e.log_ref.exp()).sum();
    let mut log_j = vec![0.0; entries.len()];
    let refresh = |log_j: &mut Vec<f64>, log_u: &[f64], log_w: &[f64]| {
        for (lj, e) in log_j.iter_mut().zip(&entries) {
            *lj = e.log_ref + log_u[e.pivot] + e.receivers.iter().map(|&(r, a)| a * log_w[r]).sum::<f64>();
        }
    };
    let marginals = |log_j: &[f64]| -> (Vec<f64>, Vec<f64>, f64) {
        let mut rows = vec![0.0; n];
        let mut cols = vec![0.0; n];
        let mut total = 0.0;
        for (e, entry) in entries.iter().enumerate() {
            let val = log_j[e].exp();
            rows[entry.pivot] += entry.ord * val;
            total += entry.ord * val;
        }
        for (j, inc) in incidence.iter().enumerate() {
            cols[j] = inc.iter().map(|i| i.weight * log_j[i.entry].exp()).sum();
        }
        (rows, cols, total)
    };
    let dual = |log_u: &[f64], log_w: &[f64], total: f64| -> f64 {
        (0..n).map(|j| q[j] * log_u[j] + p[j] * log_w[j]).sum::<f64>() - total + ref_mass
    };
    let residuals = |rows: &[f64], cols: &[f64]| -> (f64, f64) {
        let row_res = (0..n).map(|i| (rows[i] / q[i] - 1.0).abs()).fold(0.0, f64::max);
        (row_res, linf_distance(cols, &p))
    };

    refresh(&mut log_j, &log_u, &log_w);
    let (rows, cols, total) = marginals(&log_j);
    let (mut row_res, mut col_res) = residuals(&rows, &cols);
    let mut report = SolveReport {
        residual_history: vec![row_res.max(col_res)],
        dual_history: vec![dual(&log_u, &log_w, total)],
        input_mass,
        tolerance: opts.tolerance,
        max_iter: opts.max_iter,
        ..Default::default()
    };

    let mut iter = 0;
    while row_res.max(col_res) > opts.tolerance && iter < opts.max_iter {
        iter += 1;
        // pivot block: rows are independent, closed form
        let (rows, _, _) = marginals(&log_j);
        for i in 0..n {
            let delta = (q[i] / rows[i]).ln();
            log_u[i] += delta;
            for &e in &by_pivot[i] {
                log_j[e] += delta;
            }
        }
        // receiver coordinates, one node at a time
        for j in 0..n {
            let delta = solve_receiver(&incidence[j], &log_j, p[j]);
            if !delta.is_finite() {
                return Err(diverged(&log_u, &log_w, row_res.max(col_res), vec![j]));
            }
            log_w[j] += delta;
            for inc in &incidence[j] {
                log_j[inc.entry] += inc.exponent * delta;
            }
        }
        refresh(&mut log_j, &log_u, &log_w);
        let (rows, cols, total) = marginals(&log_j);
        (row_res, col_res) = residuals(&rows, &cols);
        report.residual_history.push(row_res.max(col_res));
        report.dual_history.push(dual(&log_u, &log_w, total));
    }
    report.iterations = iter;
    report.residual = row_res.max(col_res);
    report.stochasticity_residual = row_res;
    report.stationarity_residual = col_res;
    report.converged = report.residual <= opts.tolerance;
    if !report.converged {
        let (_, cols, _) = marginals(&log_j);
        let worst: Vec<usize> = (0..n).filter(|&j| (cols[j] - p[j]).abs() > opts.tolerance).collect();
        let log_spread = spread(log_u.iter().copied()).max(spread(log_w.iter().copied()));
        if log_spread > opts.divergence_ratio.ln() {
            return Err(diverged(&log_u, &log_w, report.residual, worst));
        }
        return Err(Error::NotConverged {
            iterations: iter,
            residual: report.residual,
        });
    }

    let u: Vec<f64> = log_u.iter().map(|x| x.exp()).collect();
    let mut v = BTreeMap::new();
    let mut layers = BTreeMap::new();
    for (&k, t) in a.layers() {
        if weight(weights, k) == 0.0 {
            continue;
        }
        let inv = 1.0 / (k - 1) as f64;
        let vk: Vec<f64> = log_w.iter().map(|x| (x * inv).exp()).collect();
        layers.insert(k, t.scale_front(&u, &vk));
        v.insert(k, vk);
    }
    Ok(BroadcastKernel {
        n,
        layers,
        weights: weights.iter().filter(|(_, &w)| w > 0.0).map(|(&k, &w)| (k, w)).collect(),
        stationary: p,
        source: opts.source.as_ref().map(|_| q),
        potentials: BroadcastPotentials { u, v },
        report,
    })
}

fn diverged(log_u: &[f64], log_w: &[f64], residual: f64, nodes: Vec<usize>) -> Error {
    let log_spread = spread(log_u.iter().copied()).max(spread(log_w.iter().copied()));
    Error::Infeasible(Infeasibility {
        reason: InfeasibilityReason::DivergentPotentials { log_spread },
        nodes,
        residual: Some(residual),
    })
}

/// Finds `delta` with `sum_e c_e exp(alpha_e delta) = target`, where
/// `c_e = weight_e * J_e`. Closed form when all exponents agree, otherwise
/// Newton on the log of the left side (convex, slope within the exponents).
fn solve_receiver(incidence: &[Incidence], log_j: &[f64], target: f64) -> f64 {
    let shift = incidence.iter().map(|i| log_j[i.entry]).fold(f64::NEG_INFINITY, f64::max);
    let terms: Vec<(f64, f64)> = incidence
        .iter()
        .map(|i| (i.weight * (log_j[i.entry] - shift).exp(), i.exponent))
        .collect();
    let log_target = target.ln() - shift;
    let alpha0 = terms[0].1;
    if terms.iter().all(|&(_, a)| a == alpha0) {
        let s: f64 = terms.iter().map(|t| t.0).sum();
        return (log_target - s.ln()) / alpha0;
    }
    let mut delta = 0.0;
    for _ in 0..100 {
        let (mut s, mut ds) = (0.0, 0.0);
        for &(c, a) in &terms {
            let x = c * (a * delta).exp();
            s += x;
            ds += a * x;
        }
        let g = s.ln() - log_target;
        let step = g / (ds / s);
        delta -= step;
        if step.abs() <= 1e-15 * (1.0 + delta.abs()) {
            break;
        }
    }
    delta
}

/// Maximum absolute residual of the least-squares fit
/// `log(B/K) = a_pivot + c_k + sum_r b_r / (k - 1)` over the joint support.
/// Zero up to rounding exactly when `B` has the scaling structure of a
/// projection of `K`.
pub fn verify_front_factorization(
    b: &BTreeMap<usize, SymSparseTensor>,
    k: &BTreeMap<usize, SymSparseTensor>,
) -> Result<f64> {
    let mut rows: Vec<(usize, usize, Vec<(usize, f64)>, f64)> = Vec::new();
    let mut n = 0;
    let mut layer_index = BTreeMap::new();
    for (order, bt) in b {
        let kt = k
            .get(order)
            .ok_or_else(|| Error::SupportMismatch(format!("no reference layer k={order}")))?;
        if !bt.same_support(kt) || bt.symmetry() != Symmetry::FrontSym {
            return Err(Error::SupportMismatch(format!("layer k={order} supports differ")));
        }
        n = bt.dim();
        let li = layer_index.len();
        layer_index.insert(*order, li);
        let inv = 1.0 / (order - 1) as f64;
        for (key, val) in bt.iter() {
            let g = key.group();
            let mut recv = Vec::new();
            for_each_distinct(g, |r| recv.push((r as usize, multiplicity(g, r) as f64 * inv)));
            rows.push((key.distinguished() as usize, li, recv, (val / kt.get(key)).ln()));
        }
    }
    least_squares_residual(&rows, n, layer_index.len())
}

/// `rows`: (first-block column, layer column, weighted second-block columns, target).
pub(crate) fn least_squares_residual(
    rows: &[(usize, usize, Vec<(usize, f64)>, f64)],
    n_first: usize,
    n_layers: usize,
) -> Result<f64> {
    if rows.is_empty() {
        return Ok(0.0);
    }
    let n_second = rows
        .iter()
        .flat_map(|r| r.2.iter().map(|c| c.0 + 1))
        .max()
        .unwrap_or(0);
    let cols = n_first + n_layers + n_second;
    let mut x = DMatrix::zeros(rows.len(), cols);
    let mut y = DVector::zeros(rows.len());
    for (i, (a, l, bs, t)) in rows.iter().enumerate() {
        x[(i, *a)] = 1.0;
        x[(i, n_first + l)] = 1.0;
        for &(r, w) in bs {
            x[(i, n_first + n_layers + r)] += w;
        }
        y[i] = *t;
    }
    // minimum-norm solution through the eigenbasis of the normal matrix; the
    // design is rank-deficient by construction (gauge directions)
    let gram = x.transpose() * &x;
    let rhs = x.transpose() * &y;
    let eig = gram.symmetric_eigen();
    let cutoff = eig.eigenvalues.amax() * 1e-10;
    let mut beta = DVector::zeros(cols);
    for (c, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev > cutoff {
            let vec = eig.eigenvectors.column(c);
            beta += vec * (vec.dot(&rhs) / ev);
        }
    }
    Ok((x * beta - y).amax())
}

/// Row-mass and stationarity residuals of a kernel, recomputed from its tensors.
pub fn kernel_residuals(kernel: &BroadcastKernel) -> (f64, f64) {
    let n = kernel.n;
    let mut rows = vec![0.0; n];
    let mut proj = DMatrix::zeros(n, n);
    for (k, t) in &kernel.layers {
        let lam = weight(&kernel.weights, *k);
        for (i, m) in t.row_mass().into_iter().enumerate() {
            rows[i] += lam * m;
        }
        proj += t.receiver_marginal_matrix() * lam;
    }
    let q = kernel.source.as_ref().unwrap_or(&kernel.stationary);
    let pushed = proj.transpose() * DVector::from_column_slice(q);
    let row_res = rows.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
    (row_res, linf_distance(pushed.as_slice(), &kernel.stationary))
}

#[derive(Serialize, Deserialize)]
struct FrontEntryDoc {
    pivot: u32,
    receivers: Vec<u32>,
    value: f64,
}

#[derive(Serialize, Deserialize)]
struct FrontLayerDoc {
    k: usize,
    entries: Vec<FrontEntryDoc>,
}

#[derive(Serialize, Deserialize)]
struct BroadcastDoc {
    kind: String,
    n: usize,
    weights: BTreeMap<String, f64>,
    stationary: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<Vec<f64>>,
    layers: Vec<FrontLayerDoc>,
    potentials: BroadcastPotentials,
    report: SolveReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config: Option<Value>,
}

pub(crate) fn weights_to_doc(w: &Weights) -> BTreeMap<String, f64> {
    w.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

pub(crate) fn weights_from_doc(w: &BTreeMap<String, f64>) -> Result<Weights> {
    w.iter()
        .map(|(k, v)| {
            k.parse::<usize>()
                .map(|k| (k, *v))
                .map_err(|_| Error::Parse(format!("bad layer key {k:?}")))
        })
        .collect()
}

impl BroadcastKernel {
    /// Kernel document with 1-based indices. `config` is embedded verbatim.
    pub fn to_json(&self, config: Option<&Value>) -> String {
        let doc = BroadcastDoc {
            kind: "broadcast".into(),
            n: self.n,
            weights: weights_to_doc(&self.weights),
            stationary: self.stationary.clone(),
            source: self.source.clone(),
            layers: self
                .layers
                .iter()
                .map(|(&k, t)| FrontLayerDoc {
                    k,
                    entries: t
                        .iter()
                        .map(|(key, value)| FrontEntryDoc {
                            pivot: key.distinguished() + 1,
                            receivers: key.group().iter().map(|r| r + 1).collect(),
                            value,
                        })
                        .collect(),
                })
                .collect(),
            potentials: self.potentials.clone(),
            report: self.report.clone(),
            config: config.cloned(),
        };
        serde_json::to_string_pretty(&doc).expect("kernel serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: BroadcastDoc = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if doc.kind != "broadcast" {
            return Err(Error::Parse(format!("expected a broadcast kernel, found {:?}", doc.kind)));
        }
        let mut layers = BTreeMap::new();
        for layer in doc.layers {
            let mut t = SymSparseTensor::new(layer.k, doc.n, Symmetry::FrontSym);
            for e in layer.entries {
                if e.pivot == 0 || e.receivers.contains(&0) {
                    return Err(Error::Parse("node indices are 1-based".into()));
                }
                t.insert(
                    CanonicalKey::new(e.pivot - 1, e.receivers.iter().map(|r| r - 1).collect()),
                    e.value,
                )?;
            }
            layers.insert(layer.k, t);
        }
        if doc.stationary.len() != doc.n {
            return Err(Error::DimensionMismatch {
                expected: doc.n,
                found: doc.stationary.len(),
            });
        }
        Ok(Self {
            n: doc.n,
            layers,
            weights: weights_from_doc(&doc.weights)?,
            stationary: doc.stationary,
            source: doc.source,
            potentials: doc.potentials,
            report: doc.report,
        })
    }

    /// Joint reference the kernel was projected from, for the given adjacency.
    pub fn reference(&self, a: &AdjacencyLayers) -> Result<BTreeMap<usize, SymSparseTensor>> {
        let q = self.source.as_ref().unwrap_or(&self.stationary);
        let mut k = pivot_weighted_reference(a, q, &self.weights)?;
        k.retain(|order, _| self.layers.contains_key(order));
        Ok(k)
    }

    /// `B^(k)` divided back into joint form `lambda_k q_i B^(k)`.
    pub fn joint_layers(&self) -> BTreeMap<usize, SymSparseTensor> {
        let q = self.source.as_ref().unwrap_or(&self.stationary);
        self.layers
            .iter()
            .map(|(&k, t)| {
                let lam = weight(&self.weights, k);
                (k, t.map_values(|key, v| lam * q[key.distinguished() as usize] * v))
            })
            .collect()
    }
}

/// Relative entropy `sum J log(J/K) - J + K` over ordered tuples.
pub fn kl_divergence(j: &BTreeMap<usize, SymSparseTensor>, k: &BTreeMap<usize, SymSparseTensor>) -> f64 {
    let mut total = 0.0;
    for (order, kt) in k {
        let jt = j.get(order);
        for (key, kv) in kt.iter() {
            let jv = jt.map(|t| t.get(key)).unwrap_or(0.0);
            let ord = orderings(key.group());
            let term = if jv > 0.0 { jv * (jv / kv).ln() - jv + kv } else { kv };
            total += ord * term;
        }
    }
    total
}
