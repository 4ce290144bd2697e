//! Maximum-entropy merging kernels and their polynomial dynamics.
//!
//! A merging kernel is a family of back-symmetric tensors `M^(k)`: entry
//! `M^(k)[S, j]` is the probability that the unordered tail group `S` (size
//! `k - 1`) resolves to receiver `j`. Node marginals evolve as
//!
//! ```text
//! p_{t+1}[j] = sum_k lambda_k sum_{ordered tails} M^(k)[t_1..t_{k-1}, j] p_t[t_1] .. p_t[t_{k-1}]
//! ```
//!
//! [`infer_merge`] finds the kernel closest in relative entropy to a
//! reference, subject to every supported context being a probability law and
//! `p` being a fixed point of the dynamics. The optimum is
//! `M^(k) = A^(k) * U^(k)_S * v_j`, found by alternating the two exact block
//! updates of the dual.
//!
//! A supported context set only carries the `p`-mass of its own tail tuples.
//! When the tuples outside the support have positive mass (for instance
//! whenever repeated tails such as `{a, a}` are excluded), exact stationarity
//! is impossible. [`StationarityTarget::MassAdjusted`] asks instead for
//! `xi = c * p` on the receivable nodes, `c` being the covered mass.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::broadcast::{least_squares_residual, weights_from_doc, weights_to_doc, SolveReport};
use crate::error::{Error, Infeasibility, InfeasibilityReason, Result};
use crate::hypergraph::{AdjacencyLayers, Orientation};
use crate::tensor::{orderings, CanonicalKey, SymSparseTensor, Symmetry};
use crate::util::{check_weights, linf_distance, positive_distribution, spread, weight, Weights};

/// What the stationarity constraint asks for.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StationarityTarget {
    /// `xi = p` exactly; infeasible when supported contexts miss tail mass.
    #[default]
    Exact,
    /// `xi = c * p~` where `c` is the covered context mass and `p~` is `p`
    /// restricted to receivable nodes and renormalized.
    MassAdjusted,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MergeOptions {
    /// Target for `max(|zeta - 1|_inf, |xi - target|_inf)`.
    pub tolerance: f64,
    pub max_iter: usize,
    pub divergence_ratio: f64,
    pub target: StationarityTarget,
    /// Return the last iterate instead of an error when the iteration cap is
    /// reached (the report then says `converged: false`).
    pub best_effort: bool,
    /// Starting receiver potentials; all ones when `None`.
    pub initial_v: Option<Vec<f64>>,
}

impl Default for MergeOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iter: 100_000,
            divergence_ratio: 1e12,
            target: StationarityTarget::Exact,
            best_effort: false,
            initial_v: None,
        }
    }
}

/// Per-layer context potentials `U^(k)` and receiver potentials `v^(k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MergePotentials {
    pub u: BTreeMap<usize, BTreeMap<Vec<u32>, f64>>,
    pub v: BTreeMap<usize, Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MergeKernel {
    pub n: usize,
    /// Conditional tensors `M^(k)` of the layers with positive weight.
    pub layers: BTreeMap<usize, SymSparseTensor>,
    pub weights: Weights,
    /// Prescribed distribution (normalized).
    pub stationary: Vec<f64>,
    /// What `xi` was driven to; equals `stationary` for exact targets.
    pub target: Vec<f64>,
    pub potentials: MergePotentials,
    pub report: SolveReport,
}

/// `K^(k) = lambda_k * prod_{t in S} p_t * A^(k)`.
pub fn merge_reference(
    a: &AdjacencyLayers,
    p: &[f64],
    weights: &Weights,
) -> Result<BTreeMap<usize, SymSparseTensor>> {
    if a.orientation() != Orientation::OneHead {
        return Err(Error::InvalidInput("merging needs a one-head hypergraph".into()));
    }
    if p.len() != a.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            found: p.len(),
        });
    }
    if let Some(j) = p.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::InvalidInput(format!("p of node {} is {}", j + 1, p[j])));
    }
    Ok(a.layers()
        .iter()
        .map(|(&k, t)| {
            let lam = weight(weights, k);
            (k, t.map_values(|key, v| lam * tail_product(key.group(), p) * v))
        })
        .collect())
}

fn tail_product(group: &[u32], p: &[f64]) -> f64 {
    group.iter().map(|&t| p[t as usize]).product()
}

/// Marginals of the joint law `J^(k) = scale_back(K^(k), U^(k), v^(k))`.
///
/// `zeta^(k)[S]` is the receiver mass of context `S` divided by its weight
/// `lambda_k prod p_S` (constraint `zeta = 1`); `xi[j]` is the total joint
/// mass arriving at `j` (constraint `xi = p`).
pub fn merge_marginals(
    reference: &BTreeMap<usize, SymSparseTensor>,
    weights: &Weights,
    p: &[f64],
    potentials: &MergePotentials,
) -> Result<(BTreeMap<usize, BTreeMap<Vec<u32>, f64>>, Vec<f64>)> {
    let n = p.len();
    let mut zeta = BTreeMap::new();
    let mut xi = vec![0.0; n];
    for (&k, t) in reference {
        if t.is_empty() {
            zeta.insert(k, BTreeMap::new());
            continue;
        }
        let (u, v) = match (potentials.u.get(&k), potentials.v.get(&k)) {
            (Some(u), Some(v)) => (u, v),
            _ => return Err(Error::InvalidInput(format!("no potentials for layer k={k}"))),
        };
        if u.values().chain(v).any(|x| !(*x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidInput("potentials must be positive".into()));
        }
        let joint = t.scale_back(u, v)?;
        let lam = weight(weights, k);
        let z = joint
            .context_mass(&vec![1.0; n])
            .into_iter()
            .map(|(s, m)| {
                let w = lam * tail_product(&s, p);
                (s, m / w)
            })
            .collect();
        zeta.insert(k, z);
        for (j, x) in joint.polynomial_apply(&vec![1.0; n]).into_iter().enumerate() {
            xi[j] += x;
        }
    }
    Ok((zeta, xi))
}

struct Context {
    layer: usize,
    group: Vec<u32>,
    /// `lambda_k * orderings(S) * prod p_S`: mass this context carries.
    mass: f64,
    /// Range into the receiver arrays.
    start: usize,
    end: usize,
}

/// Runs the scaling iteration for a merging kernel.
pub fn infer_merge(
    a: &AdjacencyLayers,
    p: &[f64],
    weights: &Weights,
    opts: &MergeOptions,
) -> Result<MergeKernel> {
    let n = a.n();
    let (p, input_mass) = positive_distribution(p, n, "stationary distribution")?;
    check_weights(weights, a.sizes())?;
    if a.orientation() != Orientation::OneHead {
        return Err(Error::InvalidInput("merging needs a one-head hypergraph".into()));
    }

    // flatten the active layers: contexts with contiguous receiver lists
    let mut contexts: Vec<Context> = Vec::new();
    let mut recv: Vec<usize> = Vec::new();
    let mut log_a: Vec<f64> = Vec::new();
    for (&k, t) in a.layers() {
        let lam = weight(weights, k);
        if lam == 0.0 {
            continue;
        }
        for (group, list) in t.contexts() {
            let start = recv.len();
            for (j, val) in list {
                recv.push(j as usize);
                log_a.push(val.ln());
            }
            contexts.push(Context {
                layer: k,
                group: group.to_vec(),
                mass: lam * orderings(group) * tail_product(group, &p),
                start,
                end: recv.len(),
            });
        }
    }
    let covered: f64 = contexts.iter().map(|c| c.mass).sum();
    let mut receivable = vec![false; n];
    for &j in &recv {
        receivable[j] = true;
    }
    let target: Vec<f64> = match opts.target {
        StationarityTarget::Exact => {
            let deaf: Vec<usize> = (0..n).filter(|&j| !receivable[j]).collect();
            if !deaf.is_empty() {
                return Err(Error::Infeasible(Infeasibility {
                    reason: InfeasibilityReason::NeverReceives,
                    nodes: deaf,
                    residual: None,
                }));
            }
            if covered < 1.0 - opts.tolerance.max(1e-12) {
                return Err(Error::Infeasible(Infeasibility {
                    reason: InfeasibilityReason::ContextMassDeficit { covered },
                    nodes: Vec::new(),
                    residual: None,
                }));
            }
            p.clone()
        }
        StationarityTarget::MassAdjusted => {
            if contexts.is_empty() {
                return Err(Error::InvalidInput("no supported contexts".into()));
            }
            let live: f64 = (0..n).filter(|&j| receivable[j]).map(|j| p[j]).sum();
            (0..n)
                .map(|j| if receivable[j] { covered * p[j] / live } else { 0.0 })
                .collect()
        }
    };

    let mut log_v: Vec<f64> = match &opts.initial_v {
        Some(v) => {
            if v.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: v.len(),
                });
            }
            if v.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                return Err(Error::InvalidInput("initial potentials must be positive".into()));
            }
            v.iter().map(|x| x.ln()).collect()
        }
        None => vec![0.0; n],
    };
    let mut log_u = vec![0.0; contexts.len()];

    // Joint mass J[S, j] = mass_S * A[S, j] * exp(logU_S + logv_j).
    let context_sums = |log_u: &[f64], log_v: &[f64]| -> Vec<f64> {
        contexts
            .iter()
            .zip(log_u)
            .map(|(c, lu)| (c.start..c.end).map(|e| (log_a[e] + lu + log_v[recv[e]]).exp()).sum())
            .collect()
    };
    let arrivals = |log_u: &[f64], log_v: &[f64]| -> Vec<f64> {
        let mut xi = vec![0.0; n];
        for (c, lu) in contexts.iter().zip(log_u) {
            for e in c.start..c.end {
                xi[recv[e]] += c.mass * (log_a[e] + lu + log_v[recv[e]]).exp();
            }
        }
        xi
    };
    let ref_mass: f64 = contexts
        .iter()
        .map(|c| c.mass * (c.start..c.end).map(|e| log_a[e].exp()).sum::<f64>())
        .sum();
    // dual of min sum J log(J/K) - J + K
    let dual = |log_u: &[f64], log_v: &[f64], sums: &[f64]| -> f64 {
        let mut g = ref_mass;
        for ((c, lu), s) in contexts.iter().zip(log_u).zip(sums) {
            g += c.mass * (lu - s);
        }
        g + (0..n).filter(|&j| receivable[j]).map(|j| target[j] * log_v[j]).sum::<f64>()
    };
    let residuals = |sums: &[f64], xi: &[f64]| -> (f64, f64) {
        let z = sums.iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
        (z, linf_distance(xi, &target))
    };

    // U block first so the starting point is already output-stochastic
    let u_block = |log_u: &mut Vec<f64>, log_v: &[f64]| {
        let sums = context_sums(log_u, log_v);
        for (lu, s) in log_u.iter_mut().zip(sums) {
            *lu -= s.ln();
        }
    };
    u_block(&mut log_u, &log_v);
    let sums = context_sums(&log_u, &log_v);
    let xi = arrivals(&log_u, &log_v);
    let (mut z_res, mut x_res) = residuals(&sums, &xi);
    let mut report = SolveReport {
        residual_history: vec![z_res.max(x_res)],
        dual_history: vec![dual(&log_u, &log_v, &sums)],
        input_mass,
        tolerance: opts.tolerance,
        max_iter: opts.max_iter,
        covered_mass: Some(covered),
        ..Default::default()
    };
    let mut iter = 0;
    while z_res.max(x_res) > opts.tolerance && iter < opts.max_iter {
        iter += 1;
        let xi = arrivals(&log_u, &log_v);
        for j in 0..n {
            if receivable[j] {
                log_v[j] += (target[j] / xi[j]).ln();
            }
        }
        u_block(&mut log_u, &log_v);
        let sums = context_sums(&log_u, &log_v);
        let xi = arrivals(&log_u, &log_v);
        (z_res, x_res) = residuals(&sums, &xi);
        if !(z_res.is_finite() && x_res.is_finite()) {
            return Err(Error::Infeasible(Infeasibility {
                reason: InfeasibilityReason::DivergentPotentials { log_spread: f64::INFINITY },
                nodes: Vec::new(),
                residual: None,
            }));
        }
        report.residual_history.push(z_res.max(x_res));
        report.dual_history.push(dual(&log_u, &log_v, &sums));
    }
    report.iterations = iter;
    report.residual = z_res.max(x_res);
    report.stochasticity_residual = z_res;
    report.stationarity_residual = x_res;
    report.converged = report.residual <= opts.tolerance;
    if !report.converged && !opts.best_effort {
        let xi = arrivals(&log_u, &log_v);
        let worst: Vec<usize> = (0..n).filter(|&j| (xi[j] - target[j]).abs() > opts.tolerance).collect();
        let log_spread = spread((0..n).filter(|&j| receivable[j]).map(|j| log_v[j]));
        if log_spread > opts.divergence_ratio.ln() {
            return Err(Error::Infeasible(Infeasibility {
                reason: InfeasibilityReason::DivergentPotentials { log_spread },
                nodes: worst,
                residual: Some(report.residual),
            }));
        }
        return Err(Error::NotConverged {
            iterations: iter,
            residual: report.residual,
        });
    }

    // shift v so that its largest receivable entry is 1; U absorbs the gauge
    let top = (0..n).filter(|&j| receivable[j]).map(|j| log_v[j]).fold(f64::NEG_INFINITY, f64::max);
    let top = if top.is_finite() { top } else { 0.0 };
    // entries are assembled in the log domain: best-effort iterates can push
    // U and v to opposite ends of the floating range while their product is fine
    let finite = |x: f64| x.exp().clamp(f64::MIN_POSITIVE, f64::MAX);
    let v: Vec<f64> = log_v.iter().map(|x| if x.is_finite() { finite(x - top) } else { 0.0 }).collect();
    let mut shifted_u: BTreeMap<usize, BTreeMap<&[u32], f64>> = BTreeMap::new();
    let mut u: BTreeMap<usize, BTreeMap<Vec<u32>, f64>> = BTreeMap::new();
    for (c, lu) in contexts.iter().zip(&log_u) {
        shifted_u.entry(c.layer).or_default().insert(&c.group, lu + top);
        u.entry(c.layer).or_default().insert(c.group.clone(), finite(lu + top));
    }
    let mut layers = BTreeMap::new();
    let mut v_layers = BTreeMap::new();
    for (&k, t) in a.layers() {
        if weight(weights, k) == 0.0 {
            continue;
        }
        let lu = shifted_u.entry(k).or_default();
        u.entry(k).or_default();
        let scaled = t.map_values(|key, val| {
            (val.ln() + lu[key.group()] + log_v[key.distinguished() as usize] - top)
                .exp()
                .max(f64::MIN_POSITIVE)
        });
        layers.insert(k, scaled);
        v_layers.insert(k, v.clone());
    }
    Ok(MergeKernel {
        n,
        layers,
        weights: weights.iter().filter(|(_, &w)| w > 0.0).map(|(&k, &w)| (k, w)).collect(),
        stationary: p,
        target,
        potentials: MergePotentials { u, v: v_layers },
        report,
    })
}

/// Result of one application of the merging dynamics.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub next: Vec<f64>,
    /// `1 - sum(next)` before any renormalization: mass of tail tuples with
    /// no supported context.
    pub leaked: f64,
}

impl StepOutcome {
    /// Warning text when more than `eps` mass leaked.
    pub fn leak_warning(&self, eps: f64) -> Option<String> {
        (self.leaked > eps).then(|| format!("mass leak {:.6e}: sampled contexts outside the support", self.leaked))
    }
}

/// `p_{t+1} = sum_k lambda_k M^(k) x_{1..k-1} {p_t, .., p_t}` for `p_t` on
/// the simplex; other inputs are scaled to unit mass and the result scaled
/// back.
///
/// With `renormalize` the result is divided by its sum (the leak is still
/// reported).
pub fn merge_step(kernel: &MergeKernel, p: &[f64], renormalize: bool) -> Result<StepOutcome> {
    if p.len() != kernel.n {
        return Err(Error::DimensionMismatch {
            expected: kernel.n,
            found: p.len(),
        });
    }
    // Contexts are drawn from p / |p|. On the simplex this is the plain
    // polynomial map, but |p| -> |p|^(k-1) would make unit mass a repelling
    // fixed point and amplify rounding.
    let mass_in: f64 = p.iter().sum();
    let drawn: Vec<f64> = if mass_in > 0.0 { p.iter().map(|x| x / mass_in).collect() } else { p.to_vec() };
    let mut next = vec![0.0; kernel.n];
    for (k, t) in &kernel.layers {
        let lam = weight(&kernel.weights, *k) * mass_in;
        for (j, x) in t.polynomial_apply(&drawn).into_iter().enumerate() {
            next[j] += lam * x;
        }
    }
    let total: f64 = next.iter().sum();
    let leaked = mass_in - total;
    if renormalize && total > 0.0 {
        for x in &mut next {
            *x /= total / mass_in;
        }
    }
    Ok(StepOutcome { next, leaked })
}

/// How [`dobrushin_delta_with`] evaluates the coefficient.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DeltaMode {
    /// Exact pairwise maximum up to [`DELTA_EXACT_LIMIT`] contexts, bound beyond.
    #[default]
    Auto,
    Exact,
    /// `1 - sum_j min_S M[S, j]`, an upper bound in O(entries).
    Bound,
}

pub const DELTA_EXACT_LIMIT: usize = 2000;

/// Largest total-variation distance between the receiver laws of two
/// supported contexts (0 with fewer than two contexts).
pub fn dobrushin_delta(m: &SymSparseTensor) -> f64 {
    dobrushin_delta_with(m, DeltaMode::Auto)
}

pub fn dobrushin_delta_with(m: &SymSparseTensor, mode: DeltaMode) -> f64 {
    let rows: Vec<Vec<(u32, f64)>> = m.contexts().into_values().collect();
    if rows.len() < 2 {
        return 0.0;
    }
    let exact = match mode {
        DeltaMode::Exact => true,
        DeltaMode::Bound => false,
        DeltaMode::Auto => rows.len() <= DELTA_EXACT_LIMIT,
    };
    if !exact {
        let mut floor: Option<Vec<f64>> = None;
        for row in &rows {
            let mut dense = vec![0.0; m.dim()];
            for &(j, x) in row {
                dense[j as usize] = x;
            }
            floor = Some(match floor {
                None => dense,
                Some(f) => f.iter().zip(&dense).map(|(a, b)| a.min(*b)).collect(),
            });
        }
        return (1.0 - floor.unwrap().iter().sum::<f64>()).clamp(0.0, 1.0);
    }
    let masses: Vec<f64> = rows.iter().map(|r| r.iter().map(|e| e.1).sum()).collect();
    (0..rows.len())
        .into_par_iter()
        .map(|a| {
            let mut best: f64 = 0.0;
            for b in a + 1..rows.len() {
                let overlap = sorted_overlap(&rows[a], &rows[b]);
                best = best.max(0.5 * (masses[a] + masses[b]) - overlap);
            }
            best
        })
        .reduce(|| 0.0, f64::max)
        .clamp(0.0, 1.0)
}

fn sorted_overlap(a: &[(u32, f64)], b: &[(u32, f64)]) -> f64 {
    let (mut i, mut j, mut s) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                s += a[i].1.min(b[j].1);
                i += 1;
                j += 1;
            }
        }
    }
    s
}

/// `sum_k lambda_k (k - 1) delta(M^(k))`. Below one certifies that the
/// merging dynamics contract in L1 and have a unique attracting fixed point.
pub fn contraction_constant(kernel: &MergeKernel) -> f64 {
    kernel
        .layers
        .iter()
        .map(|(&k, t)| weight(&kernel.weights, k) * (k - 1) as f64 * dobrushin_delta(t))
        .sum()
}

/// Per layer, the maximum residual of the least-squares fit
/// `log(M/K) = c_S + b_j`; the largest over layers is returned.
pub fn verify_back_factorization(
    m: &BTreeMap<usize, SymSparseTensor>,
    k: &BTreeMap<usize, SymSparseTensor>,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (order, mt) in m {
        let kt = k
            .get(order)
            .ok_or_else(|| Error::SupportMismatch(format!("no reference layer k={order}")))?;
        if !mt.same_support(kt) || mt.symmetry() != Symmetry::BackSym {
            return Err(Error::SupportMismatch(format!("layer k={order} supports differ")));
        }
        let mut index: BTreeMap<&[u32], usize> = BTreeMap::new();
        for (key, _) in mt.iter() {
            let len = index.len();
            index.entry(key.group()).or_insert(len);
        }
        let rows: Vec<_> = mt
            .iter()
            .map(|(key, val)| {
                (
                    index[key.group()],
                    0,
                    vec![(key.distinguished() as usize, 1.0)],
                    (val / kt.get(key)).ln(),
                )
            })
            .collect();
        worst = worst.max(least_squares_residual(&rows, index.len(), 1)?);
    }
    Ok(worst)
}

/// Context and stationarity residuals recomputed from the kernel tensors:
/// `max |M x_k 1 - 1|` over contexts and `|F(p) - target|_inf`.
pub fn kernel_residuals(kernel: &MergeKernel) -> Result<(f64, f64)> {
    let mut z: f64 = 0.0;
    for t in kernel.layers.values() {
        for m in t.context_mass(&vec![1.0; kernel.n]).values() {
            z = z.max((m - 1.0).abs());
        }
    }
    let step = merge_step(kernel, &kernel.stationary, false)?;
    Ok((z, linf_distance(&step.next, &kernel.target)))
}

impl MergeKernel {
    /// Receiver law of a context (canonical tail group), as `(receiver, prob)`
    /// pairs in receiver order. Searches layers by group size.
    pub fn conditional(&self, tails: &[u32]) -> Vec<(u32, f64)> {
        let mut g = tails.to_vec();
        g.sort_unstable();
        let Some(t) = self.layers.get(&(g.len() + 1)) else {
            return Vec::new();
        };
        t.iter()
            .filter(|(k, _)| k.group() == g.as_slice())
            .map(|(k, v)| (k.distinguished(), v))
            .collect()
    }

    /// Joint reference for the given adjacency, restricted to kernel layers.
    pub fn reference(&self, a: &AdjacencyLayers) -> Result<BTreeMap<usize, SymSparseTensor>> {
        let mut k = merge_reference(a, &self.stationary, &self.weights)?;
        k.retain(|order, _| self.layers.contains_key(order));
        Ok(k)
    }

    /// `lambda_k prod p_S M^(k)`: the joint law the projection acts on.
    pub fn joint_layers(&self) -> BTreeMap<usize, SymSparseTensor> {
        self.layers
            .iter()
            .map(|(&k, t)| {
                let lam = weight(&self.weights, k);
                (k, t.map_values(|key, v| lam * tail_product(key.group(), &self.stationary) * v))
            })
            .collect()
    }

    pub fn to_json(&self, config: Option<&Value>) -> String {
        let doc = MergeDoc {
            kind: "merge".into(),
            n: self.n,
            weights: weights_to_doc(&self.weights),
            stationary: self.stationary.clone(),
            target: self.target.clone(),
            layers: self
                .layers
                .iter()
                .map(|(&k, t)| BackLayerDoc {
                    k,
                    entries: t
                        .iter()
                        .map(|(key, value)| BackEntryDoc {
                            tail: key.group().iter().map(|x| x + 1).collect(),
                            receiver: key.distinguished() + 1,
                            value,
                        })
                        .collect(),
                })
                .collect(),
            potentials: MergePotentialsDoc {
                u: self
                    .potentials
                    .u
                    .iter()
                    .map(|(k, m)| {
                        (
                            k.to_string(),
                            m.iter()
                                .map(|(s, &value)| TailValueDoc {
                                    tail: s.iter().map(|x| x + 1).collect(),
                                    value,
                                })
                                .collect(),
                        )
                    })
                    .collect(),
                v: self.potentials.v.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
            },
            report: self.report.clone(),
            config: config.cloned(),
        };
        serde_json::to_string_pretty(&doc).expect("kernel serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MergeDoc = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if doc.kind != "merge" {
            return Err(Error::Parse(format!("expected a merge kernel, found {:?}", doc.kind)));
        }
        let one_based = |xs: &[u32]| -> Result<Vec<u32>> {
            xs.iter()
                .map(|&x| x.checked_sub(1).ok_or_else(|| Error::Parse("node indices are 1-based".into())))
                .collect()
        };
        let mut layers = BTreeMap::new();
        for layer in doc.layers {
            let mut t = SymSparseTensor::new(layer.k, doc.n, Symmetry::BackSym);
            for e in layer.entries {
                let r = one_based(&[e.receiver])?[0];
                t.insert(CanonicalKey::new(r, one_based(&e.tail)?), e.value)?;
            }
            layers.insert(layer.k, t);
        }
        let mut u = BTreeMap::new();
        for (k, list) in doc.potentials.u {
            let k: usize = k.parse().map_err(|_| Error::Parse(format!("bad layer key {k:?}")))?;
            let mut m = BTreeMap::new();
            for tv in list {
                let mut s = one_based(&tv.tail)?;
                s.sort_unstable();
                m.insert(s, tv.value);
            }
            u.insert(k, m);
        }
        let v = weights_vec_from_doc(doc.potentials.v)?;
        if doc.stationary.len() != doc.n || doc.target.len() != doc.n {
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
            target: doc.target,
            potentials: MergePotentials { u, v },
            report: doc.report,
        })
    }
}

fn weights_vec_from_doc(v: BTreeMap<String, Vec<f64>>) -> Result<BTreeMap<usize, Vec<f64>>> {
    v.into_iter()
        .map(|(k, x)| {
            k.parse::<usize>()
                .map(|k| (k, x))
                .map_err(|_| Error::Parse(format!("bad layer key {k:?}")))
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct BackEntryDoc {
    tail: Vec<u32>,
    receiver: u32,
    value: f64,
}

#[derive(Serialize, Deserialize)]
struct BackLayerDoc {
    k: usize,
    entries: Vec<BackEntryDoc>,
}

#[derive(Serialize, Deserialize)]
struct TailValueDoc {
    tail: Vec<u32>,
    value: f64,
}

#[derive(Serialize, Deserialize)]
struct MergePotentialsDoc {
    u: BTreeMap<String, Vec<TailValueDoc>>,
    v: BTreeMap<String, Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct MergeDoc {
    kind: String,
    n: usize,
    weights: BTreeMap<String, f64>,
    stationary: Vec<f64>,
    target: Vec<f64>,
    layers: Vec<BackLayerDoc>,
    potentials: MergePotentialsDoc,
    report: SolveReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config: Option<Value>,
}
