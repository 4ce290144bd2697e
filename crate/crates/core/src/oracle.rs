//! Slow dense KL projection, used to cross-check the scaling solvers.
//!
//! The problem is stated over every ordered index tuple of one order-`k`
//! tensor, with no assumption about potentials or symmetry:
//!
//! ```text
//! minimize   sum_x  x log(x / r) - x + r      over Supp(r)
//! subject to <C_i, x> = t_i                   for every constraint i
//! ```
//!
//! It is solved by ascent on the concave dual
//! `g(y) = <t, y> - sum r exp(C^T y) + sum r`, using Newton directions
//! (pseudo-inverse of the dual Hessian) with backtracking, and a plain
//! gradient step whenever Newton fails to improve. Only meant for
//! `n <= 5`, `k <= 4`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hypergraph::{AdjacencyLayers, Orientation};
use crate::tensor::DenseTensor;

pub const MAX_DIM: usize = 5;
pub const MAX_ORDER: usize = 4;

/// One affine constraint `<coefficients, x> = target`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearConstraint {
    pub coefficients: DenseTensor,
    pub target: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseProjectionProblem {
    pub reference: DenseTensor,
    pub constraints: Vec<LinearConstraint>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseSolution {
    pub tensor: DenseTensor,
    /// `sum x log(x/r) - x + r`.
    pub kl: f64,
    pub residual: f64,
    pub iterations: usize,
    /// Largest relative error of the finite-difference gradient check.
    pub gradient_check: f64,
}

/// Relative error allowed in the finite-difference gradient check.
pub const GRADIENT_CHECK_TOLERANCE: f64 = 1e-6;

impl DenseProjectionProblem {
    pub fn new(reference: DenseTensor, constraints: Vec<LinearConstraint>) -> Result<Self> {
        if reference.dim() > MAX_DIM || reference.order() > MAX_ORDER {
            return Err(Error::InvalidInput(format!(
                "dense oracle is limited to n <= {MAX_DIM}, k <= {MAX_ORDER}"
            )));
        }
        if reference.data().iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(Error::InvalidInput("reference must be finite and nonnegative".into()));
        }
        for c in &constraints {
            if c.coefficients.order() != reference.order() || c.coefficients.dim() != reference.dim() {
                return Err(Error::InvalidInput("constraint shape differs from the reference".into()));
            }
            if !c.target.is_finite() {
                return Err(Error::InvalidInput("constraint target must be finite".into()));
            }
        }
        Ok(Self { reference, constraints })
    }

    fn support(&self) -> Vec<usize> {
        (0..self.reference.data().len()).filter(|&i| self.reference.data()[i] > 0.0).collect()
    }

    fn system(&self, support: &[usize]) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
        let c = DMatrix::from_fn(self.constraints.len(), support.len(), |i, s| {
            self.constraints[i].coefficients.data()[support[s]]
        });
        let t = DVector::from_iterator(self.constraints.len(), self.constraints.iter().map(|c| c.target));
        let r = DVector::from_iterator(support.len(), support.iter().map(|&o| self.reference.data()[o]));
        (c, t, r)
    }

    /// KL of an arbitrary dense tensor against the reference (infinite when
    /// it puts mass off the support).
    pub fn kl(&self, x: &DenseTensor) -> f64 {
        let mut total = 0.0;
        for (xv, rv) in x.data().iter().zip(self.reference.data()) {
            if *rv == 0.0 {
                if *xv != 0.0 {
                    return f64::INFINITY;
                }
            } else if *xv > 0.0 {
                total += xv * (xv / rv).ln() - xv + rv;
            } else {
                total += rv;
            }
        }
        total
    }

    /// Largest `|<C_i, x> - t_i|`.
    pub fn residual(&self, x: &DenseTensor) -> f64 {
        self.constraints
            .iter()
            .map(|c| {
                let s: f64 = c.coefficients.data().iter().zip(x.data()).map(|(a, b)| a * b).sum();
                (s - c.target).abs()
            })
            .fold(0.0, f64::max)
    }
}

fn primal(c: &DMatrix<f64>, r: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
    let e = c.transpose() * y;
    r.zip_map(&e, |ri, ei| ri * ei.exp())
}

fn dual_value(c: &DMatrix<f64>, t: &DVector<f64>, r: &DVector<f64>, y: &DVector<f64>) -> f64 {
    t.dot(y) - primal(c, r, y).sum() + r.sum()
}

/// Compares the analytic dual gradient `t - C x(y)` with central finite
/// differences at `points` random dual points; returns the largest relative
/// error.
pub fn gradient_check(problem: &DenseProjectionProblem, points: usize, seed: u64) -> f64 {
    let support = problem.support();
    let (c, t, r) = problem.system(&support);
    let m = c.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let y = DVector::from_fn(m, |_, _| rng.gen_range(-0.5..0.5));
        let grad = &t - &c * primal(&c, &r, &y);
        for i in 0..m {
            let h = 1e-5 * (1.0 + y[i].abs());
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[i] += h;
            ym[i] -= h;
            let fd = (dual_value(&c, &t, &r, &yp) - dual_value(&c, &t, &r, &ym)) / (2.0 * h);
            let scale = grad[i].abs().max(fd.abs()).max(1e-3);
            worst = worst.max((fd - grad[i]).abs() / scale);
        }
    }
    worst
}

/// Solves the projection to residual `eps`.
pub fn kl_project_dense(problem: &DenseProjectionProblem, eps: f64, max_iter: usize) -> Result<DenseSolution> {
    let check = gradient_check(problem, 10, 17);
    if check > GRADIENT_CHECK_TOLERANCE {
        return Err(Error::InvalidInput(format!(
            "dual gradient disagrees with finite differences (relative error {check:.2e})"
        )));
    }
    let support = problem.support();
    let (c, t, r) = problem.system(&support);
    let m = c.nrows();
    let mut y = DVector::zeros(m);
    let mut x = primal(&c, &r, &y);
    let mut g = dual_value(&c, &t, &r, &y);
    let mut iterations = 0;
    loop {
        let grad = &t - &c * &x;
        let residual = grad.amax();
        if residual <= eps {
            break;
        }
        if iterations >= max_iter {
            let spread = y.amax();
            if spread > 1e12f64.ln() {
                return Err(Error::Infeasible(crate::error::Infeasibility {
                    reason: crate::error::InfeasibilityReason::DivergentPotentials { log_spread: spread },
                    nodes: Vec::new(),
                    residual: Some(residual),
                }));
            }
            return Err(Error::NotConverged { iterations, residual });
        }
        iterations += 1;
        let hessian = &c * DMatrix::from_diagonal(&x) * c.transpose();
        let newton = hessian.svd(true, true).solve(&grad, 1e-14).ok();
        let mut improved = false;
        // close to the optimum dual increments drop below rounding; a full
        // Newton step that halves the residual is then accepted outright
        if let Some(d) = &newton {
            let cand = &y + d;
            let cand_res = (&t - &c * primal(&c, &r, &cand)).amax();
            if cand_res <= 0.5 * residual {
                g = dual_value(&c, &t, &r, &cand);
                y = cand;
                improved = true;
            }
        }
        let candidates: Vec<DVector<f64>> = if improved {
            Vec::new()
        } else {
            newton.into_iter().chain(std::iter::once(grad.clone())).collect()
        };
        for direction in candidates {
            let slope = grad.dot(&direction);
            if !(slope > 0.0) {
                continue;
            }
            let mut step = 1.0;
            while step > 1e-20 {
                let cand = &y + &direction * step;
                let gc = dual_value(&c, &t, &r, &cand);
                if gc.is_finite() && gc >= g + 1e-4 * step * slope {
                    y = cand;
                    g = gc;
                    improved = true;
                    break;
                }
                step *= 0.5;
            }
            if improved {
                break;
            }
        }
        x = primal(&c, &r, &y);
        if !improved {
            // no ascent possible at working precision
            let residual = (&t - &c * &x).amax();
            if residual <= eps {
                break;
            }
            return Err(Error::NotConverged { iterations, residual });
        }
    }
    let mut tensor = DenseTensor::zeros(problem.reference.order(), problem.reference.dim());
    for (s, &o) in support.iter().enumerate() {
        tensor.data_mut()[o] = x[s];
    }
    let residual = problem.residual(&tensor);
    Ok(DenseSolution {
        kl: problem.kl(&tensor),
        tensor,
        residual,
        iterations,
        gradient_check: check,
    })
}

/// Perturbs the solution inside the constraint null space and support,
/// `trials` times, returning the smallest `KL(perturbed) - KL(solution)` over
/// the perturbations that stayed positive (`None` if none did).
pub fn local_optimality_probe(
    problem: &DenseProjectionProblem,
    solution: &DenseSolution,
    trials: usize,
    seed: u64,
) -> Option<f64> {
    let support = problem.support();
    let (c, _, _) = problem.system(&support);
    let cct_pinv = (&c * c.transpose()).pseudo_inverse(1e-12).ok()?;
    let x0 = DVector::from_iterator(support.len(), support.iter().map(|&o| solution.tensor.data()[o]));
    let base = solution.kl;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<f64> = None;
    for _ in 0..trials {
        let d = DVector::from_fn(support.len(), |_, _| rng.gen_range(-1.0..1.0));
        let d = &d - c.transpose() * (&cct_pinv * (&c * &d));
        let scale = 1e-3 * x0.min() / d.amax().max(1e-300);
        let x = &x0 + d * scale;
        if x.min() <= 0.0 {
            continue;
        }
        let mut t = DenseTensor::zeros(problem.reference.order(), problem.reference.dim());
        for (s, &o) in support.iter().enumerate() {
            t.data_mut()[o] = x[s];
        }
        let gap = problem.kl(&t) - base;
        best = Some(best.map_or(gap, |b: f64| b.min(gap)));
    }
    best
}

/// Joint broadcasting problem for one layer of order `k`: reference
/// `p_i A[i, r_2..r_k]` over ordered tuples, row masses `p_i` for supported
/// pivots, and receiver masses `p_j` with each tuple counting
/// `(occurrences of j among receivers) / (k - 1)`.
pub fn broadcast_problem(a: &AdjacencyLayers, k: usize, p: &[f64]) -> Result<DenseProjectionProblem> {
    if a.orientation() != Orientation::OneTail {
        return Err(Error::InvalidInput("broadcast problem needs a one-tail hypergraph".into()));
    }
    let layer = a
        .get(k)
        .ok_or_else(|| Error::InvalidInput(format!("no layer k={k}")))?;
    check_size(a.n(), k)?;
    let n = a.n();
    let mut reference = layer.to_dense();
    for o in 0..reference.data().len() {
        let idx = reference.index_of(o);
        reference.data_mut()[o] *= p[idx[0]];
    }
    let mut constraints = Vec::new();
    let row = layer.row_mass();
    for i in 0..n {
        if row[i] == 0.0 {
            continue;
        }
        let mut coef = DenseTensor::zeros(k, n);
        for o in 0..coef.data().len() {
            if coef.index_of(o)[0] == i {
                coef.data_mut()[o] = 1.0;
            }
        }
        constraints.push(LinearConstraint { coefficients: coef, target: p[i] });
    }
    for j in 0..n {
        let mut coef = DenseTensor::zeros(k, n);
        for o in 0..coef.data().len() {
            let idx = coef.index_of(o);
            let count = idx[1..].iter().filter(|&&r| r == j).count();
            coef.data_mut()[o] = count as f64 / (k - 1) as f64;
        }
        constraints.push(LinearConstraint { coefficients: coef, target: p[j] });
    }
    DenseProjectionProblem::new(reference, constraints)
}

/// Joint merging problem for one layer: reference `prod p_t A[t.., j]`, one
/// mass constraint per supported ordered tail tuple, and arrival masses `p_j`.
pub fn merge_problem(a: &AdjacencyLayers, k: usize, p: &[f64]) -> Result<DenseProjectionProblem> {
    if a.orientation() != Orientation::OneHead {
        return Err(Error::InvalidInput("merge problem needs a one-head hypergraph".into()));
    }
    let layer = a
        .get(k)
        .ok_or_else(|| Error::InvalidInput(format!("no layer k={k}")))?;
    check_size(a.n(), k)?;
    let n = a.n();
    let mut reference = layer.to_dense();
    for o in 0..reference.data().len() {
        let idx = reference.index_of(o);
        let w: f64 = idx[..k - 1].iter().map(|&t| p[t]).product();
        reference.data_mut()[o] *= w;
    }
    let mut constraints = Vec::new();
    let contexts = n.pow((k - 1) as u32);
    for ctx in 0..contexts {
        let offsets: Vec<usize> = (0..n).map(|j| ctx * n + j).collect();
        if offsets.iter().all(|&o| reference.data()[o] == 0.0) {
            continue;
        }
        let idx = reference.index_of(ctx * n);
        let w: f64 = idx[..k - 1].iter().map(|&t| p[t]).product();
        let mut coef = DenseTensor::zeros(k, n);
        for o in offsets {
            coef.data_mut()[o] = 1.0;
        }
        constraints.push(LinearConstraint { coefficients: coef, target: w });
    }
    for j in 0..n {
        let mut coef = DenseTensor::zeros(k, n);
        for ctx in 0..contexts {
            coef.data_mut()[ctx * n + j] = 1.0;
        }
        constraints.push(LinearConstraint { coefficients: coef, target: p[j] });
    }
    DenseProjectionProblem::new(reference, constraints)
}

fn check_size(n: usize, k: usize) -> Result<()> {
    if n > MAX_DIM || k > MAX_ORDER {
        return Err(Error::InvalidInput(format!(
            "dense oracle is limited to n <= {MAX_DIM}, k <= {MAX_ORDER}"
        )));
    }
    Ok(())
}
