//! Node-level dynamics and ergodicity diagnostics.
//!
//! Broadcasting kernels collapse to an `n x n` row-stochastic matrix
//! `P = sum_k lambda_k B^(k) x_{3..k} 1` ([`projected_kernel`]); distributions
//! evolve as `p_{t+1} = P^T p_t`. Merging kernels step through
//! [`crate::merge::merge_step`]. [`mixing_curve`] records `|p_t - p|_1` for
//! either.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::broadcast::BroadcastKernel;
use crate::error::{Error, Result};
use crate::merge::{merge_step, MergeKernel};
use crate::util::{l1_distance, linf_distance, weight};

/// Row-stochastic node chain induced by a broadcasting kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedKernel {
    matrix: DMatrix<f64>,
    stationary: Vec<f64>,
}

impl ProjectedKernel {
    pub fn new(matrix: DMatrix<f64>, stationary: Vec<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() != stationary.len() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: stationary.len(),
            });
        }
        Ok(Self { matrix, stationary })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn n(&self) -> usize {
        self.stationary.len()
    }

    /// `P^T p`.
    pub fn step(&self, p: &[f64]) -> Vec<f64> {
        (self.matrix.transpose() * DVector::from_column_slice(p)).as_slice().to_vec()
    }

    /// Largest deviation of a supported row sum from one.
    pub fn row_residual(&self) -> f64 {
        self.matrix
            .row_iter()
            .map(|r| r.sum())
            .filter(|&s| s != 0.0)
            .map(|s| (s - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Convex combination `sum_i w_i P_i`; the stationary vector is taken
    /// from the first component.
    pub fn mixture(parts: &[(f64, &ProjectedKernel)]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidInput("empty mixture".into()))?
            .1;
        let mut m = DMatrix::zeros(first.n(), first.n());
        for (w, k) in parts {
            if k.n() != first.n() {
                return Err(Error::DimensionMismatch {
                    expected: first.n(),
                    found: k.n(),
                });
            }
            m += &k.matrix * *w;
        }
        Self::new(m, first.stationary.clone())
    }
}

/// `P = sum_k lambda_k receiver_marginal(B^(k))`.
pub fn projected_kernel(kernel: &BroadcastKernel) -> ProjectedKernel {
    let n = kernel.n;
    let mut m = DMatrix::zeros(n, n);
    for (k, t) in &kernel.layers {
        m += t.receiver_marginal_matrix() * weight(&kernel.weights, *k);
    }
    ProjectedKernel {
        matrix: m,
        stationary: kernel.stationary.clone(),
    }
}

/// True when some power of `P` up to the Wielandt bound `n^2 - 2n + 2` is
/// entrywise positive.
pub fn is_primitive(p: &DMatrix<f64>) -> bool {
    let n = p.nrows();
    if n == 0 || !p.is_square() {
        return false;
    }
    let bound = n * n - 2 * n + 2;
    let mut s: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| p[(i, j)] > 0.0).collect()).collect();
    let mut power = 1;
    loop {
        if s.iter().all(|row| row.iter().all(|&x| x)) {
            return true;
        }
        if power >= bound {
            return false;
        }
        s = bool_product(&s, &s);
        power *= 2;
    }
}

pub(crate) fn bool_product(a: &[Vec<bool>], b: &[Vec<bool>]) -> Vec<Vec<bool>> {
    let n = a.len();
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).any(|l| a[i][l] && b[l][j])).collect())
        .collect()
}

/// `|P^T p - p|_inf`.
pub fn stationarity_residual(p_matrix: &DMatrix<f64>, p: &[f64]) -> f64 {
    let pushed = p_matrix.transpose() * DVector::from_column_slice(p);
    linf_distance(pushed.as_slice(), p)
}

/// Estimate of `1 - |lambda_2|`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GapEstimate {
    pub gap: f64,
    /// Modulus of the subdominant eigenvalue.
    pub modulus: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Subdominant eigenvalue modulus of a row-stochastic matrix by subspace
/// iteration on `P^T` restricted to zero-sum vectors (the complement of the
/// stationary direction). A block of up to eight directions with a Ritz step
/// resolves complex-conjugate and `+-` pairs as well as near ties.
pub fn spectral_gap(p: &DMatrix<f64>) -> GapEstimate {
    spectral_gap_with(p, 1e-10, 10_000)
}

pub fn spectral_gap_with(p: &DMatrix<f64>, tol: f64, max_iter: usize) -> GapEstimate {
    let n = p.nrows();
    if n <= 1 {
        return GapEstimate {
            gap: 1.0,
            modulus: 0.0,
            converged: true,
            iterations: 0,
        };
    }
    let pt = p.transpose();
    // several directions so that near-equal subdominant moduli do not stall
    let dim = (n - 1).min(8);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut q = DMatrix::from_fn(n, dim, |_, _| rng.gen::<f64>() - 0.5);
    let center = |m: &mut DMatrix<f64>| {
        for mut col in m.column_iter_mut() {
            let mean = col.sum() / n as f64;
            col.add_scalar_mut(-mean);
        }
    };
    let mut last = f64::NAN;
    let mut estimate = 0.0;
    for it in 1..=max_iter {
        center(&mut q);
        let Some(basis) = orthonormal(&q) else {
            return GapEstimate {
                gap: 1.0,
                modulus: 0.0,
                converged: true,
                iterations: it,
            };
        };
        let image = &pt * &basis;
        let h = basis.transpose() * &image;
        estimate = ritz_modulus(&h);
        if (estimate - last).abs() <= tol {
            return GapEstimate {
                gap: 1.0 - estimate,
                modulus: estimate,
                converged: true,
                iterations: it,
            };
        }
        last = estimate;
        q = image;
        if q.norm() < 1e-300 {
            return GapEstimate {
                gap: 1.0,
                modulus: 0.0,
                converged: true,
                iterations: it,
            };
        }
    }
    GapEstimate {
        gap: 1.0 - estimate,
        modulus: estimate,
        converged: false,
        iterations: max_iter,
    }
}

/// Gram-Schmidt; `None` when the first column vanishes. Later columns that
/// vanish are dropped.
fn orthonormal(q: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let scale = q.amax().max(f64::MIN_POSITIVE);
    let mut cols: Vec<DVector<f64>> = Vec::new();
    for c in q.column_iter() {
        let mut v = c.clone_owned();
        for b in &cols {
            let d = b.dot(&v);
            v -= b * d;
        }
        let norm = v.norm();
        if norm > 1e-13 * scale {
            cols.push(v / norm);
        }
    }
    if cols.is_empty() {
        None
    } else {
        Some(DMatrix::from_columns(&cols))
    }
}

fn ritz_modulus(h: &DMatrix<f64>) -> f64 {
    h.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Sequence of `(t, |p_t - p|_1)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MixingCurve {
    pub samples: Vec<(usize, f64)>,
    /// Largest per-step mass leak seen (merge dynamics only).
    pub max_leak: f64,
}

impl MixingCurve {
    /// CSV with header `t,l1_error`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,l1_error\n");
        for (t, e) in &self.samples {
            writeln!(out, "{t},{e:.16e}").unwrap();
        }
        out
    }
}

/// One step of node dynamics.
pub enum Stepper<'a> {
    Projected(&'a ProjectedKernel),
    Merge { kernel: &'a MergeKernel, renormalize: bool },
}

impl Stepper<'_> {
    /// Next distribution and leaked mass.
    pub fn step(&self, p: &[f64]) -> Result<(Vec<f64>, f64)> {
        match self {
            Stepper::Projected(k) => Ok((k.step(p), 0.0)),
            Stepper::Merge { kernel, renormalize } => {
                let out = merge_step(kernel, p, *renormalize)?;
                Ok((out.next, out.leaked))
            }
        }
    }
}

/// Every step is sampled up to this horizon; later steps on a geometric grid.
pub const DENSE_SAMPLING_LIMIT: usize = 10_000;

/// Iterates the stepper `steps` times from `p0`.
pub fn mixing_curve(stepper: &Stepper<'_>, p0: &[f64], p: &[f64], steps: usize) -> Result<MixingCurve> {
    if p0.len() != p.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            found: p0.len(),
        });
    }
    let mut curve = MixingCurve::default();
    let mut current = p0.to_vec();
    curve.samples.push((0, l1_distance(&current, p)));
    let mut next_sample = DENSE_SAMPLING_LIMIT;
    for t in 1..=steps {
        let (next, leak) = stepper.step(&current)?;
        curve.max_leak = curve.max_leak.max(leak);
        current = next;
        let keep = if t <= DENSE_SAMPLING_LIMIT {
            true
        } else if t >= next_sample || t == steps {
            next_sample = ((next_sample as f64) * 1.01).ceil() as usize;
            while next_sample <= t {
                next_sample = ((next_sample as f64) * 1.01).ceil() as usize;
            }
            true
        } else {
            false
        };
        if keep {
            curve.samples.push((t, l1_distance(&current, p)));
        }
    }
    Ok(curve)
}
