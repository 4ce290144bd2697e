use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Layer weights keyed by edge size.
pub type Weights = BTreeMap<usize, f64>;

/// Relative tolerance for accepting a weight vector or distribution that does
/// not sum to exactly one.
const SUM_TOLERANCE: f64 = 1e-2;

/// Checks that `p` is strictly positive and finite, returning it scaled to
/// sum to one together with the original sum.
pub(crate) fn positive_distribution(p: &[f64], n: usize, what: &str) -> Result<(Vec<f64>, f64)> {
    if p.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: p.len(),
        });
    }
    if let Some(j) = p.iter().position(|&x| !(x.is_finite() && x > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "{what} must be strictly positive; entry {} is {}",
            j + 1,
            p[j]
        )));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::InvalidInput(format!("{what} sums to {total}, expected 1")));
    }
    Ok((p.iter().map(|x| x / total).collect(), total))
}

/// Validates layer weights against the layer sizes present.
pub(crate) fn check_weights(weights: &Weights, present: impl Iterator<Item = usize>) -> Result<()> {
    let present: Vec<usize> = present.collect();
    for (&k, &w) in weights {
        if !present.contains(&k) {
            return Err(Error::InvalidInput(format!("weight given for absent layer k={k}")));
        }
        if !(w.is_finite() && w >= 0.0) {
            return Err(Error::InvalidInput(format!("weight for k={k} is {w}")));
        }
    }
    let total: f64 = weights.values().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("layer weights sum to {total}, expected 1")));
    }
    Ok(())
}

pub(crate) fn weight(weights: &Weights, k: usize) -> f64 {
    weights.get(&k).copied().unwrap_or(0.0)
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

pub fn linf_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Spread `max - min` of a slice (0 when empty).
pub(crate) fn spread(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    if lo.is_finite() {
        hi - lo
    } else {
        0.0
    }
}
