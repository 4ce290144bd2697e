#![allow(dead_code)]

use std::collections::BTreeMap;

use hypermerw::hypergraph::{AdjacencyLayers, Orientation};
use hypermerw::tensor::{CanonicalKey, SymSparseTensor};
use hypermerw::Weights;
use rand::Rng;

/// All sorted multisets of size `m` over `0..n`.
pub fn multisets(n: u32, m: usize) -> Vec<Vec<u32>> {
    if m == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for rest in multisets(n, m - 1) {
        let lo = rest.last().copied().unwrap_or(0);
        for x in lo..n {
            let mut g = rest.clone();
            g.push(x);
            out.push(g);
        }
    }
    out
}

/// Strictly positive random distribution with entries within a factor 3.
pub fn random_p(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|x| x / s).collect()
}

/// Fully supported layer (every multiset group, every distinguished node)
/// with random positive values, normalized to be row- or context-stochastic.
pub fn full_layer(rng: &mut impl Rng, orientation: Orientation, n: usize, k: usize) -> SymSparseTensor {
    let mut t = SymSparseTensor::new(k, n, orientation.symmetry());
    match orientation {
        Orientation::OneTail => {
            for i in 0..n as u32 {
                let groups = multisets(n as u32, k - 1);
                let vals: Vec<f64> = groups.iter().map(|_| rng.gen_range(0.5..2.0)).collect();
                let total: f64 = groups
                    .iter()
                    .zip(&vals)
                    .map(|(g, v)| v * hypermerw::tensor::orderings(g))
                    .sum();
                for (g, v) in groups.into_iter().zip(vals) {
                    t.insert(CanonicalKey::new(i, g), v / total).unwrap();
                }
            }
        }
        Orientation::OneHead => {
            for g in multisets(n as u32, k - 1) {
                let vals: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
                let total: f64 = vals.iter().sum();
                for (j, v) in vals.into_iter().enumerate() {
                    t.insert(CanonicalKey::new(j as u32, g.clone()), v / total).unwrap();
                }
            }
        }
    }
    t
}

pub struct Instance {
    pub layers: AdjacencyLayers,
    pub p: Vec<f64>,
    pub weights: Weights,
}

/// Random full-support instance with one or two layers drawn from `{2, 3}`.
pub fn random_instance(rng: &mut impl Rng, orientation: Orientation, n: usize, sizes: &[usize]) -> Instance {
    let mut layers = BTreeMap::new();
    for &k in sizes {
        layers.insert(k, full_layer(rng, orientation, n, k));
    }
    let weights: Weights = if sizes.len() == 1 {
        [(sizes[0], 1.0)].into()
    } else {
        let w = rng.gen_range(0.2..0.8);
        [(sizes[0], w), (sizes[1], 1.0 - w)].into()
    };
    Instance {
        layers: AdjacencyLayers::from_layers(orientation, n, layers).unwrap(),
        p: random_p(rng, n),
        weights,
    }
}

/// Layer sizes for the i-th random instance: cycles through {2}, {3}, {2,3}.
pub fn sizes_for(i: usize) -> &'static [usize] {
    match i % 3 {
        0 => &[2],
        1 => &[3],
        _ => &[2, 3],
    }
}
