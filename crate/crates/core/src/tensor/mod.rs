//! Canonical sparse storage for front- and back-symmetric nonnegative tensors.
//!
//! A front-symmetric tensor of order `k` is invariant under permutations of
//! its last `k - 1` modes; a back-symmetric one under permutations of its first
//! `k - 1` modes. Either way every entry is determined by one distinguished
//! index (the pivot, or the receiver) and the sorted multiset of the remaining
//! `k - 1` indices. [`SymSparseTensor`] stores exactly one value per such
//! canonical key: the value of a *single ordered index tuple*. Contractions
//! then carry explicit multiplicities (the number of distinct orderings of the
//! group), which is where the `(k-1)!` and `(k-2)!` factors come from.
//!
//! Node indices are 0-based throughout the library.

mod dense;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dense::DenseTensor;

/// Which modes of the tensor are interchangeable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Symmetry {
    /// Mode 1 is the pivot; modes 2..k are a symmetric receiver group.
    FrontSym,
    /// Modes 1..k-1 are a symmetric tail group; mode k is the receiver.
    BackSym,
}

/// Canonical key of one orbit of index tuples.
///
/// `group` is sorted ascending. Repeated indices are allowed at this level;
/// whether a hypergraph may produce them is decided by
/// [`crate::hypergraph::DirectedHypergraph`].
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CanonicalKey {
    distinguished: u32,
    group: Vec<u32>,
}

impl CanonicalKey {
    /// Builds a key, sorting `group`.
    pub fn new(distinguished: u32, mut group: Vec<u32>) -> Self {
        group.sort_unstable();
        Self { distinguished, group }
    }

    /// Pivot for front-symmetric tensors, receiver for back-symmetric ones.
    pub fn distinguished(&self) -> u32 {
        self.distinguished
    }

    /// The sorted symmetric index group.
    pub fn group(&self) -> &[u32] {
        &self.group
    }

    /// True when the group has no repeated index and does not contain the
    /// distinguished index.
    pub fn is_simple(&self) -> bool {
        self.group.windows(2).all(|w| w[0] < w[1])
            && self.group.binary_search(&self.distinguished).is_err()
    }
}

/// Number of distinct orderings of a sorted multiset.
pub fn orderings(group: &[u32]) -> f64 {
    let mut value = factorial(group.len());
    let mut i = 0;
    while i < group.len() {
        let mut j = i;
        while j < group.len() && group[j] == group[i] {
            j += 1;
        }
        value /= factorial(j - i);
        i = j;
    }
    value
}

/// Number of distinct orderings of `group` with one copy of `node` removed.
/// Equals the number of ordered arrangements of `group` that put `node` in a
/// fixed position. Zero when `node` is absent.
pub fn orderings_with_fixed(group: &[u32], node: u32) -> f64 {
    let count = multiplicity(group, node);
    if count == 0 {
        return 0.0;
    }
    orderings(group) * count as f64 / group.len() as f64
}

/// How many times `node` occurs in the sorted `group`.
pub fn multiplicity(group: &[u32], node: u32) -> usize {
    let start = group.partition_point(|&x| x < node);
    group[start..].iter().take_while(|&&x| x == node).count()
}

pub(crate) fn factorial(m: usize) -> f64 {
    (1..=m).fold(1.0, |acc, i| acc * i as f64)
}

/// Sparse front- or back-symmetric nonnegative tensor keyed canonically.
#[derive(Clone, Debug, PartialEq)]
pub struct SymSparseTensor {
    order: usize,
    dim: usize,
    symmetry: Symmetry,
    entries: BTreeMap<CanonicalKey, f64>,
}

impl SymSparseTensor {
    /// An empty tensor. `order` must be at least 2.
    pub fn new(order: usize, dim: usize, symmetry: Symmetry) -> Self {
        assert!(order >= 2, "tensor order must be at least 2");
        Self {
            order,
            dim,
            symmetry,
            entries: BTreeMap::new(),
        }
    }

    /// Builds a tensor from `(distinguished, group, ordered value)` triples.
    /// Later duplicates overwrite earlier ones.
    pub fn from_entries<I>(order: usize, dim: usize, symmetry: Symmetry, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u32, Vec<u32>, f64)>,
    {
        let mut t = Self::new(order, dim, symmetry);
        for (d, g, v) in entries {
            t.insert(CanonicalKey::new(d, g), v)?;
        }
        Ok(t)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Inserts the ordered-entry value for `key`. Zero removes the entry.
    pub fn insert(&mut self, key: CanonicalKey, value: f64) -> Result<()> {
        if key.group.len() != self.order - 1 {
            return Err(Error::InvalidKey(format!(
                "group {:?} has {} indices, order-{} tensor needs {}",
                key.group,
                key.group.len(),
                self.order,
                self.order - 1
            )));
        }
        let n = self.dim as u32;
        if key.distinguished >= n || key.group.iter().any(|&j| j >= n) {
            return Err(Error::InvalidKey(format!(
                "index out of range in ({}, {:?}) for dimension {}",
                key.distinguished, key.group, self.dim
            )));
        }
        if !value.is_finite() || value < 0.0 {
            return Err(Error::InvalidValue { value });
        }
        if value == 0.0 {
            self.entries.remove(&key);
        } else {
            self.entries.insert(key, value);
        }
        Ok(())
    }

    /// Ordered-entry value at `key` (zero when absent).
    pub fn get(&self, key: &CanonicalKey) -> f64 {
        self.entries.get(key).copied().unwrap_or(0.0)
    }

    /// Canonical entries in key order.
    pub fn iter(&self) -> impl Iterator<Item = (&CanonicalKey, f64)> + '_ {
        self.entries.iter().map(|(k, &v)| (k, v))
    }

    /// Same keys, values replaced by `f(key, value)`. Results that are zero
    /// are dropped.
    pub fn map_values<F>(&self, mut f: F) -> Self
    where
        F: FnMut(&CanonicalKey, f64) -> f64,
    {
        let entries = self
            .entries
            .iter()
            .filter_map(|(k, &v)| {
                let w = f(k, v);
                debug_assert!(w.is_finite() && w >= 0.0, "mapped value {w} invalid");
                (w != 0.0).then(|| (k.clone(), w))
            })
            .collect();
        Self {
            order: self.order,
            dim: self.dim,
            symmetry: self.symmetry,
            entries,
        }
    }

    /// True when both tensors have exactly the same set of keys.
    pub fn same_support(&self, other: &Self) -> bool {
        self.order == other.order
            && self.dim == other.dim
            && self.symmetry == other.symmetry
            && self.entries.len() == other.entries.len()
            && self.entries.keys().zip(other.entries.keys()).all(|(a, b)| a == b)
    }

    /// Sum of all ordered entries.
    pub fn total_mass(&self) -> f64 {
        self.iter().map(|(k, v)| v * orderings(&k.group)).sum()
    }

    /// Full contraction of a front-symmetric tensor over all receiver modes
    /// with all-ones vectors: one value per pivot.
    pub fn row_mass(&self) -> Vec<f64> {
        self.expect(Symmetry::FrontSym, "row_mass");
        let mut out = vec![0.0; self.dim];
        for (k, v) in self.iter() {
            out[k.distinguished as usize] += v * orderings(&k.group);
        }
        out
    }

    /// Fixes the pivot mode and one receiver mode, summing the remaining
    /// receiver modes against all-ones. For order 2 this is the matrix itself.
    pub fn receiver_marginal_matrix(&self) -> DMatrix<f64> {
        self.expect(Symmetry::FrontSym, "receiver_marginal_matrix");
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for (k, v) in self.iter() {
            let i = k.distinguished as usize;
            for_each_distinct(&k.group, |j| {
                out[(i, j as usize)] += v * orderings_with_fixed(&k.group, j);
            });
        }
        out
    }

    /// Back-symmetric tensor contracted with `v` over the receiver mode,
    /// evaluated once per canonical tail group.
    pub fn context_mass(&self, v: &[f64]) -> BTreeMap<Vec<u32>, f64> {
        self.expect(Symmetry::BackSym, "context_mass");
        assert_eq!(v.len(), self.dim, "vector length must equal tensor dimension");
        let mut out: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for (k, val) in self.iter() {
            *out.entry(k.group.clone()).or_insert(0.0) += val * v[k.distinguished as usize];
        }
        out
    }

    /// Homogeneous polynomial map: contracts every tail mode with `p`.
    pub fn polynomial_apply(&self, p: &[f64]) -> Vec<f64> {
        self.expect(Symmetry::BackSym, "polynomial_apply");
        assert_eq!(p.len(), self.dim, "vector length must equal tensor dimension");
        let mut out = vec![0.0; self.dim];
        for (k, v) in self.iter() {
            let prod: f64 = k.group.iter().map(|&u| p[u as usize]).product();
            out[k.distinguished as usize] += v * orderings(&k.group) * prod;
        }
        out
    }

    /// Multiplies entry `(pivot, S)` by `u[pivot] * prod_{r in S} v[r]`.
    pub fn scale_front(&self, u: &[f64], v: &[f64]) -> Self {
        self.expect(Symmetry::FrontSym, "scale_front");
        assert!(u.len() == self.dim && v.len() == self.dim, "scaling vector length");
        self.map_values(|k, val| {
            val * u[k.distinguished as usize] * k.group.iter().map(|&r| v[r as usize]).product::<f64>()
        })
    }

    /// Multiplies entry `(S, receiver)` by `tail_scale[S] * v[receiver]`.
    pub fn scale_back(&self, tail_scale: &BTreeMap<Vec<u32>, f64>, v: &[f64]) -> Result<Self> {
        self.expect(Symmetry::BackSym, "scale_back");
        assert_eq!(v.len(), self.dim, "scaling vector length");
        for k in self.entries.keys() {
            if !tail_scale.contains_key(&k.group) {
                return Err(Error::MissingPotential { tail: k.group.clone() });
            }
        }
        Ok(self.map_values(|k, val| val * tail_scale[&k.group] * v[k.distinguished as usize]))
    }

    /// Canonical tail groups present in a back-symmetric tensor, with the
    /// receivers attached to each.
    pub fn contexts(&self) -> BTreeMap<&[u32], Vec<(u32, f64)>> {
        self.expect(Symmetry::BackSym, "contexts");
        let mut out: BTreeMap<&[u32], Vec<(u32, f64)>> = BTreeMap::new();
        for (k, v) in self.iter() {
            out.entry(k.group.as_slice()).or_default().push((k.distinguished, v));
        }
        out
    }

    /// Dense copy with every ordering of each group filled in. Intended for
    /// oracle checks on small instances.
    pub fn to_dense(&self) -> DenseTensor {
        assert!(
            self.dim <= DenseTensor::MAX_DIM && self.order <= DenseTensor::MAX_ORDER,
            "dense fallback is limited to n <= {} and k <= {}",
            DenseTensor::MAX_DIM,
            DenseTensor::MAX_ORDER
        );
        let mut dense = DenseTensor::zeros(self.order, self.dim);
        let mut idx = vec![0usize; self.order];
        for (k, v) in self.iter() {
            for perm in distinct_permutations(&k.group) {
                match self.symmetry {
                    Symmetry::FrontSym => {
                        idx[0] = k.distinguished as usize;
                        for (slot, &r) in idx[1..].iter_mut().zip(&perm) {
                            *slot = r as usize;
                        }
                    }
                    Symmetry::BackSym => {
                        for (slot, &r) in idx[..self.order - 1].iter_mut().zip(&perm) {
                            *slot = r as usize;
                        }
                        idx[self.order - 1] = k.distinguished as usize;
                    }
                }
                dense.set(&idx, v);
            }
        }
        dense
    }

    fn expect(&self, symmetry: Symmetry, op: &str) {
        assert_eq!(self.symmetry, symmetry, "{op} requires a {symmetry:?} tensor");
    }
}

/// Calls `f` once per distinct value of a sorted slice.
pub(crate) fn for_each_distinct(group: &[u32], mut f: impl FnMut(u32)) {
    let mut last = None;
    for &j in group {
        if last != Some(j) {
            f(j);
            last = Some(j);
        }
    }
}

/// All distinct orderings of a sorted multiset, in lexicographic order.
pub fn distinct_permutations(group: &[u32]) -> Vec<Vec<u32>> {
    let mut current = group.to_vec();
    current.sort_unstable();
    let mut out = vec![current.clone()];
    // next lexicographic permutation
    while let Some(i) = (1..current.len()).rev().find(|&i| current[i - 1] < current[i]) {
        let j = (i..current.len()).rev().find(|&j| current[j] > current[i - 1]).unwrap();
        current.swap(i - 1, j);
        current[i..].reverse();
        out.push(current.clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn front(k: usize, n: usize, entries: Vec<(u32, Vec<u32>, f64)>) -> SymSparseTensor {
        SymSparseTensor::from_entries(k, n, Symmetry::FrontSym, entries).unwrap()
    }

    fn back(k: usize, n: usize, entries: Vec<(u32, Vec<u32>, f64)>) -> SymSparseTensor {
        SymSparseTensor::from_entries(k, n, Symmetry::BackSym, entries).unwrap()
    }

    #[test]
    fn multiplicities() {
        assert_eq!(orderings(&[1, 2, 3]), 6.0);
        assert_eq!(orderings(&[1, 1, 3]), 3.0);
        assert_eq!(orderings(&[]), 1.0);
        assert_eq!(orderings_with_fixed(&[1, 2, 3], 2), 2.0);
        assert_eq!(orderings_with_fixed(&[1, 1, 3], 1), 2.0);
        assert_eq!(orderings_with_fixed(&[1, 1, 3], 3), 1.0);
        assert_eq!(orderings_with_fixed(&[1, 1, 3], 0), 0.0);
        assert_eq!(distinct_permutations(&[1, 1, 2]).len(), 3);
        assert_eq!(distinct_permutations(&[0, 1, 2]).len(), 6);
    }

    #[test]
    fn row_mass_single_hyperedge() {
        let t = front(3, 3, vec![(0, vec![1, 2], 0.5)]);
        assert_eq!(t.row_mass(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn row_mass_empty_is_zero() {
        let t = SymSparseTensor::new(3, 4, Symmetry::FrontSym);
        assert_eq!(t.row_mass(), vec![0.0; 4]);
    }

    #[test]
    fn row_mass_two_receiver_sets() {
        let t = front(3, 4, vec![(0, vec![1, 2], 0.25), (0, vec![1, 3], 0.25)]);
        assert_eq!(t.row_mass()[0], 1.0);
        let dense = t.to_dense();
        let summed = dense.contract(&[None, Some(&[1.0; 4]), Some(&[1.0; 4])]);
        assert_eq!(summed.data()[0], 1.0);
    }

    #[test]
    fn receiver_marginal_examples() {
        let t = front(3, 3, vec![(0, vec![1, 2], 0.5)]);
        let m = t.receiver_marginal_matrix();
        assert_eq!([m[(0, 0)], m[(0, 1)], m[(0, 2)]], [0.0, 0.5, 0.5]);

        let t = front(2, 2, vec![(0, vec![1], 0.7)]);
        assert_eq!(t.receiver_marginal_matrix()[(0, 1)], 0.7);

        let t = front(4, 4, vec![(0, vec![1, 2, 3], 1.0 / 6.0)]);
        let m = t.receiver_marginal_matrix();
        for j in 1..4 {
            assert!((m[(0, j)] - 1.0 / 3.0).abs() < 1e-15);
        }
        let ones = [1.0; 4];
        let dense = t.to_dense().contract(&[None, None, Some(&ones), Some(&ones)]);
        for j in 0..4 {
            assert!((dense.data()[j] - m[(0, j)]).abs() < 1e-15);
        }
    }

    #[test]
    fn context_mass_examples() {
        let t = back(3, 4, vec![(2, vec![0, 1], 0.5), (3, vec![0, 1], 0.5)]);
        let m = t.context_mass(&[1.0; 4]);
        assert_eq!(m.len(), 1);
        assert_eq!(m[&vec![0, 1]], 1.0);
        let m = t.context_mass(&[1.0, 1.0, 2.0, 4.0]);
        assert_eq!(m[&vec![0, 1]], 3.0);
        assert!(SymSparseTensor::new(3, 4, Symmetry::BackSym).context_mass(&[1.0; 4]).is_empty());
    }

    #[test]
    fn polynomial_apply_examples() {
        let t = back(3, 3, vec![(2, vec![0, 1], 0.5)]);
        assert_eq!(t.polynomial_apply(&[0.5, 0.5, 0.0]), vec![0.0, 0.0, 0.25]);
        assert_eq!(t.polynomial_apply(&[0.0; 3]), vec![0.0; 3]);

        // k = 2 reduces to the transposed matrix product
        let rows = [[0.0, 0.3, 0.7], [0.5, 0.0, 0.5], [1.0, 0.0, 0.0]];
        let mut entries = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                entries.push((j as u32, vec![i as u32], v));
            }
        }
        let t = back(2, 3, entries);
        let p = [0.2, 0.3, 0.5];
        let got = t.polynomial_apply(&p);
        for j in 0..3 {
            let want: f64 = (0..3).map(|i| rows[i][j] * p[i]).sum();
            assert!((got[j] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn scale_front_examples() {
        let t = front(3, 3, vec![(0, vec![1, 2], 0.5)]);
        assert_eq!(t.scale_front(&[1.0; 3], &[1.0; 3]), t);
        let s = t.scale_front(&[2.0, 1.0, 1.0], &[1.0, 3.0, 4.0]);
        assert_eq!(s.get(&CanonicalKey::new(0, vec![1, 2])), 12.0);
        let z = SymSparseTensor::new(3, 3, Symmetry::FrontSym);
        assert!(z.scale_front(&[2.0; 3], &[3.0; 3]).is_empty());
    }

    #[test]
    fn scale_back_examples() {
        let t = back(3, 3, vec![(2, vec![0, 1], 0.5)]);
        let ones: BTreeMap<Vec<u32>, f64> = [(vec![0, 1], 1.0)].into_iter().collect();
        assert_eq!(t.scale_back(&ones, &[1.0; 3]).unwrap(), t);
        let u: BTreeMap<Vec<u32>, f64> = [(vec![0, 1], 4.0)].into_iter().collect();
        let s = t.scale_back(&u, &[1.0, 1.0, 0.5]).unwrap();
        assert_eq!(s.get(&CanonicalKey::new(2, vec![0, 1])), 1.0);
        let empty = SymSparseTensor::new(3, 3, Symmetry::BackSym);
        assert!(empty.scale_back(&BTreeMap::new(), &[1.0; 3]).unwrap().is_empty());
        assert!(matches!(
            t.scale_back(&BTreeMap::new(), &[1.0; 3]),
            Err(Error::MissingPotential { .. })
        ));
    }

    #[test]
    fn insert_validation() {
        let mut t = SymSparseTensor::new(3, 3, Symmetry::FrontSym);
        assert!(t.insert(CanonicalKey::new(0, vec![1]), 1.0).is_err());
        assert!(t.insert(CanonicalKey::new(0, vec![1, 3]), 1.0).is_err());
        assert!(t.insert(CanonicalKey::new(0, vec![1, 2]), -1.0).is_err());
        t.insert(CanonicalKey::new(0, vec![2, 1]), 1.0).unwrap();
        assert_eq!(t.get(&CanonicalKey::new(0, vec![1, 2])), 1.0);
        t.insert(CanonicalKey::new(0, vec![1, 2]), 0.0).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn simple_keys() {
        assert!(CanonicalKey::new(0, vec![2, 1]).is_simple());
        assert!(!CanonicalKey::new(1, vec![1, 2]).is_simple());
        assert!(!CanonicalKey::new(0, vec![2, 2]).is_simple());
    }
}
