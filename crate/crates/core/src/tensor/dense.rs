/// Row-major dense order-`k` tensor over `n` nodes.
///
/// Only meant for tiny instances (oracle checks, tests), hence the size caps.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    order: usize,
    dim: usize,
    data: Vec<f64>,
}

impl DenseTensor {
    pub const MAX_DIM: usize = 8;
    pub const MAX_ORDER: usize = 5;

    pub fn zeros(order: usize, dim: usize) -> Self {
        assert!((1..=Self::MAX_ORDER).contains(&order), "order {order} outside dense range");
        assert!(dim <= Self::MAX_DIM, "dimension {dim} outside dense range");
        Self {
            order,
            dim,
            data: vec![0.0; dim.pow(order as u32)],
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.order);
        idx.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    /// Multi-index of a flat offset.
    pub fn index_of(&self, mut offset: usize) -> Vec<usize> {
        let mut idx = vec![0; self.order];
        for slot in idx.iter_mut().rev() {
            *slot = offset % self.dim;
            offset /= self.dim;
        }
        idx
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let o = self.offset(idx);
        self.data[o] = value;
    }

    /// Contracts every mode given `Some(vector)`; modes given `None` remain.
    /// The result keeps the surviving modes in their original order.
    pub fn contract(&self, vecs: &[Option<&[f64]>]) -> DenseTensor {
        assert_eq!(vecs.len(), self.order, "one entry per mode");
        let kept: Vec<usize> = (0..self.order).filter(|&m| vecs[m].is_none()).collect();
        let mut out = DenseTensor {
            order: kept.len(),
            dim: self.dim,
            data: vec![0.0; self.dim.pow(kept.len() as u32)],
        };
        for (offset, &value) in self.data.iter().enumerate() {
            if value == 0.0 {
                continue;
            }
            let idx = self.index_of(offset);
            let mut w = value;
            for (m, v) in vecs.iter().enumerate() {
                if let Some(v) = v {
                    w *= v[idx[m]];
                }
            }
            let o = kept.iter().fold(0, |acc, &m| acc * self.dim + idx[m]);
            out.data[o] += w;
        }
        out
    }
}
