//! Symmetric positive definite matrices in envelope (skyline) storage with an
//! in-place Cholesky factorisation. Row `k` stores columns `first[k]..=k`.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("matrix not positive definite at pivot {row} (value {pivot})")]
pub struct NotPositiveDefinite {
    pub row: usize,
    pub pivot: f64,
}

#[derive(Debug, Clone)]
pub struct SkylineMatrix {
    first: Vec<usize>,
    offset: Vec<usize>,
    values: Vec<f64>,
    factored: bool,
}

impl SkylineMatrix {
    /// Creates a zero matrix whose row `k` has its first stored column at `first[k] <= k`.
    pub fn new(first: Vec<usize>) -> Self {
        let mut offset = Vec::with_capacity(first.len() + 1);
        let mut total = 0;
        for (k, &f) in first.iter().enumerate() {
            assert!(f <= k, "envelope start beyond diagonal in row {k}");
            offset.push(total);
            total += k - f + 1;
        }
        offset.push(total);
        Self { first, offset, values: vec![0.0; total], factored: false }
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    pub fn stored(&self) -> usize {
        self.values.len()
    }

    /// Copies the entries of a matrix with the same envelope.
    pub fn copy_from(&mut self, other: &SkylineMatrix) {
        assert_eq!(self.first, other.first, "envelopes differ");
        self.values.copy_from_slice(&other.values);
        self.factored = other.factored;
    }

    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
        self.factored = false;
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && j >= self.first[i]);
        self.offset[i] + (j - self.first[i])
    }

    /// Adds `v` to entry (i, j) of the symmetric matrix; either triangle may be addressed.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let s = self.slot(r, c);
        self.values[s] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if c < self.first[r] {
            0.0
        } else {
            self.values[self.slot(r, c)]
        }
    }

    /// Replaces row and column `k` by those of the identity.
    pub fn pin(&mut self, k: usize) {
        let (start, end) = (self.offset[k], self.offset[k + 1]);
        self.values[start..end - 1].iter_mut().for_each(|v| *v = 0.0);
        self.values[end - 1] = 1.0;
        for r in k + 1..self.dim() {
            if self.first[r] <= k {
                let s = self.slot(r, k);
                self.values[s] = 0.0;
            }
        }
    }

    /// Pins every row `k` with `mask[k]` in one pass over the envelope.
    pub fn pin_mask(&mut self, mask: &[bool]) {
        assert_eq!(mask.len(), self.dim());
        for r in 0..self.dim() {
            let f = self.first[r];
            let row = &mut self.values[self.offset[r]..self.offset[r + 1]];
            let last = row.len() - 1;
            if mask[r] {
                row[..last].iter_mut().for_each(|v| *v = 0.0);
                row[last] = 1.0;
            } else {
                for (c, v) in row[..last].iter_mut().enumerate() {
                    if mask[f + c] {
                        *v = 0.0;
                    }
                }
            }
        }
    }

    /// y = A x (before factorisation).
    pub fn mul(&self, x: &[f64], y: &mut [f64]) {
        assert!(!self.factored);
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.dim() {
            let f = self.first[i];
            let row = &self.values[self.offset[i]..self.offset[i + 1]];
            let mut acc = 0.0;
            for (c, &a) in row[..row.len() - 1].iter().enumerate() {
                acc += a * x[f + c];
                y[f + c] += a * x[i];
            }
            y[i] += acc + row[row.len() - 1] * x[i];
        }
    }

    /// In-place LL^T factorisation.
    pub fn factor(&mut self) -> Result<(), NotPositiveDefinite> {
        let n = self.dim();
        for i in 0..n {
            let fi = self.first[i];
            let oi = self.offset[i];
            for j in fi..i {
                let fj = self.first[j];
                let oj = self.offset[j];
                let k0 = fi.max(fj);
                let li = &self.values[oi + (k0 - fi)..oi + (j - fi)];
                let lj = &self.values[oj + (k0 - fj)..oj + (j - fj)];
                let dot: f64 = li.iter().zip(lj).map(|(a, b)| a * b).sum();
                let djj = self.values[oj + (j - fj)];
                let s = oi + (j - fi);
                self.values[s] = (self.values[s] - dot) / djj;
            }
            let li = &self.values[oi..oi + (i - fi)];
            let dot: f64 = li.iter().map(|a| a * a).sum();
            let s = oi + (i - fi);
            let pivot = self.values[s] - dot;
            if !(pivot > 0.0) || !pivot.is_finite() {
                return Err(NotPositiveDefinite { row: i, pivot });
            }
            self.values[s] = pivot.sqrt();
        }
        self.factored = true;
        Ok(())
    }

    /// Solves A x = b in place using the factor.
    pub fn solve(&self, b: &mut [f64]) {
        assert!(self.factored, "solve called before factor");
        let n = self.dim();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.values[self.offset[i]..self.offset[i + 1]];
            let dot: f64 = row[..i - fi].iter().zip(&b[fi..i]).map(|(a, x)| a * x).sum();
            b[i] = (b[i] - dot) / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.values[self.offset[i]..self.offset[i + 1]];
            b[i] /= row[i - fi];
            let xi = b[i];
            for (c, &a) in row[..i - fi].iter().enumerate() {
                b[fi + c] -= a * xi;
            }
        }
    }
}
