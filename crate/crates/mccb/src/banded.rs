//! Symmetric banded matrix storage and Cholesky factorization.

/// Symmetric positive definite matrix stored by its lower bands.
/// Entry (i, j) with 0 <= i - j <= bw lives at `data[j * (bw + 1) + (i - j)]`.
#[derive(Debug, Clone)]
pub struct BandedSym {
    dim: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedSym {
    pub fn zeros(dim: usize, bw: usize) -> Self {
        Self {
            dim,
            bw,
            data: vec![0.0; dim * (bw + 1)],
        }
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i >= j && i - j <= self.bw);
        j * (self.bw + 1) + (i - j)
    }

    /// Value at (i, j); symmetric lookup, zero outside the band.
    #[cfg(test)]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        if hi - lo > self.bw {
            0.0
        } else {
            self.data[self.slot(hi, lo)]
        }
    }

    /// Adds `v` at (i, j) in the lower triangle (i >= j).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let idx = self.slot(i, j);
        self.data[idx] += v;
    }

    #[cfg(test)]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let idx = self.slot(i, j);
        self.data[idx] = v;
    }

    #[cfg(test)]
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }

    /// In-place banded Cholesky. Returns None when the matrix is not
    /// positive definite.
    pub fn cholesky(mut self) -> Option<BandedChol> {
        let (dim, bw) = (self.dim, self.bw);
        for j in 0..dim {
            let start = j.saturating_sub(bw);
            let mut ajj = self.data[self.slot(j, j)];
            for k in start..j {
                let l = self.data[self.slot(j, k)];
                ajj -= l * l;
            }
            if !(ajj > 0.0) || !ajj.is_finite() {
                return None;
            }
            let ljj = ajj.sqrt();
            let jj = self.slot(j, j);
            self.data[jj] = ljj;
            let row_end = (j + bw + 1).min(dim);
            for i in (j + 1)..row_end {
                let mut v = self.data[self.slot(i, j)];
                let kstart = i.saturating_sub(bw).max(start);
                for k in kstart..j {
                    v -= self.data[self.slot(i, k)] * self.data[self.slot(j, k)];
                }
                let idx = self.slot(i, j);
                self.data[idx] = v / ljj;
            }
        }
        Some(BandedChol { factor: self })
    }
}

/// Lower Cholesky factor in banded storage.
#[derive(Debug, Clone)]
pub struct BandedChol {
    factor: BandedSym,
}

impl BandedChol {
    /// Solves A x = b where A = L L^T.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let f = &self.factor;
        let (dim, bw) = (f.dim, f.bw);
        assert_eq!(b.len(), dim);
        let mut x = b.to_vec();
        // forward: L y = b
        for i in 0..dim {
            let start = i.saturating_sub(bw);
            let mut v = x[i];
            for k in start..i {
                v -= f.data[f.slot(i, k)] * x[k];
            }
            x[i] = v / f.data[f.slot(i, i)];
        }
        // backward: L^T x = y
        for i in (0..dim).rev() {
            let end = (i + bw + 1).min(dim);
            let mut v = x[i];
            for k in (i + 1)..end {
                v -= f.data[f.slot(k, i)] * x[k];
            }
            x[i] = v / f.data[f.slot(i, i)];
        }
        x
    }
}
