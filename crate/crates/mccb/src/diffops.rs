//! Banded differential operators over the trajectory time axis: graph
//! Laplacian, first-difference incidence operator, and identity.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    Laplacian,
    Tangent,
    Identity,
}

/// A T x T banded operator (bandwidth <= 1) applied along the time axis.
///
/// Laplacian rows: first (1, -1), interior (-0.5, 1, -0.5), last (-1, 1).
/// Every row sums to zero; the constant vector spans the null space.
///
/// Tangent rows: (-1, 1) shifted, with last row (0, ..., 0, -1).
/// Upper bidiagonal with unit-magnitude diagonal, hence invertible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiffOperator {
    kind: OperatorKind,
    horizon: usize,
}

impl DiffOperator {
    pub fn build(kind: OperatorKind, horizon: usize) -> Result<Self> {
        if horizon < 3 {
            return Err(Error::InvalidArgument(format!(
                "operator horizon must be >= 3, got {horizon}"
            )));
        }
        Ok(Self { kind, horizon })
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Nonzero entries (column, coefficient) of row `t`.
    pub fn row_entries(&self, t: usize) -> Vec<(usize, f64)> {
        let last = self.horizon - 1;
        match self.kind {
            OperatorKind::Identity => vec![(t, 1.0)],
            OperatorKind::Tangent => {
                if t < last {
                    vec![(t, -1.0), (t + 1, 1.0)]
                } else {
                    vec![(last, -1.0)]
                }
            }
            OperatorKind::Laplacian => {
                if t == 0 {
                    vec![(0, 1.0), (1, -1.0)]
                } else if t == last {
                    vec![(last - 1, -1.0), (last, 1.0)]
                } else {
                    vec![(t - 1, -0.5), (t, 1.0), (t + 1, -0.5)]
                }
            }
        }
    }

    /// Banded application to a T x n sample matrix.
    pub fn apply_matrix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.horizon {
            return Err(Error::DimensionMismatch(format!(
                "operator horizon {} vs trajectory horizon {}",
                self.horizon,
                x.nrows()
            )));
        }
        let n = x.ncols();
        let mut out = DMatrix::zeros(self.horizon, n);
        for t in 0..self.horizon {
            for (col, coeff) in self.row_entries(t) {
                for d in 0..n {
                    out[(t, d)] += coeff * x[(col, d)];
                }
            }
        }
        Ok(out)
    }

    pub fn apply(&self, x: &Trajectory) -> Result<Trajectory> {
        Trajectory::new(self.apply_matrix(x.samples())?, x.dt())
    }

    /// Dense materialization; used for oracle checks and small systems.
    pub fn dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.horizon, self.horizon);
        for t in 0..self.horizon {
            for (col, coeff) in self.row_entries(t) {
                m[(t, col)] = coeff;
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn laplacian_t4_matches_printed_matrix() {
        let l = DiffOperator::build(OperatorKind::Laplacian, 4).unwrap().dense();
        let expected = dmatrix![
            1.0, -1.0, 0.0, 0.0;
            -0.5, 1.0, -0.5, 0.0;
            0.0, -0.5, 1.0, -0.5;
            0.0, 0.0, -1.0, 1.0
        ];
        assert_eq!(l, expected);
    }

    #[test]
    fn tangent_t3_matches_printed_matrix() {
        let g = DiffOperator::build(OperatorKind::Tangent, 3).unwrap().dense();
        let expected = dmatrix![
            -1.0, 1.0, 0.0;
            0.0, -1.0, 1.0;
            0.0, 0.0, -1.0
        ];
        assert_eq!(g, expected);
    }

    #[test]
    fn identity_t3() {
        let i = DiffOperator::build(OperatorKind::Identity, 3).unwrap().dense();
        assert_eq!(i, DMatrix::identity(3, 3));
    }

    #[test]
    fn rejects_small_horizon() {
        assert!(DiffOperator::build(OperatorKind::Laplacian, 2).is_err());
    }

    #[test]
    fn laplacian_on_line() {
        let x = DMatrix::from_column_slice(4, 1, &[0.0, 1.0, 2.0, 3.0]);
        let op = DiffOperator::build(OperatorKind::Laplacian, 4).unwrap();
        let y = op.apply_matrix(&x).unwrap();
        assert_eq!(y.as_slice(), &[-1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn tangent_on_line() {
        let x = DMatrix::from_column_slice(4, 1, &[0.0, 1.0, 2.0, 3.0]);
        let op = DiffOperator::build(OperatorKind::Tangent, 4).unwrap();
        let y = op.apply_matrix(&x).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 1.0, 1.0, -3.0]);
    }

    #[test]
    fn laplacian_hat() {
        let x = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 0.0]);
        let op = DiffOperator::build(OperatorKind::Laplacian, 3).unwrap();
        let y = op.apply_matrix(&x).unwrap();
        assert_eq!(y.as_slice(), &[-1.0, 1.0, -1.0]);
    }

    #[test]
    fn laplacian_annihilates_constants() {
        let x = DMatrix::from_element(17, 3, 4.2);
        let op = DiffOperator::build(OperatorKind::Laplacian, 17).unwrap();
        let y = op.apply_matrix(&x).unwrap();
        assert!(y.iter().all(|v| v.abs() == 0.0));
    }

    #[test]
    fn banded_apply_matches_dense_multiply() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for &kind in &[OperatorKind::Laplacian, OperatorKind::Tangent, OperatorKind::Identity] {
            for t in [3usize, 10, 33, 50] {
                let x = DMatrix::from_fn(t, 2, |_, _| rng.gen_range(-1.0..1.0));
                let op = DiffOperator::build(kind, t).unwrap();
                let banded = op.apply_matrix(&x).unwrap();
                let dense = op.dense() * &x;
                assert!((banded - dense).abs().max() <= 1e-14);
            }
        }
    }

    #[test]
    fn horizon_mismatch_rejected() {
        let x = DMatrix::zeros(5, 1);
        let op = DiffOperator::build(OperatorKind::Tangent, 4).unwrap();
        assert!(op.apply_matrix(&x).is_err());
    }
}
