//! Sparse direct solves of `(I - P) x = b` over transient states.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{Error, Result};

/// Residual bound, relative to `max(1, |x|_inf)`.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;
const MAX_REFINEMENTS: usize = 8;

/// LU factorization of `I - P` where `P` is substochastic over `n` states.
/// The same factorization answers forward and transposed solves.
pub struct TransientSystem<'a> {
    rows: &'a [Vec<(usize, f64)>],
    lu: Lu<usize, f64>,
}

impl<'a> TransientSystem<'a> {
    /// `rows[i]` lists `(j, P[i][j])`; entries may repeat and are summed.
    pub fn new(rows: &'a [Vec<(usize, f64)>]) -> Result<Self> {
        let n = rows.len();
        let mut triplets = Vec::with_capacity(n + rows.iter().map(Vec::len).sum::<usize>());
        for (i, row) in rows.iter().enumerate() {
            triplets.push(Triplet::new(i, i, 1.0));
            for &(j, p) in row {
                triplets.push(Triplet::new(i, j, -p));
            }
        }
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| Error::Solver(format!("matrix assembly: {e:?}")))?;
        let lu = a
            .sp_lu()
            .map_err(|e| Error::Solver(format!("factorization: {e:?}")))?;
        Ok(TransientSystem { rows, lu })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Solves `(I - P) x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.refine(b, false)
    }

    /// Solves `(I - P)^T y = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.refine(b, true)
    }

    fn raw(&self, b: &[f64], transpose: bool) -> Vec<f64> {
        let mut m = Mat::<f64>::from_fn(b.len(), 1, |i, _| b[i]);
        if transpose {
            self.lu.solve_transpose_in_place(m.as_mut());
        } else {
            self.lu.solve_in_place(m.as_mut());
        }
        (0..b.len()).map(|i| m[(i, 0)]).collect()
    }

    /// `b - A x` for `A = I - P` or its transpose.
    fn residual(&self, x: &[f64], b: &[f64], transpose: bool) -> Vec<f64> {
        let mut r: Vec<f64> = b.iter().zip(x).map(|(bi, xi)| bi - xi).collect();
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, p) in row {
                if transpose {
                    r[j] += p * x[i];
                } else {
                    r[i] += p * x[j];
                }
            }
        }
        r
    }

    fn refine(&self, b: &[f64], transpose: bool) -> Result<Vec<f64>> {
        assert_eq!(b.len(), self.len(), "right-hand side has wrong length");
        let mut x = self.raw(b, transpose);
        for _ in 0..MAX_REFINEMENTS {
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Solver("non-finite solution".into()));
            }
            let r = self.residual(&x, b, transpose);
            let scale = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let err = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if err <= RESIDUAL_TOLERANCE * scale {
                return Ok(x);
            }
            let dx = self.raw(&r, transpose);
            for (xi, di) in x.iter_mut().zip(dx) {
                *xi += di;
            }
        }
        let r = self.residual(&x, b, transpose);
        let scale = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let err = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if err <= RESIDUAL_TOLERANCE * scale {
            Ok(x)
        } else {
            Err(Error::Solver(format!("residual {err:e} above tolerance")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_self_loop() {
        let rows = vec![vec![(0, 0.5)]];
        let sys = TransientSystem::new(&rows).unwrap();
        assert!((sys.solve(&[1.0]).unwrap()[0] - 2.0).abs() < 1e-14);
        assert!((sys.solve_transpose(&[1.0]).unwrap()[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn transpose_solve_matches_dense() {
        // 0 -> 1 w.p. 0.7, 1 -> 0 w.p. 0.2, rest to an implicit goal
        let rows = vec![vec![(1, 0.7)], vec![(0, 0.2)]];
        let sys = TransientSystem::new(&rows).unwrap();
        let x = sys.solve(&[1.0, 1.0]).unwrap();
        // x0 = 1 + 0.7 x1, x1 = 1 + 0.2 x0
        let x0 = 1.7 / (1.0 - 0.14);
        assert!((x[0] - x0).abs() < 1e-13);
        let y = sys.solve_transpose(&[1.0, 0.0]).unwrap();
        // y0 = 1 + 0.2 y1, y1 = 0.7 y0
        assert!((y[0] - 1.0 / 0.86).abs() < 1e-13);
        assert!((y[1] - 0.7 / 0.86).abs() < 1e-13);
    }

    #[test]
    fn singular_system_is_an_error() {
        let rows = vec![vec![(0, 1.0)]];
        let res = TransientSystem::new(&rows).and_then(|s| s.solve(&[1.0]));
        assert!(res.is_err());
    }
}
