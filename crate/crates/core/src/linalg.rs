//! Thin wrapper over the sparse Cholesky factorization.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Llt;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use crate::error::{Error, Result};

/// Factorized symmetric positive definite matrix.
pub struct SpdFactor {
    n: usize,
    llt: Llt<usize, f64>,
}

impl SpdFactor {
    /// Factor the matrix given by lower-triangle (or full) triplets; duplicate
    /// entries are summed.
    pub fn new(n: usize, triplets: &[(usize, usize, f64)]) -> Result<SpdFactor> {
        faer::set_global_parallelism(faer::Par::Seq);
        let lower: Vec<Triplet<usize, usize, f64>> = triplets
            .iter()
            .filter(|(r, c, _)| r >= c)
            .map(|&(r, c, v)| Triplet::new(r, c, v))
            .collect();
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &lower)
            .map_err(|e| Error::Linear(format!("sparse assembly: {e:?}")))?;
        let llt = mat
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::Linear(format!("cholesky: {e:?}")))?;
        Ok(SpdFactor { n, llt })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let b = Mat::<f64>::from_fn(self.n, 1, |i, _| rhs[i]);
        let x = self.llt.solve(&b);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_tridiagonal() {
        let n = 5;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        let f = SpdFactor::new(n, &t).unwrap();
        let x = f.solve(&[1.0, 0.0, 0.0, 0.0, 1.0]);
        for v in x {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }
}
