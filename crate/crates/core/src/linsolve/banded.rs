use crate::assembly::SparseMatrix;
use crate::error::{Error, Result};

/// In-place LU factors of a banded matrix, computed without pivoting.
///
/// Only valid for matrices whose leading principal minors stay well away
/// from zero, e.g. symmetric positive definite ones or those with a positive
/// definite symmetric part.
#[derive(Clone, Debug)]
pub(crate) struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    /// Row-major band: `a[i][j]` at `i * (kl + ku + 1) + j + kl - i`.
    data: Vec<f64>,
}

impl BandedLu {
    /// Factors `Σ c_k A_k` for same-sized square sparse matrices.
    pub fn factor_combination(terms: &[(&SparseMatrix, f64)]) -> Result<Self> {
        let n = terms.first().map_or(0, |(a, _)| a.nrows());
        let band = terms.iter().map(|(a, _)| a.bandwidth()).max().unwrap_or(0);
        let (kl, ku) = (band, band);
        let width = kl + ku + 1;
        let mut data = vec![0.0; n * width];
        for (a, c) in terms {
            assert_eq!((a.nrows(), a.ncols()), (n, n));
            for i in 0..n {
                let (cols, vals) = a.row(i);
                for (&j, &v) in cols.iter().zip(vals) {
                    data[i * width + j + kl - i] += c * v;
                }
            }
        }
        let mut lu = Self { n, kl, ku, data };
        lu.factor()?;
        Ok(lu)
    }

    pub fn factor_sparse(a: &SparseMatrix) -> Result<Self> {
        Self::factor_combination(&[(a, 1.0)])
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.kl + self.ku + 1) + j + self.kl - i
    }

    fn factor(&mut self) -> Result<()> {
        let scale = self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for k in 0..self.n {
            let pivot = self.data[self.idx(k, k)];
            if !(pivot.abs() > 1e-14 * scale) {
                return Err(Error::Singular(format!("zero pivot {pivot:e} at row {k} of banded factorization")));
            }
            for i in k + 1..(k + self.kl + 1).min(self.n) {
                let ik = self.idx(i, k);
                let l = self.data[ik] / pivot;
                self.data[ik] = l;
                if l == 0.0 {
                    continue;
                }
                for j in k + 1..(k + self.ku + 1).min(self.n) {
                    let (ij, kj) = (self.idx(i, j), self.idx(k, j));
                    self.data[ij] -= l * self.data[kj];
                }
            }
        }
        Ok(())
    }

    /// Overwrites `x` with `A⁻¹ x`.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        for i in 0..self.n {
            let mut s = x[i];
            for k in i.saturating_sub(self.kl)..i {
                s -= self.data[self.idx(i, k)] * x[k];
            }
            x[i] = s;
        }
        for i in (0..self.n).rev() {
            let mut s = x[i];
            for j in i + 1..(i + self.ku + 1).min(self.n) {
                s -= self.data[self.idx(i, j)] * x[j];
            }
            x[i] = s / self.data[self.idx(i, i)];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn solves_nonsymmetric_banded_system() {
        let n = 9;
        let a = DMatrix::from_fn(n, n, |i, j| match i as i64 - j as i64 {
            0 => 4.0 + i as f64 * 0.1,
            -1 => 1.0,
            1 => -0.5,
            -2 => 0.25,
            _ => 0.0,
        });
        let lu = BandedLu::factor_sparse(&SparseMatrix::from_dense(&a)).unwrap();
        let b: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let mut x = b.clone();
        lu.solve_in_place(&mut x);
        let r = &a * DVector::from_column_slice(&x) - DVector::from_column_slice(&b);
        assert!(r.amax() < 1e-14);
    }

    #[test]
    fn combination_and_singular_detection() {
        let a = SparseMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (1, 1, 1.0)]);
        let b = SparseMatrix::from_triplets(2, 2, vec![(0, 1, 1.0), (1, 0, 1.0)]);
        let lu = BandedLu::factor_combination(&[(&a, 2.0), (&b, 1.0)]).unwrap();
        let mut x = vec![3.0, 3.0];
        lu.solve_in_place(&mut x);
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
        assert!(BandedLu::factor_combination(&[(&a, 0.0), (&b, 1.0)]).is_err());
    }
}
