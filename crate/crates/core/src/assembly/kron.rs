use std::sync::Arc;

use nalgebra::DMatrix;

use super::sparse::SparseMatrix;
use crate::par;

/// Lazy `scale · (A ⊗ B)` with `A` acting on time and `B` on space.
///
/// Vectors are ordered with the spatial index fastest: entry `i_t · n_s + i_s`.
/// Viewing `x` as the column-major `n_s × n_t` matrix `X`, the product is
/// `vec(B X Aᵀ)`.
#[derive(Clone, Debug)]
pub struct KroneckerOperator {
    time: Arc<SparseMatrix>,
    space: Arc<SparseMatrix>,
    scale: f64,
}

impl KroneckerOperator {
    pub fn new(time: Arc<SparseMatrix>, space: Arc<SparseMatrix>, scale: f64) -> Self {
        Self { time, space, scale }
    }

    pub fn time_factor(&self) -> &SparseMatrix {
        &self.time
    }

    pub fn space_factor(&self) -> &SparseMatrix {
        &self.space
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn dim(&self) -> usize {
        self.time.nrows() * self.space.nrows()
    }

    /// `y = scale (A ⊗ B) x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let ns = self.space.nrows();
        let nt = self.time.nrows();
        assert_eq!(x.len(), self.time.ncols() * self.space.ncols());
        assert_eq!(y.len(), nt * ns);
        let ms = self.space.ncols();
        // Z = B X, column by column
        let mut z = vec![0.0; ns * self.time.ncols()];
        par::for_each_chunk(&mut z, ns, |j, col| {
            self.space.matvec(&x[j * ms..(j + 1) * ms], col);
        });
        // Y[:, i] = scale Σ_j A_ij Z[:, j]
        par::for_each_chunk(y, ns, |i, out| {
            out.fill(0.0);
            let (cols, vals) = self.time.row(i);
            for (&j, &a) in cols.iter().zip(vals) {
                let zj = &z[j * ns..(j + 1) * ns];
                for (o, zv) in out.iter_mut().zip(zj) {
                    *o += a * zv;
                }
            }
            if self.scale != 1.0 {
                out.iter_mut().for_each(|o| *o *= self.scale);
            }
        });
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply(x, &mut y);
        y
    }

    /// Dense `scale (A ⊗ B)`; for tests and small oracles only.
    pub fn materialize(&self) -> DMatrix<f64> {
        dense_kronecker(&self.time.to_dense(), &self.space.to_dense()) * self.scale
    }
}

/// Dense Kronecker product `A ⊗ B`.
pub fn dense_kronecker(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    DMatrix::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}
