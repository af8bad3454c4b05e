use nalgebra::{Cholesky, DMatrix, DMatrixView, DVector, SymmetricEigen};

use super::banded::BandedLu;
use crate::assembly::{assemble_weighted_1d, SpaceTimeSpace, SparseMatrix, SystemOperators};
use crate::error::{Error, Result};
use crate::par;
use crate::quadrature::PointsPerSpan;

pub(crate) trait Preconditioner: Sync {
    /// `z = P⁻¹ r` on a block vector `[r₁; r₂]` of length `2N`.
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

pub(crate) struct Identity;

impl Preconditioner for Identity {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

/// Applies `f(k, row)` to every row `k` of the column-major `ns × nt` array
/// `data`, handing over the row as a contiguous slice.
fn for_each_row(data: &mut [f64], ns: usize, nt: usize, f: impl Fn(usize, &mut [f64]) + Sync + Send) {
    let mut rows = vec![0.0; ns * nt];
    for c in 0..nt {
        for k in 0..ns {
            rows[k * nt + c] = data[c * ns + k];
        }
    }
    par::for_each_chunk(&mut rows, nt, f);
    for c in 0..nt {
        for k in 0..ns {
            data[c * ns + k] = rows[k * nt + c];
        }
    }
}

/// `P = diag(M, M)` with `M⁻¹ = M_t⁻¹ ⊗ M_s⁻¹` applied through two banded
/// factorizations.
pub(crate) struct MassBlockDiagonal {
    mass_t: BandedLu,
    mass_s: BandedLu,
    ns: usize,
    nt: usize,
}

impl MassBlockDiagonal {
    pub fn new(ops: &SystemOperators) -> Result<Self> {
        let m_t = ops.m.time_factor();
        let m_s = ops.m.space_factor();
        Ok(Self {
            mass_t: BandedLu::factor_sparse(m_t)?,
            mass_s: BandedLu::factor_sparse(m_s)?,
            ns: m_s.nrows(),
            nt: m_t.nrows(),
        })
    }

    fn apply_half(&self, z: &mut [f64]) {
        par::for_each_chunk(z, self.ns, |_, col| self.mass_s.solve_in_place(col));
        for_each_row(z, self.ns, self.nt, |_, row| self.mass_t.solve_in_place(row));
    }
}

impl Preconditioner for MassBlockDiagonal {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
        let n = self.ns * self.nt;
        let (z1, z2) = z.split_at_mut(n);
        self.apply_half(z1);
        self.apply_half(z2);
    }
}

/// Eigenpairs of `A x = λ B x` for symmetric `A` and SPD `B`, with
/// `Vᵀ B V = I` and `Vᵀ A V = diag(λ)`.
pub(crate) fn generalized_symmetric_eigen(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let chol = Cholesky::new(b.clone()).ok_or_else(|| Error::Singular("mass factor is not positive definite".into()))?;
    let l = chol.l();
    let fail = || Error::Singular("triangular solve failed".into());
    let la = l.solve_lower_triangular(a).ok_or_else(fail)?;
    let c = l.solve_lower_triangular(&la.transpose()).ok_or_else(fail)?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let v = l.transpose().solve_upper_triangular(&eig.eigenvectors).ok_or_else(fail)?;
    Ok((eig.eigenvalues, v))
}

/// Exact inverse of the block operator for geometries whose metric is
/// separable in the parametric directions.
///
/// With `M_s = M₂ ⊗ E₁` and `K_s = M₂ ⊗ A₁ + K₂ ⊗ B₁` (`ζ₂` outer), a
/// generalized eigen-decomposition of `(K₂, M₂)` followed by one of
/// `(A₁ + λ₂ B₁, E₁)` per `ζ₂` mode yields `U` with `Uᵀ M_s U = I` and
/// `Uᵀ K_s U = Λ`. In that basis the block system splits into one banded
/// `n_t × n_t` problem per spatial mode:
///
/// ```text
/// (W_t + (λ² + λ) M_t) û = r̂₁ + (λ + 1) r̂₂,   v̂ = λ û − M_t⁻¹ r̂₂
/// ```
pub(crate) struct FastDiagonalization {
    n1: usize,
    n2: usize,
    nt: usize,
    v2: DMatrix<f64>,
    v1: Vec<DMatrix<f64>>,
    lambda: Vec<f64>,
    time: Vec<BandedLu>,
    mass_t: BandedLu,
}

impl FastDiagonalization {
    /// Returns `None` for geometries without a separable metric.
    pub fn new(space: &SpaceTimeSpace, points: PointsPerSpan, w_t: &SparseMatrix, m_t: &SparseMatrix) -> Result<Option<Self>> {
        let geo = space.geometry();
        if !geo.has_separable_metric() {
            return Ok(None);
        }
        let [s1, s2] = space.spatial();
        let dense = |m: SparseMatrix| m.to_dense();
        let e1 = dense(assemble_weighted_1d(s1, points, |z| geo.metric_profile(z).measure, (0, 0))?);
        let a1 = dense(assemble_weighted_1d(s1, points, |z| geo.metric_profile(z).grad_weight[0], (1, 1))?);
        let b1 = dense(assemble_weighted_1d(s1, points, |z| geo.metric_profile(z).grad_weight[1], (0, 0))?);
        let m2 = dense(assemble_weighted_1d(s2, points, |_| 1.0, (0, 0))?);
        let k2 = dense(assemble_weighted_1d(s2, points, |_| 1.0, (1, 1))?);

        let (lambda2, v2) = generalized_symmetric_eigen(&k2, &m2)?;
        let (n1, n2) = (s1.dof_count(), s2.dof_count());
        let modes = par::map_range(n2, |j| generalized_symmetric_eigen(&(&a1 + &b1 * lambda2[j]), &e1));
        let mut v1 = Vec::with_capacity(n2);
        let mut lambda = Vec::with_capacity(n1 * n2);
        for m in modes {
            let (l, v) = m?;
            lambda.extend(l.iter().copied());
            v1.push(v);
        }
        if let Some(bad) = lambda.iter().find(|l| !(**l > 0.0)) {
            return Err(Error::Singular(format!("spatial eigenvalue {bad:e} is not positive")));
        }
        let time = par::map_range(lambda.len(), |k| {
            let l = lambda[k];
            BandedLu::factor_combination(&[(w_t, 1.0), (m_t, l * l + l)])
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        Ok(Some(Self {
            n1,
            n2,
            nt: w_t.nrows(),
            v2,
            v1,
            lambda,
            time,
            mass_t: BandedLu::factor_sparse(m_t)?,
        }))
    }

    /// `x ← Uᵀ x` on one spatial vector.
    fn forward_to_modes(&self, x: &mut [f64]) {
        let y = DMatrixView::from_slice(x, self.n1, self.n2) * &self.v2;
        for j in 0..self.n2 {
            let c = self.v1[j].tr_mul(&y.column(j));
            x[j * self.n1..(j + 1) * self.n1].copy_from_slice(c.as_slice());
        }
    }

    /// `x ← U x` on one spatial vector.
    fn back_from_modes(&self, x: &mut [f64]) {
        let mut y = DMatrix::zeros(self.n1, self.n2);
        for j in 0..self.n2 {
            let xj = DVector::from_column_slice(&x[j * self.n1..(j + 1) * self.n1]);
            y.set_column(j, &(&self.v1[j] * xj));
        }
        x.copy_from_slice((y * self.v2.transpose()).as_slice());
    }
}

impl Preconditioner for FastDiagonalization {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let ns = self.n1 * self.n2;
        let nt = self.nt;
        let n = ns * nt;
        z.copy_from_slice(r);
        par::for_each_chunk(z, ns, |_, col| self.forward_to_modes(col));
        // interleave the two halves so each mode owns a contiguous [r̂₁ | r̂₂]
        let mut modes = vec![0.0; 2 * n];
        for c in 0..nt {
            for k in 0..ns {
                modes[k * 2 * nt + c] = z[c * ns + k];
                modes[k * 2 * nt + nt + c] = z[n + c * ns + k];
            }
        }
        par::for_each_chunk(&mut modes, 2 * nt, |k, buf| {
            let l = self.lambda[k];
            let (r1, r2) = buf.split_at_mut(nt);
            let mut u: Vec<f64> = r1.iter().zip(r2.iter()).map(|(a, b)| a + (l + 1.0) * b).collect();
            self.time[k].solve_in_place(&mut u);
            self.mass_t.solve_in_place(r2);
            for ((v, ui), out) in r2.iter_mut().zip(&u).zip(r1.iter_mut()) {
                *v = l * ui - *v;
                *out = *ui;
            }
        });
        for c in 0..nt {
            for k in 0..ns {
                z[c * ns + k] = modes[k * 2 * nt + c];
                z[n + c * ns + k] = modes[k * 2 * nt + nt + c];
            }
        }
        par::for_each_chunk(z, ns, |_, col| self.back_from_modes(col));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::AssembledSystem;
    use crate::geometry::GeometryMap;
    use crate::linsolve::{block_matvec, BlockSystem};

    #[test]
    fn generalized_eigen_diagonalizes() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        let b = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 4.0, 1.0, 0.0, 1.0, 4.0]);
        let (l, v) = generalized_symmetric_eigen(&a, &b).unwrap();
        let vbv = v.transpose() * &b * &v;
        let vav = v.transpose() * &a * &v;
        assert!((vbv - DMatrix::identity(3, 3)).amax() < 1e-14);
        assert!((vav - DMatrix::from_diagonal(&l)).amax() < 1e-14);
    }

    #[test]
    fn fast_diagonalization_inverts_block_operator() {
        for geo in [GeometryMap::UnitSquare, GeometryMap::ring()] {
            for p in 1..=3 {
                let space = SpaceTimeSpace::uniform_with_degrees(geo, 4, [p, p + 1], p, 1.5).unwrap();
                let asm = AssembledSystem::assemble(&space, &|_, _, _| 0.0, PointsPerSpan::default()).unwrap();
                let sys = BlockSystem::from_assembled(&asm).unwrap();
                let pre = FastDiagonalization::new(&space, asm.points, &asm.w_t, &asm.m_t).unwrap().unwrap();
                let x: Vec<f64> = (0..2 * space.dim()).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect();
                let ax = block_matvec(&sys, &x);
                let mut back = vec![0.0; x.len()];
                pre.apply(&ax, &mut back);
                let err = back.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(err < 1e-9, "{geo} p = {p}: {err:e}");
            }
        }
    }

    #[test]
    fn mass_block_inverts_mass() {
        let space = SpaceTimeSpace::uniform(GeometryMap::ring(), 3, 2, 1.0).unwrap();
        let asm = AssembledSystem::assemble(&space, &|_, _, _| 0.0, PointsPerSpan::default()).unwrap();
        let pre = MassBlockDiagonal::new(&asm.operators).unwrap();
        let n = space.dim();
        let x: Vec<f64> = (0..2 * n).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut mx = asm.operators.m.mul_vec(&x[..n]);
        mx.extend(asm.operators.m.mul_vec(&x[n..]));
        let mut back = vec![0.0; 2 * n];
        pre.apply(&mx, &mut back);
        assert!(back.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-10));
    }
}
