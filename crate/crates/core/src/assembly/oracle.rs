use nalgebra::{DMatrix, DVector};

use super::{SourceFn, SpaceTimeSpace};
use crate::bspline::SplineSpace1D;
use crate::error::{Error, Result};
use crate::quadrature::{PointsPerSpan, QuadratureRule1D};

/// Size limit of the dense reference assembly.
pub const ORACLE_MAX_DOF: usize = 400;

/// Dense `W`, `K`, `M` and load assembled without any Kronecker shortcut.
#[derive(Clone, Debug)]
pub struct DenseSpaceTimeSystem {
    pub w: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub load: DVector<f64>,
}

impl DenseSpaceTimeSystem {
    /// The materialized block matrix `[[W, K + M], [K, −M]]`.
    pub fn block_matrix(&self) -> DMatrix<f64> {
        let n = self.w.nrows();
        let mut a = DMatrix::zeros(2 * n, 2 * n);
        a.view_mut((0, 0), (n, n)).copy_from(&self.w);
        a.view_mut((0, n), (n, n)).copy_from(&(&self.k + &self.m));
        a.view_mut((n, 0), (n, n)).copy_from(&self.k);
        a.view_mut((n, n), (n, n)).copy_from(&(-&self.m));
        a
    }
}

/// Nonzero functions at a point: reduced indices, values and first derivatives.
fn active(space: &SplineSpace1D, x: f64) -> Result<Vec<(usize, f64, f64)>> {
    let d = space.knots().eval_basis_derivs(x, 1)?;
    Ok((0..d.rows[0].len())
        .filter_map(|k| space.reduced_index(d.first + k).map(|i| (i, d.rows[0][k], d.rows[1][k])))
        .collect())
}

/// Reference assembly by a triple loop over space-time quadrature points.
///
/// Every entry of `W`, `K`, `M` is accumulated from the integrands
/// `∂ₜB_j B_i`, `∇B_j·∇B_i` and `B_j B_i` of the full space-time basis
/// functions; the load integrates `f B_i`. Refuses `N > ORACLE_MAX_DOF`.
pub fn assemble_dense_spacetime_oracle(
    space: &SpaceTimeSpace,
    f: SourceFn<'_>,
    points: PointsPerSpan,
) -> Result<DenseSpaceTimeSystem> {
    let n = space.dim();
    if n > ORACLE_MAX_DOF {
        return Err(Error::TooLarge {
            size: n,
            limit: ORACLE_MAX_DOF,
        });
    }
    let [s1, s2] = space.spatial();
    let st = space.temporal();
    let rule = |s: &SplineSpace1D| QuadratureRule1D::per_span(s.knots(), points.for_degree(s.degree()));
    let (r1, r2, rt) = (rule(s1)?, rule(s2)?, rule(st)?);
    let (n1, ns) = (s1.dof_count(), space.n_space());
    let geo = space.geometry();
    let big_t = space.final_time();

    let mut sys = DenseSpaceTimeSystem {
        w: DMatrix::zeros(n, n),
        k: DMatrix::zeros(n, n),
        m: DMatrix::zeros(n, n),
        load: DVector::zeros(n),
    };
    // (index, value, ∂ₜ, ∇)
    let mut funcs: Vec<(usize, f64, f64, [f64; 2])> = Vec::new();
    for (&tau, &wt) in rt.nodes().iter().zip(rt.weights()) {
        let bt = active(st, tau)?;
        for (&z2, &w2) in r2.nodes().iter().zip(r2.weights()) {
            let b2 = active(s2, z2)?;
            for (&z1, &w1) in r1.nodes().iter().zip(r1.weights()) {
                let b1 = active(s1, z1)?;
                let z = [z1, z2];
                let jac = geo.jacobian(z);
                let x = geo.map_point(z);
                let t = big_t * tau;
                let weight = wt * big_t * w2 * w1 * jac.det.abs();
                funcs.clear();
                for &(it, vt, dt) in &bt {
                    for &(i2, v2, d2) in &b2 {
                        for &(i1, v1, d1) in &b1 {
                            let grad = jac.pullback(z, [d1 * v2 * vt, v1 * d2 * vt])?;
                            funcs.push((it * ns + i2 * n1 + i1, v1 * v2 * vt, v1 * v2 * dt / big_t, grad));
                        }
                    }
                }
                let fv = f(x[0], x[1], t);
                if !fv.is_finite() {
                    return Err(Error::NonFinite {
                        point: [x[0], x[1], t],
                        value: fv,
                    });
                }
                for &(i, vi, _, gi) in &funcs {
                    sys.load[i] += weight * fv * vi;
                    for &(j, vj, dj, gj) in &funcs {
                        sys.w[(i, j)] += weight * dj * vi;
                        sys.k[(i, j)] += weight * (gj[0] * gi[0] + gj[1] * gi[1]);
                        sys.m[(i, j)] += weight * vj * vi;
                    }
                }
            }
        }
    }
    Ok(sys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::AssembledSystem;
    use crate::geometry::GeometryMap;

    fn rel_max(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).abs().max() / b.abs().max()
    }

    #[test]
    fn matches_kronecker_composition() {
        for (geo, ne, p) in [(GeometryMap::UnitSquare, 2, 1), (GeometryMap::ring(), 3, 2), (GeometryMap::UnitSquare, 3, 2)] {
            let space = SpaceTimeSpace::uniform(geo, ne, p, 1.0).unwrap();
            let f = |x: f64, y: f64, t: f64| (x + 2.0 * y).sin() * (1.0 + t);
            let sys = AssembledSystem::assemble(&space, &f, PointsPerSpan::default()).unwrap();
            let dense = assemble_dense_spacetime_oracle(&space, &f, PointsPerSpan::default()).unwrap();
            assert!(rel_max(&dense.w, &sys.operators.w.materialize()) <= 1e-12);
            assert!(rel_max(&dense.k, &sys.operators.k.materialize()) <= 1e-12);
            assert!(rel_max(&dense.m, &sys.operators.m.materialize()) <= 1e-12);
            let load = DVector::from_column_slice(&sys.load);
            assert!((&dense.load - &load).amax() <= 1e-12 * load.amax());
            assert!(rel_max(&dense.k, &dense.k.transpose()) <= 1e-12);
        }
    }

    #[test]
    fn zero_source_and_guard() {
        let space = SpaceTimeSpace::uniform(GeometryMap::UnitSquare, 2, 1, 1.0).unwrap();
        let dense = assemble_dense_spacetime_oracle(&space, &|_, _, _| 0.0, PointsPerSpan::default()).unwrap();
        assert_eq!(dense.load.amax(), 0.0);
        let big = SpaceTimeSpace::uniform(GeometryMap::UnitSquare, 10, 1, 1.0).unwrap();
        let err = assemble_dense_spacetime_oracle(&big, &|_, _, _| 0.0, PointsPerSpan::default());
        assert!(matches!(err, Err(Error::TooLarge { limit: 400, .. })));
    }
}
