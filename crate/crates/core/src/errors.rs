//! Discrete solutions: pointwise evaluation, relative error norms against a
//! manufactured solution, observed convergence rates, and the discrete
//! inf-sup constant.

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::assembly::{AssembledSystem, BasisTable, SpaceTimeSpace, SpatialQuadrature};
use crate::error::{Error, Result};
use crate::linsolve::{BlockSystem, DENSE_MAX_DOF};
use crate::par;
use crate::problems::ManufacturedProblem;
use crate::quadrature::PointsPerSpan;

/// Coefficients of `(u_h, v_h)` on a space-time space.
#[derive(Clone, Debug)]
pub struct DiscreteSolution {
    pub space: SpaceTimeSpace,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Field {
    U,
    V,
}

impl DiscreteSolution {
    pub fn new(space: SpaceTimeSpace, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        let n = space.dim();
        if u.len() != n || v.len() != n {
            return Err(Error::Argument(format!(
                "coefficient lengths {} and {} do not match N = {n}",
                u.len(),
                v.len()
            )));
        }
        if u.iter().chain(&v).any(|c| !c.is_finite()) {
            return Err(Error::Argument("coefficients must be finite".into()));
        }
        Ok(Self { space, u, v })
    }

    pub fn zero(space: SpaceTimeSpace) -> Self {
        let n = space.dim();
        Self {
            space,
            u: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn coefficients(&self, which: Field) -> &[f64] {
        match which {
            Field::U => &self.u,
            Field::V => &self.v,
        }
    }
}

/// Value, physical spatial gradient and time derivative of `u_h` or `v_h`
/// at the parametric point `(ζ₁, ζ₂, τ) ∈ [0, 1]³`.
pub fn eval_solution(sol: &DiscreteSolution, which: Field, point: [f64; 3]) -> Result<(f64, [f64; 2], f64)> {
    let space = &sol.space;
    let [s1, s2] = space.spatial();
    let st = space.temporal();
    let d1 = s1.knots().eval_basis_derivs(point[0], 1)?;
    let d2 = s2.knots().eval_basis_derivs(point[1], 1)?;
    let dt = st.knots().eval_basis_derivs(point[2], 1)?;
    let (n1, ns) = (s1.dof_count(), space.n_space());
    let coef = sol.coefficients(which);
    let (mut val, mut g, mut tder) = (0.0, [0.0; 2], 0.0);
    for (c, (vt, dtv)) in dt.rows[0].iter().zip(&dt.rows[1]).enumerate() {
        let Some(it) = st.reduced_index(dt.first + c) else { continue };
        for (b, (v2, dv2)) in d2.rows[0].iter().zip(&d2.rows[1]).enumerate() {
            let Some(i2) = s2.reduced_index(d2.first + b) else { continue };
            for (a, (v1, dv1)) in d1.rows[0].iter().zip(&d1.rows[1]).enumerate() {
                let Some(i1) = s1.reduced_index(d1.first + a) else { continue };
                let x = coef[it * ns + i2 * n1 + i1];
                val += x * v1 * v2 * vt;
                g[0] += x * dv1 * v2 * vt;
                g[1] += x * v1 * dv2 * vt;
                tder += x * v1 * v2 * dtv;
            }
        }
    }
    let grad = space.geometry().pullback_gradient([point[0], point[1]], g)?;
    Ok((val, grad, tder / space.final_time()))
}

/// The four relative errors of one `(p, h)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// `‖u − u_h‖ / ‖u‖` in `L²(H₀¹) ∩ H¹(L²)`.
    pub e_u1: f64,
    /// `‖u − u_h‖ / ‖u‖` in `L²(L²)`.
    pub e_u2: f64,
    /// `‖v − v_h‖ / ‖v‖` in `L²(H₀¹)`.
    pub e_v1: f64,
    /// `‖v − v_h‖ / ‖v‖` in `L²(L²)`.
    pub e_v2: f64,
    pub h: f64,
    pub p: usize,
    /// Unknowns of the block system, `2N`.
    pub dof: usize,
}

/// Norm integrals accumulated per quadrature point.
#[derive(Clone, Copy, Default)]
struct Sums {
    err: [f64; 5],
    exact: [f64; 5],
}

const GRAD_U: usize = 0;
const DT_U: usize = 1;
const L2_U: usize = 2;
const GRAD_V: usize = 3;
const L2_V: usize = 4;

impl Sums {
    fn add(&mut self, o: &Sums) {
        for k in 0..5 {
            self.err[k] += o.err[k];
            self.exact[k] += o.exact[k];
        }
    }
}

/// Relative errors with `p + 2` Gauss points per span.
pub fn error_norms(sol: &DiscreteSolution, problem: &ManufacturedProblem) -> Result<ErrorReport> {
    error_norms_with(sol, problem, PointsPerSpan::DegreePlus(2))
}

pub fn error_norms_with(sol: &DiscreteSolution, problem: &ManufacturedProblem, points: PointsPerSpan) -> Result<ErrorReport> {
    let space = &sol.space;
    let [s1, s2] = space.spatial();
    let quad = SpatialQuadrature::new([s1, s2], space.geometry(), points)?;
    let time = BasisTable::new(space.temporal(), points.for_degree(space.temporal().degree()))?;
    let (ns, big_t) = (space.n_space(), space.final_time());
    let nb = quad.basis_per_element;
    let temporal = space.temporal();

    let mut total = Sums::default();
    let (mut cu, mut cdu, mut cv) = (vec![0.0; ns], vec![0.0; ns], vec![0.0; ns]);
    for et in 0..time.num_elements() {
        for (qt, (&tau, &wt)) in time.rule.element_nodes(et).iter().zip(time.rule.element_weights(et)).enumerate() {
            let t = big_t * tau;
            // spatial coefficient fields of u_h, ∂ₜu_h and v_h at time t
            cu.fill(0.0);
            cdu.fill(0.0);
            cv.fill(0.0);
            let first = time.first(et);
            for (a, (&b, &db)) in time.values(et, qt).iter().zip(time.derivs(et, qt)).enumerate() {
                let Some(it) = temporal.reduced_index(first + a) else { continue };
                let (u, v) = (&sol.u[it * ns..(it + 1) * ns], &sol.v[it * ns..(it + 1) * ns]);
                for i in 0..ns {
                    cu[i] += b * u[i];
                    cdu[i] += db / big_t * u[i];
                    cv[i] += b * v[i];
                }
            }
            let parts = par::map_range(quad.elements.len(), |e| {
                let el = &quad.elements[e];
                let mut s = Sums::default();
                for q in 0..quad.points_per_element {
                    let (mut uh, mut duh, mut vh) = (0.0, 0.0, 0.0);
                    let (mut guh, mut gvh) = ([0.0; 2], [0.0; 2]);
                    for a in 0..nb {
                        let Some(i) = el.dofs[a] else { continue };
                        let (val, grad) = (el.values[q * nb + a], el.grads[q * nb + a]);
                        uh += cu[i] * val;
                        duh += cdu[i] * val;
                        vh += cv[i] * val;
                        for k in 0..2 {
                            guh[k] += cu[i] * grad[k];
                            gvh[k] += cv[i] * grad[k];
                        }
                    }
                    let [x, y] = el.points[q];
                    let w = el.weights[q] * wt * big_t;
                    let (u, du, v) = ((problem.u)(x, y, t), (problem.dt_u)(x, y, t), (problem.v)(x, y, t));
                    let (gu, gv) = ((problem.grad_u)(x, y, t), (problem.grad_v)(x, y, t));
                    let sq2 = |g: [f64; 2]| g[0] * g[0] + g[1] * g[1];
                    s.err[GRAD_U] += w * sq2([gu[0] - guh[0], gu[1] - guh[1]]);
                    s.err[DT_U] += w * (du - duh).powi(2);
                    s.err[L2_U] += w * (u - uh).powi(2);
                    s.err[GRAD_V] += w * sq2([gv[0] - gvh[0], gv[1] - gvh[1]]);
                    s.err[L2_V] += w * (v - vh).powi(2);
                    s.exact[GRAD_U] += w * sq2(gu);
                    s.exact[DT_U] += w * du * du;
                    s.exact[L2_U] += w * u * u;
                    s.exact[GRAD_V] += w * sq2(gv);
                    s.exact[L2_V] += w * v * v;
                }
                s
            });
            for s in &parts {
                total.add(s);
            }
        }
    }

    let ratio = |measure: &'static str, err: f64, exact: f64| -> Result<f64> {
        let norm = exact.sqrt();
        if !(norm >= 1e-14) {
            return Err(Error::DegenerateNorm { measure, norm });
        }
        Ok(err.sqrt() / norm)
    };
    let (e, x) = (&total.err, &total.exact);
    Ok(ErrorReport {
        e_u1: ratio("E_u1", e[GRAD_U] + e[DT_U], x[GRAD_U] + x[DT_U])?,
        e_u2: ratio("E_u2", e[L2_U], x[L2_U])?,
        e_v1: ratio("E_v1", e[GRAD_V], x[GRAD_V])?,
        e_v2: ratio("E_v2", e[L2_V], x[L2_V])?,
        h: space.mesh_size(),
        p: space.max_degree(),
        dof: 2 * space.dim(),
    })
}

/// Observed orders between two consecutive levels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub u1: Option<f64>,
    pub u2: Option<f64>,
    pub v1: Option<f64>,
    pub v2: Option<f64>,
}

impl Rates {
    pub fn as_array(&self) -> [Option<f64>; 4] {
        [self.u1, self.u2, self.v1, self.v2]
    }
}

/// `log₂(e_coarse / e_fine)`; `None` if either error is zero or not finite.
pub fn rate(e_coarse: f64, e_fine: f64) -> Option<f64> {
    let r = (e_coarse / e_fine).log2();
    (e_coarse > 0.0 && e_fine > 0.0 && r.is_finite()).then_some(r)
}

/// Rates between consecutive reports. Entry `i` compares reports `i − 1`
/// and `i`; it is `None` for `i = 0` and whenever the mesh size does not
/// exactly halve.
pub fn convergence_rates(reports: &[ErrorReport]) -> Result<Vec<Option<Rates>>> {
    if reports.len() < 2 {
        return Err(Error::Argument(format!("rates need at least two levels, got {}", reports.len())));
    }
    let mut out = vec![None];
    for pair in reports.windows(2) {
        let (c, f) = (&pair[0], &pair[1]);
        let halves = (c.h / f.h - 2.0).abs() <= 1e-12;
        out.push(halves.then(|| Rates {
            u1: rate(c.e_u1, f.e_u1),
            u2: rate(c.e_u2, f.e_u2),
            v1: rate(c.e_v1, f.e_v1),
            v2: rate(c.e_v2, f.e_v2),
        }));
    }
    Ok(out)
}

/// `σ_min(L_W⁻¹ A L_V⁻ᵀ)` where `G_W = L_W L_Wᵀ`, `G_V = L_V L_Vᵀ`: the
/// inf-sup constant of the bilinear form `yᵀ A x` between the Gram norms.
pub fn infsup_from_matrices(a: &DMatrix<f64>, g_w: &DMatrix<f64>, g_v: &DMatrix<f64>) -> Result<f64> {
    let chol = |g: &DMatrix<f64>, name: &str| {
        Cholesky::new(g.clone()).ok_or_else(|| Error::Singular(format!("{name} Gram matrix is not positive definite")))
    };
    let lw = chol(g_w, "test")?.l();
    let lv = chol(g_v, "trial")?.l();
    let fail = || Error::Singular("triangular solve failed".into());
    // B = L_W⁻¹ A L_V⁻ᵀ, built as (L_V⁻¹ (L_W⁻¹ A)ᵀ)ᵀ
    let b = lw.solve_lower_triangular(a).ok_or_else(fail)?;
    let b = lv.solve_lower_triangular(&b.transpose()).ok_or_else(fail)?.transpose();
    let sv = b.singular_values();
    Ok(sv.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Discrete inf-sup constant of the space-time form on `space`, with the
/// test norm `diag(K, K)` and the trial norm `diag(Wᵀ K⁻¹ W + K, K)`.
/// Dense; refuses `N > 400`.
pub fn discrete_infsup_constant(space: &SpaceTimeSpace) -> Result<f64> {
    let n = space.dim();
    if n > DENSE_MAX_DOF {
        return Err(Error::TooLarge {
            size: n,
            limit: DENSE_MAX_DOF,
        });
    }
    let asm = AssembledSystem::assemble(space, &|_, _, _| 0.0, PointsPerSpan::default())?;
    let system = BlockSystem::from_assembled(&asm)?;
    let a = system.materialize();
    let w = asm.operators.w.materialize();
    let k = asm.operators.k.materialize();
    let kinv_w = Cholesky::new(k.clone())
        .ok_or_else(|| Error::Singular("stiffness is not positive definite".into()))?
        .solve(&w);
    let block_diag = |a: &DMatrix<f64>, b: &DMatrix<f64>| {
        let mut g = DMatrix::zeros(2 * n, 2 * n);
        g.view_mut((0, 0), (n, n)).copy_from(a);
        g.view_mut((n, n), (n, n)).copy_from(b);
        g
    };
    let g_w = block_diag(&k, &k);
    let g_v = block_diag(&(w.transpose() * kinv_w + &k), &k);
    // symmetrize against rounding before the Cholesky factorizations
    let sym = |g: DMatrix<f64>| (&g + g.transpose()) * 0.5;
    infsup_from_matrices(&a, &sym(g_w), &sym(g_v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bspline::SplineSpace1D;
    use crate::geometry::GeometryMap;
    use crate::problems::example1;
    use crate::quadrature::QuadratureRule1D;
    use std::sync::Arc;

    /// L² projection coefficients of `g` onto a 1D space (exact if `g` lies in it).
    fn project_1d(s: &SplineSpace1D, g: impl Fn(f64) -> f64) -> Vec<f64> {
        let kv = s.knots();
        let rule = QuadratureRule1D::per_span(kv, kv.degree() + 3).unwrap();
        let n = s.dof_count();
        let mut m = DMatrix::zeros(n, n);
        let mut rhs = nalgebra::DVector::zeros(n);
        for (&x, &w) in rule.nodes().iter().zip(rule.weights()) {
            let b = kv.eval_basis(x).unwrap();
            let idx: Vec<_> = (0..b.values.len()).map(|k| s.reduced_index(b.first + k)).collect();
            for (a, ia) in idx.iter().enumerate() {
                let Some(i) = ia else { continue };
                rhs[*i] += w * g(x) * b.values[a];
                for (c, ic) in idx.iter().enumerate() {
                    if let Some(j) = ic {
                        m[(*i, *j)] += w * b.values[a] * b.values[c];
                    }
                }
            }
        }
        m.cholesky().unwrap().solve(&rhs).as_slice().to_vec()
    }

    fn kron3(ct: &[f64], cy: &[f64], cx: &[f64]) -> Vec<f64> {
        ct.iter()
            .flat_map(|a| cy.iter().flat_map(move |b| cx.iter().map(move |c| a * b * c)))
            .collect()
    }

    /// `u = t b(x) b(y)` and `v = 3t² b(x) b(y)` with `b(s) = s(1 − s)`,
    /// both inside the `p = 2` space on the square, and their projections.
    fn reproduction() -> (DiscreteSolution, ManufacturedProblem) {
        let space = SpaceTimeSpace::uniform(GeometryMap::UnitSquare, 4, 2, 1.0).unwrap();
        let [s1, s2] = space.spatial();
        let b = |s: f64| s * (1.0 - s);
        let db = |s: f64| 1.0 - 2.0 * s;
        let (cx, cy) = (project_1d(s1, b), project_1d(s2, b));
        let u = kron3(&project_1d(space.temporal(), |t| t), &cy, &cx);
        let v = kron3(&project_1d(space.temporal(), |t| 3.0 * t * t), &cy, &cx);
        let problem = ManufacturedProblem {
            name: "reproduction".into(),
            u: Arc::new(move |x, y, t| t * b(x) * b(y)),
            grad_u: Arc::new(move |x, y, t| [t * db(x) * b(y), t * b(x) * db(y)]),
            dt_u: Arc::new(move |x, y, _| b(x) * b(y)),
            v: Arc::new(move |x, y, t| 3.0 * t * t * b(x) * b(y)),
            grad_v: Arc::new(move |x, y, t| [3.0 * t * t * db(x) * b(y), 3.0 * t * t * b(x) * db(y)]),
            ..example1()
        };
        (DiscreteSolution::new(space, u, v).unwrap(), problem)
    }

    #[test]
    fn polynomial_reproduction() {
        let (sol, problem) = reproduction();
        for z in [[0.1, 0.2, 0.3], [0.5, 0.5, 1.0], [0.93, 0.41, 0.77], [0.0, 0.6, 0.2]] {
            let (val, grad, dt) = eval_solution(&sol, Field::U, z).unwrap();
            let (x, y, t) = (z[0], z[1], z[2]);
            assert!((val - (problem.u)(x, y, t)).abs() <= 1e-10);
            let g = (problem.grad_u)(x, y, t);
            assert!((grad[0] - g[0]).abs() <= 1e-10 && (grad[1] - g[1]).abs() <= 1e-10);
            assert!((dt - (problem.dt_u)(x, y, t)).abs() <= 1e-10);
            let (val, _, _) = eval_solution(&sol, Field::V, z).unwrap();
            assert!((val - (problem.v)(x, y, t)).abs() <= 1e-10);
        }
        let r = error_norms(&sol, &problem).unwrap();
        for e in [r.e_u1, r.e_u2, r.e_v1, r.e_v2] {
            assert!(e <= 1e-9, "{r:?}");
        }
    }

    #[test]
    fn time_derivative_matches_finite_differences() {
        let space = SpaceTimeSpace::uniform(GeometryMap::ring(), 3, 3, 2.0).unwrap();
        let n = space.dim();
        let u: Vec<f64> = (0..n).map(|i| ((i * 7919) % 13) as f64 / 13.0 - 0.5).collect();
        let sol = DiscreteSolution::new(space, u.clone(), u).unwrap();
        for z in [[0.3, 0.4, 0.25], [0.7, 0.1, 0.6], [0.5, 0.9, 0.9]] {
            let (_, _, dt) = eval_solution(&sol, Field::U, z).unwrap();
            let h = 1e-6;
            let at = |tau: f64| eval_solution(&sol, Field::U, [z[0], z[1], tau]).unwrap().0;
            // τ derivative divided by T
            let fd = (at(z[2] + h) - at(z[2] - h)) / (2.0 * h) / 2.0;
            assert!((dt - fd).abs() <= 1e-5 * (1.0 + fd.abs()), "{dt} vs {fd}");
        }
    }

    #[test]
    fn zero_coefficients_evaluate_to_zero() {
        let space = SpaceTimeSpace::uniform(GeometryMap::ring(), 3, 2, 2.0).unwrap();
        let sol = DiscreteSolution::zero(space);
        assert_eq!(eval_solution(&sol, Field::U, [0.3, 0.7, 0.5]).unwrap(), (0.0, [0.0, 0.0], 0.0));
    }

    #[test]
    fn zero_solution_has_unit_errors() {
        let space = SpaceTimeSpace::uniform(GeometryMap::UnitSquare, 4, 2, 1.0).unwrap();
        let r = error_norms(&DiscreteSolution::zero(space), &example1()).unwrap();
        for e in [r.e_u1, r.e_u2, r.e_v1, r.e_v2] {
            assert!((e - 1.0).abs() < 1e-15, "{e}");
        }
    }

    #[test]
    fn rates() {
        assert!((rate(1e-2, 2.5e-3).unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(rate(0.3, 0.3), Some(0.0));
        assert_eq!(rate(0.0, 1e-3), None);
        let rep = |h: f64, e: f64| ErrorReport {
            e_u1: e,
            e_u2: e * e,
            e_v1: e,
            e_v2: 0.0,
            h,
            p: 1,
            dof: 0,
        };
        let r = convergence_rates(&[rep(0.25, 0.1), rep(0.125, 0.05), rep(1.0 / 24.0, 0.01)]).unwrap();
        assert!(r[0].is_none());
        let first = r[1].unwrap();
        assert!((first.u1.unwrap() - 1.0).abs() < 1e-14);
        assert!((first.u2.unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(first.v2, None);
        assert!(r[2].is_none(), "non-halving pair");
        assert!(convergence_rates(&[rep(0.5, 0.1)]).is_err());
    }

    #[test]
    fn infsup_scaling_invariance() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.5, 3.0]);
        let gw = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let gv = DMatrix::from_row_slice(2, 2, &[1.5, -0.2, -0.2, 2.0]);
        let c = infsup_from_matrices(&a, &gw, &gv).unwrap();
        let alpha = 7.3;
        let c2 = infsup_from_matrices(&(&a * alpha), &(&gw * alpha), &(&gv * alpha)).unwrap();
        assert!((c - c2).abs() <= 1e-12 * c);
        // identity Gram matrices give the plain smallest singular value
        let id = DMatrix::identity(2, 2);
        let smin = a.clone().singular_values().min();
        assert!((infsup_from_matrices(&a, &id, &id).unwrap() - smin).abs() < 1e-14);
        assert!(infsup_from_matrices(&a, &(-&id), &id).is_err());
    }

    #[test]
    fn infsup_positive_and_guarded() {
        let c = discrete_infsup_constant(&SpaceTimeSpace::uniform(GeometryMap::UnitSquare, 2, 1, 1.0).unwrap()).unwrap();
        assert!(c > 0.01);
        let big = SpaceTimeSpace::uniform(GeometryMap::UnitSquare, 16, 1, 1.0).unwrap();
        assert!(matches!(discrete_infsup_constant(&big), Err(Error::TooLarge { .. })));
    }
}
