//! Galerkin matrices and load vector of the space-time system.
//!
//! All matrices are assembled directly over the constrained (reduced) bases:
//! boundary functions in space and the `τ = 0` function in time never enter.
//! Spatial degrees of freedom are numbered with `ζ₁` fastest, and space-time
//! ones with space fastest, `i = i_t · n_s + i_s`, which matches the
//! Kronecker ordering `A_t ⊗ B_s`.

mod kron;
mod oracle;
mod sparse;

use std::sync::Arc;

pub use kron::{dense_kronecker, KroneckerOperator};
pub use oracle::{assemble_dense_spacetime_oracle, DenseSpaceTimeSystem, ORACLE_MAX_DOF};
pub use sparse::SparseMatrix;

use crate::bspline::{Constraint, KnotVector, SplineSpace1D};
use crate::error::{Error, Result};
use crate::geometry::GeometryMap;
use crate::par;
use crate::quadrature::{PointsPerSpan, QuadratureRule1D};

/// Tensor-product trial/test space on the space-time cylinder `Ω × (0, T)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimeSpace {
    spatial: [SplineSpace1D; 2],
    temporal: SplineSpace1D,
    geometry: GeometryMap,
    final_time: f64,
}

impl SpaceTimeSpace {
    pub fn new(
        spatial: [SplineSpace1D; 2],
        temporal: SplineSpace1D,
        geometry: GeometryMap,
        final_time: f64,
    ) -> Result<Self> {
        if spatial.iter().any(|s| s.constraint() != Constraint::ZeroBothEnds) {
            return Err(Error::Argument(
                "spatial spaces must vanish at both ends of the parametric interval".into(),
            ));
        }
        if temporal.constraint() != Constraint::ZeroLeftEnd {
            return Err(Error::Argument("the temporal space must vanish at τ = 0".into()));
        }
        if !(final_time > 0.0 && final_time.is_finite()) {
            return Err(Error::Argument(format!("final time must be positive, got {final_time}")));
        }
        Ok(Self {
            spatial,
            temporal,
            geometry,
            final_time,
        })
    }

    /// Uniform meshes with `elements` spans in every direction (`h_s = h_t`)
    /// and a common degree.
    pub fn uniform(geometry: GeometryMap, elements: usize, degree: usize, final_time: f64) -> Result<Self> {
        Self::uniform_with_degrees(geometry, elements, [degree, degree], degree, final_time)
    }

    pub fn uniform_with_degrees(
        geometry: GeometryMap,
        elements: usize,
        spatial_degrees: [usize; 2],
        temporal_degree: usize,
        final_time: f64,
    ) -> Result<Self> {
        let space = |p| -> Result<SplineSpace1D> {
            SplineSpace1D::new(KnotVector::uniform(elements, p)?, Constraint::ZeroBothEnds)
        };
        let temporal = SplineSpace1D::new(KnotVector::uniform(elements, temporal_degree)?, Constraint::ZeroLeftEnd)?;
        Self::new(
            [space(spatial_degrees[0])?, space(spatial_degrees[1])?],
            temporal,
            geometry,
            final_time,
        )
    }

    pub fn spatial(&self) -> &[SplineSpace1D; 2] {
        &self.spatial
    }

    pub fn temporal(&self) -> &SplineSpace1D {
        &self.temporal
    }

    pub fn geometry(&self) -> &GeometryMap {
        &self.geometry
    }

    pub fn final_time(&self) -> f64 {
        self.final_time
    }

    /// Degrees of freedom per spatial direction.
    pub fn spatial_dims(&self) -> [usize; 2] {
        [self.spatial[0].dof_count(), self.spatial[1].dof_count()]
    }

    /// `n_s = Π (l_r − 2)`.
    pub fn n_space(&self) -> usize {
        self.spatial_dims().iter().product()
    }

    /// `n_t = l_t − 1`.
    pub fn n_time(&self) -> usize {
        self.temporal.dof_count()
    }

    /// `N = n_s · n_t`.
    pub fn dim(&self) -> usize {
        self.n_space() * self.n_time()
    }

    /// Largest parametric knot span over all directions.
    pub fn mesh_size(&self) -> f64 {
        self.spatial
            .iter()
            .chain(std::iter::once(&self.temporal))
            .map(|s| s.knots().mesh_size())
            .fold(0.0, f64::max)
    }

    /// Largest degree over all directions.
    pub fn max_degree(&self) -> usize {
        self.spatial
            .iter()
            .chain(std::iter::once(&self.temporal))
            .map(|s| s.degree())
            .max()
            .unwrap_or(0)
    }
}

/// Basis values and first derivatives at the quadrature points of a 1D rule.
#[derive(Clone, Debug)]
pub(crate) struct BasisTable {
    pub rule: QuadratureRule1D,
    nb: usize,
    first: Vec<usize>,
    values: Vec<f64>,
    derivs: Vec<f64>,
}

impl BasisTable {
    pub fn new(space: &SplineSpace1D, points_per_span: usize) -> Result<Self> {
        let kv = space.knots();
        let rule = QuadratureRule1D::per_span(kv, points_per_span)?;
        let p = kv.degree();
        let nb = p + 1;
        let mut first = Vec::with_capacity(rule.num_elements());
        let mut values = Vec::with_capacity(rule.nodes().len() * nb);
        let mut derivs = Vec::with_capacity(rule.nodes().len() * nb);
        let mut row = vec![0.0; nb];
        for e in 0..rule.num_elements() {
            let span = rule.span(e);
            first.push(span - p);
            for &t in rule.element_nodes(e) {
                crate::bspline::derivative_row(kv.knots(), span, p, t, 0, &mut row);
                values.extend_from_slice(&row);
                crate::bspline::derivative_row(kv.knots(), span, p, t, 1, &mut row);
                derivs.extend_from_slice(&row);
            }
        }
        Ok(Self {
            rule,
            nb,
            first,
            values,
            derivs,
        })
    }

    pub fn num_elements(&self) -> usize {
        self.first.len()
    }

    pub fn points(&self) -> usize {
        self.rule.points_per_span()
    }

    pub fn basis_per_element(&self) -> usize {
        self.nb
    }

    /// Full index of the first nonzero function on element `e`.
    pub fn first(&self, e: usize) -> usize {
        self.first[e]
    }

    pub fn values(&self, e: usize, q: usize) -> &[f64] {
        let k = (e * self.points() + q) * self.nb;
        &self.values[k..k + self.nb]
    }

    pub fn derivs(&self, e: usize, q: usize) -> &[f64] {
        let k = (e * self.points() + q) * self.nb;
        &self.derivs[k..k + self.nb]
    }
}

/// Time derivative matrix `[W_t]_ij = ∫₀ᵀ b_j' b_i dt` and time mass matrix
/// `[M_t]_ij = ∫₀ᵀ b_j b_i dt` over the retained temporal basis.
///
/// With `b_j(t) = b̂_j(t/T)` the derivative matrix is independent of `T` and
/// the mass matrix scales with `T`.
pub fn assemble_time_matrices(
    temporal: &SplineSpace1D,
    final_time: f64,
    points: PointsPerSpan,
) -> Result<(SparseMatrix, SparseMatrix)> {
    let w = assemble_weighted_1d(temporal, points, |_| 1.0, (1, 0))?;
    let m = assemble_weighted_1d(temporal, points, |_| final_time, (0, 0))?;
    Ok((w, m))
}

/// `[A]_ij = ∫₀¹ w(s) b_j^{(dj)}(s) b_i^{(di)}(s) ds` over the retained basis,
/// with `(dj, di)` given by `orders` (each 0 or 1).
pub fn assemble_weighted_1d(
    space: &SplineSpace1D,
    points: PointsPerSpan,
    weight: impl Fn(f64) -> f64,
    orders: (usize, usize),
) -> Result<SparseMatrix> {
    if orders.0 > 1 || orders.1 > 1 {
        return Err(Error::Argument("only derivative orders 0 and 1 are supported".into()));
    }
    let table = BasisTable::new(space, points.for_degree(space.degree()))?;
    let n = space.dof_count();
    let nb = table.basis_per_element();
    let pick = |e, q, order| if order == 0 { table.values(e, q) } else { table.derivs(e, q) };
    let mut triplets = Vec::with_capacity(table.num_elements() * nb * nb);
    for e in 0..table.num_elements() {
        let mut local = vec![0.0; nb * nb];
        for (q, (&s, &wq)) in table.rule.element_nodes(e).iter().zip(table.rule.element_weights(e)).enumerate() {
            let scale = wq * weight(s);
            let trial = pick(e, q, orders.0);
            let test = pick(e, q, orders.1);
            for a in 0..nb {
                for b in 0..nb {
                    local[a * nb + b] += scale * test[a] * trial[b];
                }
            }
        }
        let first = table.first(e);
        for a in 0..nb {
            let Some(i) = space.reduced_index(first + a) else { continue };
            for b in 0..nb {
                if let Some(j) = space.reduced_index(first + b) {
                    triplets.push((i, j, local[a * nb + b]));
                }
            }
        }
    }
    Ok(SparseMatrix::from_triplets(n, n, triplets))
}

/// Quadrature data of one spatial element: physical points, weights
/// `w · det J`, and basis values and physical gradients at each point.
#[derive(Clone, Debug)]
pub(crate) struct SpatialElement {
    /// Reduced spatial index of each local function, `None` if removed.
    pub dofs: Vec<Option<usize>>,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    /// `values[q * nb + a]`.
    pub values: Vec<f64>,
    pub grads: Vec<[f64; 2]>,
}

/// Precomputed quadrature data for all spatial elements, `ζ₁`-index fastest.
#[derive(Clone, Debug)]
pub(crate) struct SpatialQuadrature {
    pub elements: Vec<SpatialElement>,
    pub basis_per_element: usize,
    pub points_per_element: usize,
}

impl SpatialQuadrature {
    pub fn new(spaces: [&SplineSpace1D; 2], geometry: &GeometryMap, points: PointsPerSpan) -> Result<Self> {
        let tables = [
            BasisTable::new(spaces[0], points.for_degree(spaces[0].degree()))?,
            BasisTable::new(spaces[1], points.for_degree(spaces[1].degree()))?,
        ];
        let ne = [tables[0].num_elements(), tables[1].num_elements()];
        let nb = [tables[0].basis_per_element(), tables[1].basis_per_element()];
        let nq = [tables[0].points(), tables[1].points()];
        let n1 = spaces[0].dof_count();

        let elements = par::map_range(ne[0] * ne[1], |e| -> Result<SpatialElement> {
            let (e1, e2) = (e % ne[0], e / ne[0]);
            let (f1, f2) = (tables[0].first(e1), tables[1].first(e2));
            let mut dofs = Vec::with_capacity(nb[0] * nb[1]);
            for b in 0..nb[1] {
                for a in 0..nb[0] {
                    let i = spaces[0].reduced_index(f1 + a);
                    let j = spaces[1].reduced_index(f2 + b);
                    dofs.push(i.zip(j).map(|(i, j)| i + n1 * j));
                }
            }
            let total = nq[0] * nq[1];
            let mut el = SpatialElement {
                dofs,
                points: Vec::with_capacity(total),
                weights: Vec::with_capacity(total),
                values: Vec::with_capacity(total * nb[0] * nb[1]),
                grads: Vec::with_capacity(total * nb[0] * nb[1]),
            };
            for q2 in 0..nq[1] {
                for q1 in 0..nq[0] {
                    let z = [tables[0].rule.element_nodes(e1)[q1], tables[1].rule.element_nodes(e2)[q2]];
                    let w = tables[0].rule.element_weights(e1)[q1] * tables[1].rule.element_weights(e2)[q2];
                    let jac = geometry.jacobian(z);
                    if !(jac.det > 0.0) {
                        return Err(Error::SingularJacobian { point: z, det: jac.det });
                    }
                    el.points.push(geometry.map_point(z));
                    el.weights.push(w * jac.det);
                    let (v1, d1) = (tables[0].values(e1, q1), tables[0].derivs(e1, q1));
                    let (v2, d2) = (tables[1].values(e2, q2), tables[1].derivs(e2, q2));
                    for b in 0..nb[1] {
                        for a in 0..nb[0] {
                            el.values.push(v1[a] * v2[b]);
                            el.grads.push(jac.pullback(z, [d1[a] * v2[b], v1[a] * d2[b]])?);
                        }
                    }
                }
            }
            Ok(el)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

        Ok(Self {
            elements,
            basis_per_element: nb[0] * nb[1],
            points_per_element: nq[0] * nq[1],
        })
    }
}

/// Spatial stiffness `[K_s]_ij = ∫_Ω ∇B_j·∇B_i dx` and mass
/// `[M_s]_ij = ∫_Ω B_j B_i dx`, integrated over the mapped elements.
///
/// The spaces are normally the constrained ones of a [`SpaceTimeSpace`];
/// unconstrained spaces are accepted for consistency checks.
pub fn assemble_spatial_matrices(
    spaces: [&SplineSpace1D; 2],
    geometry: &GeometryMap,
    points: PointsPerSpan,
) -> Result<(SparseMatrix, SparseMatrix)> {
    let quad = SpatialQuadrature::new(spaces, geometry, points)?;
    let n = spaces[0].dof_count() * spaces[1].dof_count();
    let nb = quad.basis_per_element;
    let locals = par::map_range(quad.elements.len(), |e| {
        let el = &quad.elements[e];
        let mut k = vec![0.0; nb * nb];
        let mut m = vec![0.0; nb * nb];
        for q in 0..quad.points_per_element {
            let w = el.weights[q];
            let vals = &el.values[q * nb..(q + 1) * nb];
            let grads = &el.grads[q * nb..(q + 1) * nb];
            for a in 0..nb {
                if el.dofs[a].is_none() {
                    continue;
                }
                for b in 0..nb {
                    let ga = grads[a];
                    let gb = grads[b];
                    k[a * nb + b] += w * (ga[0] * gb[0] + ga[1] * gb[1]);
                    m[a * nb + b] += w * vals[a] * vals[b];
                }
            }
        }
        (k, m)
    });
    let mut kt = Vec::new();
    let mut mt = Vec::new();
    for (el, (k, m)) in quad.elements.iter().zip(&locals) {
        for a in 0..nb {
            let Some(i) = el.dofs[a] else { continue };
            for b in 0..nb {
                if let Some(j) = el.dofs[b] {
                    kt.push((i, j, k[a * nb + b]));
                    mt.push((i, j, m[a * nb + b]));
                }
            }
        }
    }
    Ok((SparseMatrix::from_triplets(n, n, kt), SparseMatrix::from_triplets(n, n, mt)))
}

/// The three Kronecker-structured blocks of the space-time system.
#[derive(Clone, Debug)]
pub struct SystemOperators {
    /// `W = W_t ⊗ M_s`
    pub w: KroneckerOperator,
    /// `K = M_t ⊗ K_s`
    pub k: KroneckerOperator,
    /// `M = M_t ⊗ M_s`
    pub m: KroneckerOperator,
}

impl SystemOperators {
    pub fn dim(&self) -> usize {
        self.w.dim()
    }
}

/// Wraps the univariate-in-time and spatial factors into lazy operators.
pub fn compose_system(
    w_t: Arc<SparseMatrix>,
    m_t: Arc<SparseMatrix>,
    k_s: Arc<SparseMatrix>,
    m_s: Arc<SparseMatrix>,
) -> Result<SystemOperators> {
    let nt = w_t.nrows();
    let ns = k_s.nrows();
    let square = |m: &SparseMatrix, n: usize| m.nrows() == n && m.ncols() == n;
    if !(square(&w_t, nt) && square(&m_t, nt) && square(&k_s, ns) && square(&m_s, ns)) {
        return Err(Error::Argument(format!(
            "incompatible factor shapes: W_t {}x{}, M_t {}x{}, K_s {}x{}, M_s {}x{}",
            w_t.nrows(),
            w_t.ncols(),
            m_t.nrows(),
            m_t.ncols(),
            k_s.nrows(),
            k_s.ncols(),
            m_s.nrows(),
            m_s.ncols()
        )));
    }
    Ok(SystemOperators {
        w: KroneckerOperator::new(w_t, m_s.clone(), 1.0),
        k: KroneckerOperator::new(m_t.clone(), k_s, 1.0),
        m: KroneckerOperator::new(m_t, m_s, 1.0),
    })
}

/// Scalar source term `f(x, y, t)` in physical coordinates.
pub type SourceFn<'a> = &'a (dyn Fn(f64, f64, f64) -> f64 + Sync);

/// Load vector `[f]_i = ∫₀ᵀ ∫_Ω f B_i dx dt` over the space-time basis.
pub fn assemble_load(f: SourceFn<'_>, space: &SpaceTimeSpace, points: PointsPerSpan) -> Result<Vec<f64>> {
    let [s1, s2] = space.spatial();
    assemble_load_on(f, [s1, s2], space.temporal(), space.geometry(), space.final_time(), points)
}

/// [`assemble_load`] on arbitrary (possibly unconstrained) univariate spaces.
pub fn assemble_load_on(
    f: SourceFn<'_>,
    spatial: [&SplineSpace1D; 2],
    temporal: &SplineSpace1D,
    geometry: &GeometryMap,
    final_time: f64,
    points: PointsPerSpan,
) -> Result<Vec<f64>> {
    let quad = SpatialQuadrature::new(spatial, geometry, points)?;
    let time = BasisTable::new(temporal, points.for_degree(temporal.degree()))?;
    let ns = spatial[0].dof_count() * spatial[1].dof_count();
    let nt = temporal.dof_count();
    let nb = quad.basis_per_element;
    let mut load = vec![0.0; ns * nt];
    let mut g = vec![0.0; ns];
    for et in 0..time.num_elements() {
        for (qt, (&tau, &wt)) in time.rule.element_nodes(et).iter().zip(time.rule.element_weights(et)).enumerate() {
            let t = final_time * tau;
            // spatial moments of f(·, t)
            let locals = par::map_range(quad.elements.len(), |e| -> Result<Vec<f64>> {
                let el = &quad.elements[e];
                let mut loc = vec![0.0; nb];
                for q in 0..quad.points_per_element {
                    let x = el.points[q];
                    let fv = f(x[0], x[1], t);
                    if !fv.is_finite() {
                        return Err(Error::NonFinite {
                            point: [x[0], x[1], t],
                            value: fv,
                        });
                    }
                    let s = fv * el.weights[q];
                    for (l, v) in loc.iter_mut().zip(&el.values[q * nb..(q + 1) * nb]) {
                        *l += s * v;
                    }
                }
                Ok(loc)
            });
            g.fill(0.0);
            for (el, loc) in quad.elements.iter().zip(locals) {
                let loc = loc?;
                for (dof, v) in el.dofs.iter().zip(loc) {
                    if let Some(i) = dof {
                        g[*i] += v;
                    }
                }
            }
            let first = time.first(et);
            for (a, &b) in time.values(et, qt).iter().enumerate() {
                if let Some(it) = temporal.reduced_index(first + a) {
                    let s = wt * final_time * b;
                    for (l, gv) in load[it * ns..(it + 1) * ns].iter_mut().zip(&g) {
                        *l += s * gv;
                    }
                }
            }
        }
    }
    Ok(load)
}

/// Everything needed to solve on one space: the univariate and spatial
/// factors, the composed operators, and the load vector.
#[derive(Clone, Debug)]
pub struct AssembledSystem {
    pub space: SpaceTimeSpace,
    pub w_t: Arc<SparseMatrix>,
    pub m_t: Arc<SparseMatrix>,
    pub k_s: Arc<SparseMatrix>,
    pub m_s: Arc<SparseMatrix>,
    pub operators: SystemOperators,
    pub load: Vec<f64>,
    /// Quadrature used for all integrals above.
    pub points: PointsPerSpan,
}

impl AssembledSystem {
    pub fn assemble(space: &SpaceTimeSpace, f: SourceFn<'_>, points: PointsPerSpan) -> Result<Self> {
        let (w_t, m_t) = assemble_time_matrices(space.temporal(), space.final_time(), points)?;
        let [s1, s2] = space.spatial();
        let (k_s, m_s) = assemble_spatial_matrices([s1, s2], space.geometry(), points)?;
        let (w_t, m_t, k_s, m_s) = (Arc::new(w_t), Arc::new(m_t), Arc::new(k_s), Arc::new(m_s));
        let operators = compose_system(w_t.clone(), m_t.clone(), k_s.clone(), m_s.clone())?;
        let load = assemble_load(f, space, points)?;
        Ok(Self {
            space: space.clone(),
            w_t,
            m_t,
            k_s,
            m_s,
            operators,
            load,
            points,
        })
    }

    /// Writes the four factor matrices as coordinate files into `dir`.
    pub fn dump_factors(&self, dir: &std::path::Path, tag: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, m) in [("W_t", &self.w_t), ("M_t", &self.m_t), ("K_s", &self.k_s), ("M_s", &self.m_s)] {
            m.write_coordinates(&dir.join(format!("{tag}_{name}.txt")))?;
        }
        Ok(())
    }
}
