//! Univariate B-spline bases on open knot vectors in `[0, 1]`.
//!
//! Basis functions are indexed from 0. On a knot span `[ξ_s, ξ_{s+1})` the
//! nonzero functions of degree `p` are `s - p, ..., s`; the evaluation
//! routines return them in that order together with the index of the first.

use crate::error::{Error, Result};

/// Open knot vector with cached mesh size and quasi-uniformity ratio.
#[derive(Clone, Debug, PartialEq)]
pub struct KnotVector {
    knots: Vec<f64>,
    degree: usize,
    mesh_size: f64,
    beta: f64,
}

impl KnotVector {
    pub fn new(knots: Vec<f64>, degree: usize) -> Result<Self> {
        if degree == 0 {
            return Err(Error::Argument("spline degree must be at least 1".into()));
        }
        if knots.len() < 2 * (degree + 1) {
            return Err(Error::Argument(format!(
                "{} knots cannot form an open knot vector of degree {degree}",
                knots.len()
            )));
        }
        if knots.iter().any(|k| !k.is_finite() || *k < 0.0 || *k > 1.0) {
            return Err(Error::Argument("knots must lie in [0, 1]".into()));
        }
        if knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Argument("knots must be nondecreasing".into()));
        }
        let n = knots.len();
        if knots[..=degree].iter().any(|&k| k != 0.0) || knots[n - degree - 1..].iter().any(|&k| k != 1.0)
        {
            return Err(Error::Argument(format!(
                "knot vector is not open: the first and last {} knots must equal 0 and 1",
                degree + 1
            )));
        }
        // interior knots may not exceed multiplicity p (the space would lose C^0)
        let mut run = 1;
        for w in knots[degree..n - degree].windows(2) {
            if w[0] == w[1] && w[0] > 0.0 && w[0] < 1.0 {
                run += 1;
                if run > degree {
                    return Err(Error::Argument(format!(
                        "interior knot {} has multiplicity above the degree {degree}",
                        w[0]
                    )));
                }
            } else {
                run = 1;
            }
        }

        let spans = knots.windows(2).map(|w| w[1] - w[0]).filter(|&d| d > 0.0);
        let (min, max) = spans.fold((f64::INFINITY, 0.0_f64), |(lo, hi), d| (lo.min(d), hi.max(d)));
        let beta = min / max;
        if beta < 0.1 {
            log::warn!("knot vector is far from quasi-uniform (beta = {beta:.3e})");
        }
        Ok(Self {
            knots,
            degree,
            mesh_size: max,
            beta,
        })
    }

    /// Open knot vector with `num_elements` equal spans and simple interior knots.
    pub fn uniform(num_elements: usize, degree: usize) -> Result<Self> {
        if num_elements < 1 {
            return Err(Error::Argument("a knot vector needs at least one element".into()));
        }
        let mut knots = vec![0.0; degree + 1];
        knots.extend((1..num_elements).map(|i| i as f64 / num_elements as f64));
        knots.extend(std::iter::repeat_n(1.0, degree + 1));
        Self::new(knots, degree)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of basis functions `l = #knots - p - 1`.
    pub fn num_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    /// Largest knot span.
    pub fn mesh_size(&self) -> f64 {
        self.mesh_size
    }

    /// Ratio of the smallest to the largest nonempty span.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Knot indices `s` of the nonempty spans `[ξ_s, ξ_{s+1})`, left to right.
    pub fn nonempty_spans(&self) -> Vec<usize> {
        (self.degree..self.num_basis())
            .filter(|&s| self.knots[s + 1] > self.knots[s])
            .collect()
    }

    pub fn num_elements(&self) -> usize {
        self.nonempty_spans().len()
    }

    /// Index `s` with `ξ_s <= t < ξ_{s+1}`; `t = 1` maps to the last nonempty span.
    pub fn find_span(&self, t: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Domain { value: t });
        }
        let last = self.num_basis() - 1;
        if t >= self.knots[last + 1] {
            return Ok(last);
        }
        // binary search over [p, l - 1]
        let (mut lo, mut hi) = (self.degree, last + 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if t < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(lo)
    }

    /// Values of the `p + 1` basis functions that are nonzero at `t`.
    pub fn eval_basis(&self, t: f64) -> Result<BasisValues> {
        let span = self.find_span(t)?;
        let mut values = vec![0.0; self.degree + 1];
        cox_de_boor(&self.knots, span, self.degree, t, &mut values);
        Ok(BasisValues {
            first: span - self.degree,
            values,
        })
    }

    /// Values and derivatives up to order `order` of the nonzero functions at `t`.
    ///
    /// Row `k` of the result holds the `k`-th derivatives. Orders above the
    /// degree are identically zero.
    pub fn eval_basis_derivs(&self, t: f64, order: usize) -> Result<BasisDerivs> {
        let span = self.find_span(t)?;
        let p = self.degree;
        let mut rows = vec![vec![0.0; p + 1]; order + 1];
        for (k, row) in rows.iter_mut().enumerate().take(order.min(p) + 1) {
            derivative_row(&self.knots, span, p, t, k, row);
        }
        Ok(BasisDerivs {
            first: span - p,
            rows,
        })
    }

    /// Greville abscissae `(ξ_{j+1} + ... + ξ_{j+p}) / p`.
    pub fn greville_points(&self) -> Vec<f64> {
        let p = self.degree;
        (0..self.num_basis())
            .map(|j| self.knots[j + 1..=j + p].iter().sum::<f64>() / p as f64)
            .collect()
    }
}

/// Nonzero basis values at a point; `values[k]` belongs to function `first + k`.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisValues {
    pub first: usize,
    pub values: Vec<f64>,
}

/// Nonzero basis derivatives at a point; `rows[k][j]` is the `k`-th derivative
/// of function `first + j`.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisDerivs {
    pub first: usize,
    pub rows: Vec<Vec<f64>>,
}

#[inline]
fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Cox-de Boor recursion for the degree-`degree` functions on `span`.
///
/// `out` is a window of length `p + 1` where slot `w` belongs to function
/// `span - p + w`; the nonzero functions of degree `degree` occupy slots
/// `p - degree ..= p` and the slots below are zeroed.
fn window_values(knots: &[f64], span: usize, p: usize, degree: usize, t: f64, out: &mut [f64]) {
    out[..=p].fill(0.0);
    out[p] = 1.0;
    for k in 1..=degree {
        // ascending in-place update: slot w reads old w and old w + 1
        for w in p - k..=p {
            let j = span + w - p;
            let left = out[w];
            let right = if w < p { out[w + 1] } else { 0.0 };
            out[w] = ratio(t - knots[j], knots[j + k] - knots[j]) * left
                + ratio(knots[j + k + 1] - t, knots[j + k + 1] - knots[j + 1]) * right;
        }
    }
}

/// Degree-`p` values on `span` into `out[0..=p]` (functions `span - p ..= span`).
pub(crate) fn cox_de_boor(knots: &[f64], span: usize, p: usize, t: f64, out: &mut [f64]) {
    window_values(knots, span, p, p, t, out);
}

/// `k`-th derivatives of the degree-`p` functions on `span` into `out[0..=p]`.
///
/// Applies `b'_{j,d} = d/(ξ_{j+d}-ξ_j) b_{j,d-1} - d/(ξ_{j+d+1}-ξ_{j+1}) b_{j+1,d-1}`
/// `k` times, starting from the degree `p - k` values.
pub(crate) fn derivative_row(knots: &[f64], span: usize, p: usize, t: f64, k: usize, out: &mut [f64]) {
    window_values(knots, span, p, p - k, t, out);
    for d in p - k + 1..=p {
        for w in p - d..=p {
            let j = span + w - p;
            let left = out[w];
            let right = if w < p { out[w + 1] } else { 0.0 };
            out[w] = d as f64
                * (ratio(left, knots[j + d] - knots[j]) - ratio(right, knots[j + d + 1] - knots[j + 1]));
        }
    }
}

/// Boundary treatment of a univariate space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Constraint {
    None,
    /// Drops the first and last basis function (homogeneous Dirichlet in space).
    ZeroBothEnds,
    /// Drops the first basis function (homogeneous initial condition in time).
    ZeroLeftEnd,
}

/// A univariate spline space: a knot vector with some end functions removed.
///
/// Reduced degrees of freedom are numbered from 0; reduced index `r` is basis
/// function `r + offset()` of the full space.
#[derive(Clone, Debug, PartialEq)]
pub struct SplineSpace1D {
    knots: KnotVector,
    constraint: Constraint,
}

impl SplineSpace1D {
    pub fn new(knots: KnotVector, constraint: Constraint) -> Result<Self> {
        let removed = match constraint {
            Constraint::None => 0,
            Constraint::ZeroLeftEnd => 1,
            Constraint::ZeroBothEnds => 2,
        };
        if knots.num_basis() <= removed {
            return Err(Error::Argument(format!(
                "{} basis functions leave no degrees of freedom under {constraint:?}",
                knots.num_basis()
            )));
        }
        Ok(Self { knots, constraint })
    }

    pub fn knots(&self) -> &KnotVector {
        &self.knots
    }

    pub fn degree(&self) -> usize {
        self.knots.degree
    }

    pub fn constraint(&self) -> Constraint {
        self.constraint
    }

    pub fn offset(&self) -> usize {
        match self.constraint {
            Constraint::None => 0,
            Constraint::ZeroLeftEnd | Constraint::ZeroBothEnds => 1,
        }
    }

    pub fn dof_count(&self) -> usize {
        match self.constraint {
            Constraint::None => self.knots.num_basis(),
            Constraint::ZeroLeftEnd => self.knots.num_basis() - 1,
            Constraint::ZeroBothEnds => self.knots.num_basis() - 2,
        }
    }

    /// Reduced index of full basis function `j`, if it is retained.
    #[inline]
    pub fn reduced_index(&self, j: usize) -> Option<usize> {
        let off = self.offset();
        let r = j.checked_sub(off)?;
        (r < self.dof_count()).then_some(r)
    }

    /// The same knots without constraint.
    pub fn unconstrained(&self) -> Self {
        Self {
            knots: self.knots.clone(),
            constraint: Constraint::None,
        }
    }
}
