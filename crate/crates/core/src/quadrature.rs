//! Gauss-Legendre rules, mapped into every nonempty knot span.

use crate::bspline::KnotVector;
use crate::error::{Error, Result};

pub const MAX_POINTS: usize = 16;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
///
/// Nodes are returned in increasing order.
pub fn gauss_legendre_reference(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(1..=MAX_POINTS).contains(&n) {
        return Err(Error::Argument(format!(
            "Gauss-Legendre rule needs 1..={MAX_POINTS} points, got {n}"
        )));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-type initial guess for the i-th largest root
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-15 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok((nodes, weights))
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// How many Gauss points to place in each knot span.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PointsPerSpan {
    /// `p + 1` points for a direction of degree `p`.
    #[default]
    DegreePlusOne,
    /// `p + k` points for a direction of degree `p`.
    DegreePlus(usize),
    /// The same count in every direction.
    Fixed(usize),
}

impl PointsPerSpan {
    pub fn for_degree(self, degree: usize) -> usize {
        match self {
            PointsPerSpan::DegreePlusOne => degree + 1,
            PointsPerSpan::DegreePlus(k) => degree + k,
            PointsPerSpan::Fixed(n) => n,
        }
    }
}

/// A Gauss rule repeated on each nonempty span of a knot vector.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule1D {
    spans: Vec<usize>,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    points_per_span: usize,
}

impl QuadratureRule1D {
    /// Reference rule mapped affinely into every nonempty span of `kv`.
    pub fn per_span(kv: &KnotVector, points_per_span: usize) -> Result<Self> {
        let (ref_nodes, ref_weights) = gauss_legendre_reference(points_per_span)?;
        let spans = kv.nonempty_spans();
        let mut nodes = Vec::with_capacity(spans.len() * points_per_span);
        let mut weights = Vec::with_capacity(spans.len() * points_per_span);
        for &s in &spans {
            let (a, b) = (kv.knots()[s], kv.knots()[s + 1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (x, w) in ref_nodes.iter().zip(&ref_weights) {
                nodes.push(mid + half * x);
                weights.push(half * w);
            }
        }
        Ok(Self {
            spans,
            nodes,
            weights,
            points_per_span,
        })
    }

    pub fn points_per_span(&self) -> usize {
        self.points_per_span
    }

    pub fn num_elements(&self) -> usize {
        self.spans.len()
    }

    /// Knot span index of element `e`.
    pub fn span(&self, e: usize) -> usize {
        self.spans[e]
    }

    pub fn element_nodes(&self, e: usize) -> &[f64] {
        let q = self.points_per_span;
        &self.nodes[e * q..(e + 1) * q]
    }

    pub fn element_weights(&self, e: usize) -> &[f64] {
        let q = self.points_per_span;
        &self.weights[e * q..(e + 1) * q]
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(*x)).sum()
    }
}
