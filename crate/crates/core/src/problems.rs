//! Manufactured solutions with homogeneous data and a finite-difference
//! check of their forcing terms.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::GeometryMap;

pub type ScalarFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;
pub type GradFn = Arc<dyn Fn(f64, f64, f64) -> [f64; 2] + Send + Sync>;

/// Exact `u`, `v = −Δu` and `f = ∂ₜu + Δ²u − Δu`, all in physical
/// coordinates `(x, y, t)`.
#[derive(Clone)]
pub struct ManufacturedProblem {
    pub name: String,
    pub geometry: GeometryMap,
    pub final_time: f64,
    pub u: ScalarFn,
    pub grad_u: GradFn,
    pub dt_u: ScalarFn,
    pub v: ScalarFn,
    pub grad_v: GradFn,
    pub forcing: ScalarFn,
}

impl fmt::Debug for ManufacturedProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ManufacturedProblem")
            .field("name", &self.name)
            .field("geometry", &self.geometry)
            .field("final_time", &self.final_time)
            .finish_non_exhaustive()
    }
}

impl ManufacturedProblem {
    /// Looks up `example1` or `example2`.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "example1" => Ok(example1()),
            "example2" => Ok(example2()),
            _ => Err(Error::Argument(format!("unknown problem '{name}' (expected example1 or example2)"))),
        }
    }

    /// Same problem with a replaced forcing term.
    pub fn with_forcing(&self, forcing: ScalarFn) -> Self {
        Self {
            forcing,
            ..self.clone()
        }
    }
}

/// `u = sin(πt) sin(πx) sin(πy)` on the unit square, `T = 1`.
pub fn example1() -> ManufacturedProblem {
    let s = |x: f64| (PI * x).sin();
    let c = |x: f64| (PI * x).cos();
    let two_pi2 = 2.0 * PI * PI;
    let grad = move |x: f64, y: f64, t: f64| [PI * s(t) * c(x) * s(y), PI * s(t) * s(x) * c(y)];
    ManufacturedProblem {
        name: "example1".into(),
        geometry: GeometryMap::UnitSquare,
        final_time: 1.0,
        u: Arc::new(move |x, y, t| s(t) * s(x) * s(y)),
        grad_u: Arc::new(grad),
        dt_u: Arc::new(move |x, y, t| PI * c(t) * s(x) * s(y)),
        v: Arc::new(move |x, y, t| two_pi2 * s(t) * s(x) * s(y)),
        grad_v: Arc::new(move |x, y, t| grad(x, y, t).map(|g| two_pi2 * g)),
        forcing: Arc::new(move |x, y, t| {
            let space = s(x) * s(y);
            PI * c(t) * space + (two_pi2 * two_pi2 + two_pi2) * s(t) * space
        }),
    }
}

// Example 2 uses g(x, y) = x³y³ P³Q³ with R = x² + y², P = R − 1,
// Q = R − 4 and q = x²y²; u = t g. Writing Δg = xy (m0(R) + q m1(R)):
fn ex2_g(x: f64, y: f64) -> f64 {
    let r = x * x + y * y;
    let pq = (r - 1.0) * (r - 4.0);
    (x * y).powi(3) * pq.powi(3)
}

fn ex2_grad_g(x: f64, y: f64) -> [f64; 2] {
    let r = x * x + y * y;
    let (p, q) = (r - 1.0, r - 4.0);
    let h = (p * q).powi(3);
    let dh = 3.0 * (p * q).powi(2) * (2.0 * r - 5.0);
    [
        3.0 * x * x * y.powi(3) * h + 2.0 * x.powi(4) * y.powi(3) * dh,
        3.0 * y * y * x.powi(3) * h + 2.0 * y.powi(4) * x.powi(3) * dh,
    ]
}

fn ex2_m0(r: f64) -> f64 {
    6.0 * r * ((r - 1.0) * (r - 4.0)).powi(3)
}

fn ex2_m1(r: f64) -> f64 {
    12.0 * (r - 1.0) * (r - 4.0) * (((24.0 * r - 155.0) * r + 289.0) * r - 140.0)
}

fn ex2_dm0(r: f64) -> f64 {
    (((((42.0 * r - 540.0) * r + 2610.0) * r - 5880.0) * r + 6264.0) * r - 2880.0) * r + 384.0
}

fn ex2_dm1(r: f64) -> f64 {
    ((((1440.0 * r - 13200.0) * r + 41760.0) * r - 52920.0) * r) + 22272.0
}

fn ex2_lap_g(x: f64, y: f64) -> f64 {
    let r = x * x + y * y;
    x * y * (ex2_m0(r) + x * x * y * y * ex2_m1(r))
}

fn ex2_grad_lap_g(x: f64, y: f64) -> [f64; 2] {
    let r = x * x + y * y;
    let q = x * x * y * y;
    let m = ex2_m0(r) + q * ex2_m1(r);
    let dm = ex2_dm0(r) + q * ex2_dm1(r);
    let m1 = ex2_m1(r);
    [
        y * m + x * y * (2.0 * x * dm + 2.0 * x * y * y * m1),
        x * m + x * y * (2.0 * y * dm + 2.0 * y * x * x * m1),
    ]
}

fn ex2_bilap_g(x: f64, y: f64) -> f64 {
    let r = x * x + y * y;
    let q = x * x * y * y;
    let a = 72.0 * (r - 1.0) * (r - 4.0) * ((((45.0 * r - 290.0) * r + 545.0) * r - 280.0) * r + 16.0);
    let b = 384.0 * q * ((((165.0 * r - 1375.0) * r + 3915.0) * r - 4410.0) * r + 1624.0);
    x * y * (a + b)
}

/// `u = t x³y³(x² + y² − 1)³(x² + y² − 4)³` on the quarter annulus
/// `1 < r < 2`, `T = 1`. `Δu` carries the factors `x`, `y`, `(R − 1)`,
/// `(R − 4)`, so `v = −Δu` also vanishes on the boundary.
pub fn example2() -> ManufacturedProblem {
    ManufacturedProblem {
        name: "example2".into(),
        geometry: GeometryMap::ring(),
        final_time: 1.0,
        u: Arc::new(|x, y, t| t * ex2_g(x, y)),
        grad_u: Arc::new(|x, y, t| ex2_grad_g(x, y).map(|g| t * g)),
        dt_u: Arc::new(|x, y, _| ex2_g(x, y)),
        v: Arc::new(|x, y, t| -t * ex2_lap_g(x, y)),
        grad_v: Arc::new(|x, y, t| ex2_grad_lap_g(x, y).map(|g| -t * g)),
        forcing: Arc::new(|x, y, t| ex2_g(x, y) + t * (ex2_bilap_g(x, y) - ex2_lap_g(x, y))),
    }
}

/// Base step of the finite-difference residual check.
pub const FD_STEP: f64 = 0.04;
/// Required distance of samples from the boundary of `Ω × (0, T)`, in steps.
pub const FD_MARGIN_STEPS: f64 = 5.0;

/// `max |(∂ₜu + Δ²u − Δu) − f| / (1 + |f|)` over `points`, with all
/// derivatives of `u` taken by central differences.
///
/// The Laplacian is the 5-point stencil and the bilaplacian its square;
/// both are Richardson-extrapolated over steps `h, h/2, h/4`, cancelling the
/// `h²` and `h⁴` error terms. Points closer than `5h` to the boundary of the
/// space-time cylinder are rejected.
pub fn pde_residual_oracle(problem: &ManufacturedProblem, points: &[[f64; 3]]) -> Result<f64> {
    let h = FD_STEP;
    let margin = FD_MARGIN_STEPS * h;
    let u = &problem.u;
    let mut worst = 0.0_f64;
    for &[x, y, t] in points {
        let inside_time = t >= margin && t <= problem.final_time - margin;
        if !inside_time || problem.geometry.distance_to_boundary([x, y]) < margin {
            return Err(Error::Argument(format!(
                "sample ({x}, {y}, {t}) is closer than {margin} to the boundary"
            )));
        }
        let lap = |x: f64, y: f64, s: f64| {
            (u(x + s, y, t) + u(x - s, y, t) + u(x, y + s, t) + u(x, y - s, t) - 4.0 * u(x, y, t)) / (s * s)
        };
        let bilap = |s: f64| {
            (lap(x + s, y, s) + lap(x - s, y, s) + lap(x, y + s, s) + lap(x, y - s, s) - 4.0 * lap(x, y, s)) / (s * s)
        };
        let dt = |s: f64| (u(x, y, t + s) - u(x, y, t - s)) / (2.0 * s);
        let extrapolate = |d: &dyn Fn(f64) -> f64| {
            let (a, b, c) = (d(h), d(h / 2.0), d(h / 4.0));
            let (r1, r2) = ((4.0 * b - a) / 3.0, (4.0 * c - b) / 3.0);
            (16.0 * r2 - r1) / 15.0
        };
        let lhs = extrapolate(&dt) + extrapolate(&bilap) - extrapolate(&|s| lap(x, y, s));
        let f = (problem.forcing)(x, y, t);
        worst = worst.max((lhs - f).abs() / (1.0 + f.abs()));
    }
    Ok(worst)
}

fn radical_inverse(mut i: usize, base: usize) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base) as f64 * inv;
        i /= base;
        inv /= base as f64;
    }
    out
}

/// `count` deterministic space-time points (a Halton sequence) at least
/// `margin` away from the boundary of the cylinder.
pub fn interior_samples(problem: &ManufacturedProblem, count: usize, margin: f64) -> Vec<[f64; 3]> {
    let t_span = problem.final_time - 2.0 * margin;
    assert!(t_span > 0.0, "margin leaves no time interval");
    let mut out = Vec::with_capacity(count);
    let mut i = 1;
    while out.len() < count {
        let z = [radical_inverse(i, 2), radical_inverse(i, 3)];
        let x = problem.geometry.map_point(z);
        if problem.geometry.distance_to_boundary(x) >= margin {
            out.push([x[0], x[1], margin + t_span * radical_inverse(i, 5)]);
        }
        i += 1;
        assert!(i < 1000 * (count + 10), "margin leaves no interior");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn example1_point_values() {
        let p = example1();
        assert_relative_eq!((p.u)(0.5, 0.5, 0.5), 1.0, epsilon = 1e-15);
        assert_relative_eq!((p.v)(0.5, 0.5, 0.5), 2.0 * PI * PI, epsilon = 1e-13);
        assert_relative_eq!((p.forcing)(0.5, 0.5, 0.5), 4.0 * PI.powi(4) + 2.0 * PI * PI, epsilon = 1e-12);
    }

    #[test]
    fn example2_test_vector() {
        let p = example2();
        let c = 1.5 / 2f64.sqrt();
        // exact rational value of g at r = 1.5 on the diagonal
        assert_relative_eq!((p.u)(c, c, 1.0), -31255875.0 / 2097152.0, max_relative = 1e-14);
    }

    #[test]
    fn boundary_and_initial_traces_vanish() {
        for p in [example1(), example2()] {
            for i in 0..100 {
                let s = (i as f64 + 0.5) / 100.0;
                let t = 0.3 + 0.6 * s;
                let samples: Vec<[f64; 2]> = match &p.geometry {
                    GeometryMap::UnitSquare => vec![[s, 0.0], [s, 1.0], [0.0, s], [1.0, s]],
                    geo => vec![
                        geo.map_point([s, 0.0]),
                        geo.map_point([s, 1.0]),
                        geo.map_point([0.0, s]),
                        geo.map_point([1.0, s]),
                    ],
                };
                for x in samples {
                    // mapped points sit on the curved boundary only up to rounding,
                    // so the bound scales with the gradient there
                    let tol = |g: [f64; 2]| 1e-12 * g[0].hypot(g[1]).max(1.0);
                    let (gu, gv) = ((p.grad_u)(x[0], x[1], t), (p.grad_v)(x[0], x[1], t));
                    assert!((p.u)(x[0], x[1], t).abs() <= tol(gu), "{} u at {x:?}", p.name);
                    assert!((p.v)(x[0], x[1], t).abs() <= tol(gv), "{} v at {x:?}", p.name);
                }
                let x = p.geometry.map_point([s, 1.0 - s * s]);
                assert!((p.u)(x[0], x[1], 0.0).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for p in [example1(), example2()] {
            for pt in interior_samples(&p, 20, 0.05) {
                let [x, y, t] = pt;
                let h = 1e-6;
                let fd = |f: &ScalarFn| {
                    [
                        (f(x + h, y, t) - f(x - h, y, t)) / (2.0 * h),
                        (f(x, y + h, t) - f(x, y - h, t)) / (2.0 * h),
                    ]
                };
                let scale = |g: [f64; 2]| 1.0 + g[0].abs().max(g[1].abs());
                for (grad, f) in [((p.grad_u)(x, y, t), &p.u), ((p.grad_v)(x, y, t), &p.v)] {
                    let want = fd(f);
                    for k in 0..2 {
                        assert!((grad[k] - want[k]).abs() <= 1e-5 * scale(want), "{} {pt:?}", p.name);
                    }
                }
                let dt = ((p.u)(x, y, t + h) - (p.u)(x, y, t - h)) / (2.0 * h);
                assert!(((p.dt_u)(x, y, t) - dt).abs() <= 1e-5 * (1.0 + dt.abs()));
            }
        }
    }

    #[test]
    fn v_is_minus_laplacian() {
        for p in [example1(), example2()] {
            for [x, y, t] in interior_samples(&p, 10, 0.1) {
                let s = 1e-3;
                let u = &p.u;
                let lap = (u(x + s, y, t) + u(x - s, y, t) + u(x, y + s, t) + u(x, y - s, t) - 4.0 * u(x, y, t)) / (s * s);
                let v = (p.v)(x, y, t);
                assert!((v + lap).abs() <= 1e-4 * (1.0 + v.abs()), "{}", p.name);
            }
        }
    }

    #[test]
    fn residual_oracle_accepts_exact_and_catches_fault() {
        let margin = FD_MARGIN_STEPS * FD_STEP;
        for (p, bound) in [(example1(), 1e-6), (example2(), 1e-5)] {
            let pts = interior_samples(&p, 20, margin);
            assert!(pde_residual_oracle(&p, &pts).unwrap() <= bound);
            let f = p.forcing.clone();
            let bad = p.with_forcing(Arc::new(move |x, y, t| 1.01 * f(x, y, t)));
            assert!(pde_residual_oracle(&bad, &pts).unwrap() >= 1e-3);
        }
    }

    #[test]
    fn residual_oracle_rejects_boundary_points() {
        let p = example1();
        assert!(pde_residual_oracle(&p, &[[0.01, 0.5, 0.5]]).is_err());
        assert!(pde_residual_oracle(&p, &[[0.5, 0.5, 0.99]]).is_err());
    }
}
