//! Analytic parametrizations of the spatial domain.
//!
//! Points and gradients are plain `[f64; 2]`. Jacobians are stored with
//! `matrix[i][j] = ∂x_i / ∂ζ_j`.

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GeometryMap {
    /// Identity map onto `(0, 1)²`.
    UnitSquare,
    /// Polar map onto `{r_in < r < r_out, 0 < θ < π/2}`; `ζ₁` is radial and
    /// `ζ₂` angular.
    QuarterAnnulus { r_in: f64, r_out: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jacobian {
    pub matrix: [[f64; 2]; 2],
    pub det: f64,
}

/// Pulled-back metric of a map whose Jacobian has orthogonal columns that
/// depend on `ζ₁` only.
///
/// For such maps `∫ ∇u·∇w dx = ∫ (g₁ ∂₁u ∂₁w + g₂ ∂₂u ∂₂w) dζ` and
/// `∫ u w dx = ∫ m u w dζ` with `m = det J` and `g_k = det J / |∂x/∂ζ_k|²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricProfile {
    pub measure: f64,
    pub grad_weight: [f64; 2],
}

impl GeometryMap {
    pub fn quarter_annulus(r_in: f64, r_out: f64) -> Result<Self> {
        if !(r_in > 0.0 && r_out > r_in && r_out.is_finite()) {
            return Err(Error::Argument(format!(
                "quarter annulus needs 0 < r_in < r_out, got r_in = {r_in}, r_out = {r_out}"
            )));
        }
        Ok(GeometryMap::QuarterAnnulus { r_in, r_out })
    }

    /// The ring used by the second manufactured problem: radii 1 and 2.
    pub fn ring() -> Self {
        GeometryMap::QuarterAnnulus { r_in: 1.0, r_out: 2.0 }
    }

    /// Looks up a map by its configuration name (`square` or `ring`).
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "square" => Ok(GeometryMap::UnitSquare),
            "ring" => Ok(Self::ring()),
            other => Err(Error::config("geometry", format!("unknown geometry `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GeometryMap::UnitSquare => "square",
            GeometryMap::QuarterAnnulus { .. } => "ring",
        }
    }

    pub fn map_point(&self, z: [f64; 2]) -> [f64; 2] {
        match *self {
            GeometryMap::UnitSquare => z,
            GeometryMap::QuarterAnnulus { r_in, r_out } => {
                let r = r_in + z[0] * (r_out - r_in);
                let (s, c) = (FRAC_PI_2 * z[1]).sin_cos();
                [r * c, r * s]
            }
        }
    }

    pub fn jacobian(&self, z: [f64; 2]) -> Jacobian {
        match *self {
            GeometryMap::UnitSquare => Jacobian {
                matrix: [[1.0, 0.0], [0.0, 1.0]],
                det: 1.0,
            },
            GeometryMap::QuarterAnnulus { r_in, r_out } => {
                let dr = r_out - r_in;
                let r = r_in + z[0] * dr;
                let (s, c) = (FRAC_PI_2 * z[1]).sin_cos();
                let matrix = [[dr * c, -FRAC_PI_2 * r * s], [dr * s, FRAC_PI_2 * r * c]];
                Jacobian {
                    matrix,
                    det: dr * FRAC_PI_2 * r,
                }
            }
        }
    }

    /// Physical gradient `J⁻ᵀ ĝ` of a function whose parametric gradient is `ĝ`.
    pub fn pullback_gradient(&self, z: [f64; 2], parametric: [f64; 2]) -> Result<[f64; 2]> {
        self.jacobian(z).pullback(z, parametric)
    }

    /// Exact area of the image.
    pub fn area(&self) -> f64 {
        match *self {
            GeometryMap::UnitSquare => 1.0,
            GeometryMap::QuarterAnnulus { r_in, r_out } => FRAC_PI_2 * 0.5 * (r_out * r_out - r_in * r_in),
        }
    }

    /// Whether [`metric_profile`](Self::metric_profile) describes the map exactly.
    pub fn has_separable_metric(&self) -> bool {
        // both maps have orthogonal Jacobian columns whose lengths depend on ζ₁ only
        true
    }

    /// Metric weights along `ζ₁`; see [`MetricProfile`].
    pub fn metric_profile(&self, z1: f64) -> MetricProfile {
        let j = self.jacobian([z1, 0.0]);
        let len2 = |k: usize| j.matrix[0][k].powi(2) + j.matrix[1][k].powi(2);
        MetricProfile {
            measure: j.det,
            grad_weight: [j.det / len2(0), j.det / len2(1)],
        }
    }

    /// Euclidean distance from a physical point inside the domain to its boundary.
    pub fn distance_to_boundary(&self, x: [f64; 2]) -> f64 {
        match *self {
            GeometryMap::UnitSquare => x[0].min(1.0 - x[0]).min(x[1]).min(1.0 - x[1]),
            GeometryMap::QuarterAnnulus { r_in, r_out } => {
                let r = x[0].hypot(x[1]);
                x[0].min(x[1]).min(r - r_in).min(r_out - r)
            }
        }
    }
}

impl Jacobian {
    pub fn pullback(&self, z: [f64; 2], g: [f64; 2]) -> Result<[f64; 2]> {
        let m = &self.matrix;
        let scale = m.iter().flatten().map(|v| v * v).sum::<f64>();
        if !(self.det.abs() > f64::EPSILON * scale) {
            return Err(Error::SingularJacobian { point: z, det: self.det });
        }
        let inv = 1.0 / self.det;
        Ok([
            (m[1][1] * g[0] - m[1][0] * g[1]) * inv,
            (m[0][0] * g[1] - m[0][1] * g[0]) * inv,
        ])
    }
}

impl fmt::Display for GeometryMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeometryMap::UnitSquare => write!(f, "unit square"),
            GeometryMap::QuarterAnnulus { r_in, r_out } => write!(f, "quarter annulus ({r_in}, {r_out})"),
        }
    }
}
