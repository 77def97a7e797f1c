//! The group Sol = R ⋉ R², with elements `(z, x, y)` and product
//! `(z, x, y)(z', x', y') = (z + z', x + e^{-z} x', y + e^{z} y')`.
//!
//! Besides the group law this module exposes the one-parameter subgroups
//! through an element, the two-sided distance bounds that are available
//! without geodesic shooting, and the affine action on the two boundary
//! lines.

use std::ops::Mul;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this, the vertical coordinate is treated as zero in `real_power`.
pub const REAL_POWER_Z_EPS: f64 = 1e-12;

/// Tolerance used when comparing boundary fixed points.
pub const FIXED_POINT_TOL: f64 = 1e-9;

/// An element `(z, x, y)` of Sol.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SolElement {
    pub z: f64,
    pub x: f64,
    pub y: f64,
}

/// Which boundary line: `Plus` is the x-line reached by walks drifting up,
/// `Minus` the y-line reached by walks drifting down.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundarySide {
    Plus,
    Minus,
}

impl BoundarySide {
    /// Side hit by a walk with vertical drift `alpha` (must be nonzero).
    pub fn from_drift(alpha: f64) -> Option<Self> {
        if alpha > 0.0 {
            Some(BoundarySide::Plus)
        } else if alpha < 0.0 {
            Some(BoundarySide::Minus)
        } else {
            None
        }
    }
}

impl SolElement {
    pub const IDENTITY: SolElement = SolElement { z: 0.0, x: 0.0, y: 0.0 };

    pub const fn new(z: f64, x: f64, y: f64) -> Self {
        SolElement { z, x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.z.is_finite() && self.x.is_finite() && self.y.is_finite()
    }

    /// Group product, reporting overflow to non-finite coordinates.
    pub fn checked_mul(&self, rhs: &SolElement) -> Result<SolElement> {
        let out = *self * *rhs;
        if out.is_finite() {
            Ok(out)
        } else {
            Err(Error::NumericRange(format!(
                "product of {self:?} and {rhs:?} is not finite"
            )))
        }
    }

    pub fn inverse(&self) -> SolElement {
        SolElement {
            z: -self.z,
            x: -self.z.exp() * self.x,
            y: -(-self.z).exp() * self.y,
        }
    }

    /// `g^t` along the one-parameter subgroup through `g`.
    ///
    /// For `z ≠ 0` this is `(tz, x (e^{-tz} - 1)/(e^{-z} - 1), y (e^{tz} - 1)/(e^{z} - 1))`;
    /// the removable singularity at `z = 0` is filled by `(0, tx, ty)`.
    pub fn real_power(&self, t: f64) -> SolElement {
        let z = self.z;
        if z.abs() < REAL_POWER_Z_EPS {
            return SolElement::new(t * z, t * self.x, t * self.y);
        }
        SolElement {
            z: t * z,
            x: self.x * ((-t * z).exp_m1() / (-z).exp_m1()),
            y: self.y * ((t * z).exp_m1() / z.exp_m1()),
        }
    }

    /// Affine action on a boundary line: `x + e^{-z} ξ` on the plus side,
    /// `y + e^{z} ξ` on the minus side.
    pub fn act(&self, xi: f64, side: BoundarySide) -> f64 {
        match side {
            BoundarySide::Plus => self.x + (-self.z).exp() * xi,
            BoundarySide::Minus => self.y + self.z.exp() * xi,
        }
    }

    /// The fixed point `p^±(g)` of the boundary action.
    pub fn fixed_point(&self, side: BoundarySide) -> Result<f64> {
        if self.z == 0.0 {
            return Err(Error::Degenerate(
                "fixed point undefined for an element with z = 0".into(),
            ));
        }
        Ok(match side {
            BoundarySide::Plus => self.x / -(-self.z).exp_m1(),
            BoundarySide::Minus => self.y / -self.z.exp_m1(),
        })
    }

    /// Horizontal Euclidean norm `‖(x, y)‖`.
    pub fn horizontal_norm(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

impl Mul for SolElement {
    type Output = SolElement;

    fn mul(self, rhs: SolElement) -> SolElement {
        SolElement {
            z: self.z + rhs.z,
            x: self.x + (-self.z).exp() * rhs.x,
            y: self.y + self.z.exp() * rhs.y,
        }
    }
}

/// Free function form of the group product.
pub fn multiply(a: &SolElement, b: &SolElement) -> Result<SolElement> {
    a.checked_mul(b)
}

pub fn inverse(g: &SolElement) -> SolElement {
    g.inverse()
}

pub fn real_power(g: &SolElement, t: f64) -> SolElement {
    g.real_power(t)
}

pub fn boundary_action(g: &SolElement, xi: f64, side: BoundarySide) -> f64 {
    g.act(xi, side)
}

pub fn fixed_point(g: &SolElement, side: BoundarySide) -> Result<f64> {
    g.fixed_point(side)
}

/// Exact distance from the identity to `(0, x, 0)` (equivalently `(0, 0, x)`),
/// `2 log(√(1 + x²/4) + |x|/2) = 2 asinh(|x|/2)`.
pub fn axis_distance(x: f64) -> f64 {
    2.0 * (x.abs() / 2.0).asinh()
}

/// Lower and upper bounds on the left-invariant Riemannian distance `d(id, g)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceBounds {
    pub lower: f64,
    pub upper: f64,
}

/// Distance in the hyperbolic plane `dz² + e^{2z} dx²` from the origin to `(z, x)`.
pub(crate) fn hyperbolic_plane_distance(z: f64, x: f64) -> f64 {
    // upper half-plane coordinates: (0, 1) to (x, e^{-z}); the distance is
    // 2 asinh(R) with R = |(x, e^{-z} - 1)| e^{z/2} / 2, evaluated in log form
    let h = (-z).exp_m1();
    let log_r = x.hypot(h).ln() - std::f64::consts::LN_2 + z / 2.0;
    if log_r > 20.0 {
        2.0 * (log_r + std::f64::consts::LN_2)
    } else {
        2.0 * log_r.exp().asinh()
    }
}

/// Two-sided bounds on `d(id, g)`.
///
/// Lower: the distances in the two totally geodesic hyperbolic planes that
/// `g` projects to (projection is 1-Lipschitz, and both dominate `|z|`), and
/// `2 log(‖(x,y)‖/4 + 1/2) - |z|` from the horizontal distortion bound.
///
/// Upper: the minimum over three factorizations of `g` into axis segments,
/// `(0,x,y)(z,0,0)`, `(0,x,0)(z,0,0)(0,0,e^{-z}y)` and
/// `(0,0,y)(z,0,0)(0,e^{z}x,0)`, each bounded by the triangle inequality.
pub fn distance_bounds(g: &SolElement) -> DistanceBounds {
    let az = g.z.abs();
    let norm = g.horizontal_norm();
    let plane_lower = 2.0 * (0.25 * norm + 0.5).ln();
    let plane_upper = 4.0 * (norm + 1.0).ln();

    let via_plane = az + plane_upper;
    let x_first = axis_distance(g.x) + az + axis_distance((-g.z).exp() * g.y);
    let y_first = axis_distance(g.y) + az + axis_distance(g.z.exp() * g.x);
    let upper = via_plane.min(x_first).min(y_first);

    let lower = hyperbolic_plane_distance(g.z, g.x)
        .max(hyperbolic_plane_distance(-g.z, g.y))
        .max(plane_lower - az)
        .max(az)
        .min(upper);
    DistanceBounds { lower, upper }
}

/// Whether `g` and `h` have distinct fixed points on the given boundary line,
/// which makes the group they generate act properly on it.
pub fn is_proper_pair(g: &SolElement, h: &SolElement, side: BoundarySide) -> Result<bool> {
    let pg = g.fixed_point(side)?;
    let ph = h.fixed_point(side)?;
    Ok((pg - ph).abs() > FIXED_POINT_TOL)
}
