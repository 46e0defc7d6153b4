//! Spheroid projection geometry: the shadow ellipse of a rotated spheroid
//! and the chords cut through it at constant ordinate.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Aspect ratio η of a spheroid: polar diameter over equatorial diameter.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ShapeParam(f64);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeClass {
    Oblate,
    Sphere,
    Prolate,
}

impl ShapeParam {
    pub const SPHERE: ShapeParam = ShapeParam(1.0);

    pub fn new(eta: f64) -> Result<Self> {
        if eta.is_finite() && eta > 0.0 {
            Ok(Self(eta))
        } else {
            Err(Error::invalid(format!(
                "shape parameter must be positive and finite (got {eta})"
            )))
        }
    }

    pub fn eta(self) -> f64 {
        self.0
    }

    pub fn class(self) -> ShapeClass {
        if self.0 < 1.0 {
            ShapeClass::Oblate
        } else if self.0 > 1.0 {
            ShapeClass::Prolate
        } else {
            ShapeClass::Sphere
        }
    }

    /// Longest chord relative to the equatorial radius: `2·max(η, 1)`.
    pub fn max_chord_factor(self) -> f64 {
        2.0 * self.0.max(1.0)
    }

    /// Particle volume `(4π/3)·η·r³`.
    pub fn volume(self, r: f64) -> f64 {
        4.0 * PI / 3.0 * self.0 * r.powi(3)
    }
}

impl TryFrom<f64> for ShapeParam {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        ShapeParam::new(v)
    }
}

impl From<ShapeParam> for f64 {
    fn from(s: ShapeParam) -> f64 {
        s.0
    }
}

/// Orientation of the symmetry axis in spherical angles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Orientation {
    phi: f64,
    theta: f64,
}

impl Orientation {
    pub fn new(phi: f64, theta: f64) -> Result<Self> {
        if !(0.0..=2.0 * PI).contains(&phi) || !(0.0..=PI).contains(&theta) {
            return Err(Error::invalid(format!(
                "orientation out of range: phi={phi} must lie in [0, 2π], theta={theta} in [0, π]"
            )));
        }
        Ok(Self { phi, theta })
    }

    pub fn phi(self) -> f64 {
        self.phi
    }

    pub fn theta(self) -> f64 {
        self.theta
    }

    /// Uniform orientation: φ uniform, θ by inverse CDF of the `sinθ/2` marginal.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let phi = rng.random::<f64>() * 2.0 * PI;
        let u: f64 = rng.random();
        let theta = (1.0 - 2.0 * u).clamp(-1.0, 1.0).acos();
        Self { phi, theta }
    }
}

/// Coefficients of the shadow ellipse `α x² + β y² + γ x y = r²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipseCoeffs {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

/// `α_η(φ, θ)`, the only coefficient the kernel needs.
#[inline]
pub fn alpha(eta: f64, phi: f64, theta: f64) -> f64 {
    let (sp, cp) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    cp * cp / (ct * ct + eta * eta * st * st) + sp * sp
}

pub fn ellipse_coeffs(shape: ShapeParam, o: Orientation) -> EllipseCoeffs {
    let eta2 = shape.eta() * shape.eta();
    let (sp, cp) = o.phi.sin_cos();
    let (st, ct) = o.theta.sin_cos();
    let denom = ct * ct + eta2 * st * st;
    EllipseCoeffs {
        alpha: cp * cp / denom + sp * sp,
        beta: sp * sp / denom + cp * cp,
        gamma: -(eta2 - 1.0) * st * st * (2.0 * o.phi).sin() / denom,
    }
}

impl EllipseCoeffs {
    /// `4αβ − γ²`, strictly positive for any spheroid.
    pub fn discriminant_factor(&self) -> f64 {
        4.0 * self.alpha * self.beta - self.gamma * self.gamma
    }

    /// Largest ordinate reached by the shadow ellipse of a particle of radius `r`.
    pub fn y_max(&self, r: f64) -> f64 {
        2.0 * self.alpha.sqrt() * r / self.discriminant_factor().sqrt()
    }

    /// Length of the horizontal chord at ordinate `y`, or `None` when the
    /// line misses the ellipse.
    pub fn chord_length_at(&self, y: f64, r: f64) -> Option<f64> {
        let ymax = self.y_max(r);
        if y.abs() > ymax {
            return None;
        }
        let delta = self.gamma * self.gamma * y * y - 4.0 * self.alpha * (self.beta * y * y - r * r);
        Some(delta.max(0.0).sqrt() / self.alpha)
    }
}

pub fn chord_ordinate_max(coeffs: &EllipseCoeffs, r: f64) -> f64 {
    coeffs.y_max(r)
}

pub fn chord_length_at(y: f64, coeffs: &EllipseCoeffs, r: f64) -> Option<f64> {
    coeffs.chord_length_at(y, r)
}

/// Draws one chord length from a randomly oriented spheroid of radius `r`:
/// uniform orientation, then a uniform ordinate across the shadow.
pub fn mc_chord_sample<R: Rng + ?Sized>(r: f64, shape: ShapeParam, rng: &mut R) -> f64 {
    let o = Orientation::sample(rng);
    let c = ellipse_coeffs(shape, o);
    let ymax = c.y_max(r);
    let y = (2.0 * rng.random::<f64>() - 1.0) * ymax;
    // |y| <= ymax by construction
    c.chord_length_at(y, r).unwrap_or(0.0)
}
