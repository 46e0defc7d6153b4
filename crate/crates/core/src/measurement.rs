//! Sensor-side helpers: synthetic noise, particle counts from the solid
//! concentration, and the moments `𝓕ₙ(ψ) = ∫ψ(r)/r^{2n} dr` that drive the
//! injectivity checks.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::DensityField;
use crate::geometry::ShapeParam;
use crate::operator::KernelOperator;

/// Adds i.i.d. `N(0, (level·max q)²)` noise, reproducible from `seed`.
pub fn add_noise(field: &DensityField, level: f64, seed: u64) -> Result<DensityField> {
    if !(level >= 0.0 && level.is_finite()) {
        return Err(Error::invalid(format!("noise level must be ≥ 0, got {level}")));
    }
    if level == 0.0 {
        return Ok(field.clone());
    }
    let sigma = level * field.max().abs();
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = field.values.iter().map(|v| v + normal.sample(&mut rng)).collect();
    DensityField::new(field.grid.clone(), values, field.kind)
}

/// Solid concentration measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationData {
    /// kg of solid per kg of solvent
    pub c_s: f64,
    /// solid density, kg·m⁻³
    pub rho_s: f64,
    /// solvent mass, kg
    pub m_e: f64,
}

impl ConcentrationData {
    pub fn new(c_s: f64, rho_s: f64, m_e: f64) -> Result<Self> {
        for (name, v) in [("C_s", c_s), ("rho_s", rho_s), ("M_e", m_e)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self { c_s, rho_s, m_e })
    }
}

/// Total particle count `∫ψ` from a normalized PSD and the concentration.
pub fn estimate_particle_count(c: &ConcentrationData, shape: ShapeParam, psd_norm: &DensityField) -> Result<f64> {
    let r3: Vec<f64> = psd_norm
        .grid
        .nodes()
        .iter()
        .zip(&psd_norm.values)
        .map(|(r, p)| p * r.powi(3))
        .collect();
    let third = psd_norm.grid.integrate(&r3);
    if !(third > 0.0) {
        return Err(Error::invalid("normalized PSD has no positive third moment"));
    }
    Ok(3.0 / (4.0 * PI * shape.eta()) * (c.m_e / c.rho_s) * c.c_s / third)
}

/// `r_lo^{2n}·𝓕ₙ(ψ)`, with `r_lo` the first grid node. Stays finite for
/// large `n` where `𝓕ₙ` itself overflows.
pub fn moment_f_scaled(n: u32, psd: &DensityField) -> Result<f64> {
    let lo = psd.grid.lo();
    if lo <= 0.0 {
        return Err(Error::invalid("moment 𝓕ₙ needs a grid starting above 0"));
    }
    let vals: Vec<f64> = psd
        .grid
        .nodes()
        .iter()
        .zip(&psd.values)
        .map(|(r, p)| p * (lo / r).powi(2 * n as i32))
        .collect();
    Ok(psd.grid.integrate(&vals))
}

pub fn moment_f(n: u32, psd: &DensityField) -> Result<f64> {
    Ok(moment_f_scaled(n, psd)? / psd.grid.lo().powi(2 * n as i32))
}

/// Estimate of `(d/dℓ)^{2n} (𝓚_i ψ)(0)` from a least-squares fit of an even
/// polynomial of degree `2n+2` to `𝓚_i ψ` on `[0, fit_fraction·2r_min]`.
pub fn derivative_at_zero(
    op: &KernelOperator,
    shape: usize,
    psd: &[f64],
    n: u32,
    fit_fraction: f64,
    fit_points: usize,
) -> Result<f64> {
    if n == 0 || fit_points < (n as usize + 3) {
        return Err(Error::invalid("need n ≥ 1 and more fit points than coefficients"));
    }
    let h = fit_fraction * 2.0 * op.radial_grid().lo();
    let ells: Vec<f64> = (0..fit_points)
        .map(|j| h * j as f64 / (fit_points - 1) as f64)
        .collect();
    let y = op.evaluate_at(shape, psd, &ells)?;
    let terms = n as usize + 2;
    let a = DMatrix::from_fn(fit_points, terms, |j, k| (ells[j] / h).powi(2 * k as i32));
    let coeffs = a
        .svd(true, true)
        .solve(&DVector::from_vec(y), 1e-14)
        .map_err(|e| Error::invalid(e.to_string()))?;
    let factorial: f64 = (1..=2 * n).map(f64::from).product();
    Ok(coeffs[n as usize] * factorial / h.powi(2 * n as i32))
}
