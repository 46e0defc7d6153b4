//! The chord-length kernel `k(ℓ, r) = P(L < ℓ | R = r)` and the orientation
//! moments `aₙ(η)`, `bₙ` that govern its Taylor expansion at `ℓ = 0`.

use crate::error::{Error, Result};
use crate::geometry::{alpha, ShapeParam};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::quadrature::{gauss_legendre_on, AngularQuadSpec, AngularQuadrature};

/// Smallest radius accepted by the kernel (the formulas divide by `r`).
pub const DEFAULT_RADIUS_FLOOR: f64 = 1e-12;

/// `α_η` tabulated on the nodes of an angular rule, ready for repeated
/// kernel evaluations at a fixed shape.
#[derive(Debug, Clone)]
pub struct OrientationTable {
    shape: ShapeParam,
    spec: AngularQuadSpec,
    alpha: Vec<f64>,
    weight: Vec<f64>,
    alpha_min: f64,
    alpha_max: f64,
    phi_rule: (Vec<f64>, Vec<f64>),
    v_rule: (Vec<f64>, Vec<f64>),
}

impl OrientationTable {
    pub fn new(shape: ShapeParam, spec: AngularQuadSpec) -> Self {
        Self::from_rule(shape, &AngularQuadrature::new(spec))
    }

    pub fn from_rule(shape: ShapeParam, rule: &AngularQuadrature) -> Self {
        let eta = shape.eta();
        let spec = rule.spec();
        let (alpha, weight) = rule
            .nodes()
            .iter()
            .map(|n| (alpha(eta, n.phi, n.theta), n.weight))
            .unzip();
        let inv = 1.0 / (eta * eta);
        Self {
            shape,
            spec,
            alpha,
            weight,
            alpha_min: inv.min(1.0),
            alpha_max: inv.max(1.0),
            phi_rule: gauss_legendre_on(spec.n_phi, 0.0, 1.0),
            v_rule: gauss_legendre_on(spec.n_theta, 0.0, 1.0),
        }
    }

    pub fn shape(&self) -> ShapeParam {
        self.shape
    }

    pub fn spec(&self) -> AngularQuadSpec {
        self.spec
    }

    /// Kernel value at the reduced variable `s = (ℓ / 2r)²`.
    ///
    /// Orientations with `s·α ≥ 1` cut a chord shorter than `ℓ` with
    /// probability one, so the radicand is clamped at zero. When no
    /// orientation is clamped the plain tensor rule is used; otherwise the
    /// integration domain is split along the clamping curve.
    pub fn kernel_reduced(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        if s * self.alpha_min >= 1.0 {
            return 1.0;
        }
        let k = if s * self.alpha_max <= 1.0 {
            self.alpha
                .iter()
                .zip(&self.weight)
                .map(|(a, w)| w * one_minus_sqrt(s * a))
                .sum()
        } else {
            self.kernel_split(s)
        };
        k.clamp(0.0, 1.0)
    }

    /// `k(ℓ, r)`; assumes validated, finite arguments.
    pub fn kernel(&self, ell: f64, r: f64) -> f64 {
        if ell <= 0.0 {
            return 0.0;
        }
        if ell >= r * self.shape.max_chord_factor() {
            return 1.0;
        }
        let u = ell / (2.0 * r);
        self.kernel_reduced(u * u)
    }

    /// `aₙ(η) = E[α_ηⁿ]` under the uniform orientation measure.
    pub fn moment_a(&self, n: u32) -> f64 {
        self.alpha
            .iter()
            .zip(&self.weight)
            .map(|(a, w)| w * a.powi(n as i32))
            .sum()
    }

    // In (φ, v = cosθ) the folded measure is (2/π) dφ dv on [0, π/2] × [0, 1]
    // and α = cos²φ / D(v) + sin²φ with D(v) = η² − (η² − 1) v².
    // For fixed φ the unclamped set is one v-interval ending at v*, where the
    // integrand has a square-root edge; the inner integral in turn has edges
    // in φ where v* reaches 0 or where sin²φ = 1/s. Each piece is integrated
    // with a sine-mapped Gauss rule, which absorbs square-root endpoints.
    fn kernel_split(&self, s: f64) -> f64 {
        let e2 = self.shape.eta().powi(2);
        let inv_s = 1.0 / s;
        let mut cuts = vec![0.0, FRAC_PI_2];
        for b in [(e2 * inv_s - 1.0) / (e2 - 1.0), inv_s] {
            if b > 0.0 && b < 1.0 {
                cuts.push(b.sqrt().asin());
            }
        }
        cuts.sort_by(|a, b| a.total_cmp(b));
        let mut total = 0.0;
        for pair in cuts.windows(2) {
            let (p, q) = (pair[0], pair[1]);
            if q - p <= 0.0 {
                continue;
            }
            total += sine_mapped(&self.phi_rule, p, q, |phi| self.inner_v(phi, s, e2, inv_s));
        }
        total * 2.0 / PI
    }

    fn inner_v(&self, phi: f64, s: f64, e2: f64, inv_s: f64) -> f64 {
        let (sp, cp) = phi.sin_cos();
        let (a, b) = (cp * cp, sp * sp);
        let room = inv_s - b;
        if room <= 0.0 {
            return 1.0;
        }
        let d_star = a / room;
        let (lo, hi, clamped) = if e2 > 1.0 {
            if d_star >= e2 {
                return 1.0;
            }
            let v = ((e2 - d_star) / (e2 - 1.0)).clamp(0.0, 1.0).sqrt();
            (0.0, v, 1.0 - v)
        } else {
            if d_star >= 1.0 {
                return 1.0;
            }
            let v = ((d_star - e2) / (1.0 - e2)).clamp(0.0, 1.0).sqrt();
            (v, 1.0, v)
        };
        if hi <= lo {
            return clamped;
        }
        clamped
            + sine_mapped(&self.v_rule, lo, hi, |v| {
                let d = e2 - (e2 - 1.0) * v * v;
                one_minus_sqrt(s * (a / d + b))
            })
    }
}

#[inline]
fn one_minus_sqrt(x: f64) -> f64 {
    if x >= 1.0 {
        1.0
    } else {
        x / (1.0 + (1.0 - x).sqrt())
    }
}

/// `∫_p^q f` through `x = p + (q − p)(1 − cos πt)/2`, Gauss nodes in `t`.
fn sine_mapped(rule: &(Vec<f64>, Vec<f64>), p: f64, q: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let len = q - p;
    rule.0
        .iter()
        .zip(&rule.1)
        .map(|(t, w)| {
            let x = p + len * 0.5 * (1.0 - (PI * t).cos());
            let jac = len * 0.5 * PI * (PI * t).sin();
            w * jac * f(x)
        })
        .sum()
}

/// Probability that a uniformly oriented spheroid of radius `r` and shape
/// `shape` shows a chord shorter than `ell`.
pub fn kernel_value(ell: f64, r: f64, shape: ShapeParam, quad: AngularQuadSpec) -> Result<f64> {
    if !ell.is_finite() || !r.is_finite() {
        return Err(Error::invalid(format!(
            "kernel arguments must be finite (ell={ell}, r={r})"
        )));
    }
    if ell < 0.0 {
        return Err(Error::invalid(format!("chord length must be nonnegative (got {ell})")));
    }
    if r <= DEFAULT_RADIUS_FLOOR {
        return Err(Error::invalid(format!(
            "radius {r:e} is below the floor {DEFAULT_RADIUS_FLOOR:e}"
        )));
    }
    if ell == 0.0 {
        return Ok(0.0);
    }
    if ell >= r * shape.max_chord_factor() {
        return Ok(1.0);
    }
    Ok(OrientationTable::new(shape, quad).kernel(ell, r))
}

/// `aₙ(η)`, evaluated with the same angular rule as the kernel.
pub fn moment_a(n: u32, shape: ShapeParam, quad: AngularQuadSpec) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("moment index must be at least 1"));
    }
    if shape.eta() == 1.0 {
        return Ok(1.0);
    }
    Ok(OrientationTable::new(shape, quad).moment_a(n))
}

/// `bₙ = (2n)! / ((n!)² (1 − 2n) 4²ⁿ)`, by the ratio recurrence so it stays
/// finite for large `n`.
pub fn moment_b(n: u32) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("moment index must be at least 1"));
    }
    let mut b = -0.125;
    for k in 1..n {
        let k = k as f64;
        b *= (2.0 * k + 1.0) * (2.0 * k + 2.0) * (1.0 - 2.0 * k) / ((k + 1.0) * (k + 1.0) * (-1.0 - 2.0 * k) * 16.0);
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(eta: f64) -> ShapeParam {
        ShapeParam::new(eta).unwrap()
    }

    fn sphere_closed_form(ell: f64, r: f64) -> f64 {
        1.0 - (1.0 - (ell / (2.0 * r)).powi(2)).max(0.0).sqrt()
    }

    #[test]
    fn sphere_examples() {
        let q = AngularQuadSpec::default();
        let k = kernel_value(1e-3, 1e-3, ShapeParam::SPHERE, q).unwrap();
        assert!((k - (1.0 - 0.75f64.sqrt())).abs() < 1e-12);
        assert!((k - 0.1339746).abs() < 1e-7);
        assert_eq!(kernel_value(2e-3, 1e-3, ShapeParam::SPHERE, q).unwrap(), 1.0);
        assert_eq!(kernel_value(0.0, 1e-3, ShapeParam::SPHERE, q).unwrap(), 0.0);
    }

    #[test]
    fn sphere_matches_closed_form_everywhere() {
        let q = AngularQuadSpec::default();
        let r = 1e-3;
        for i in 0..=400 {
            let ell = 2.0 * r * i as f64 / 400.0;
            let k = kernel_value(ell, r, ShapeParam::SPHERE, q).unwrap();
            assert!((k - sphere_closed_form(ell, r)).abs() <= 1e-9, "ell={ell}");
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let q = AngularQuadSpec::default();
        assert!(kernel_value(f64::NAN, 1e-3, ShapeParam::SPHERE, q).is_err());
        assert!(kernel_value(1e-3, f64::INFINITY, ShapeParam::SPHERE, q).is_err());
        assert!(kernel_value(-1e-3, 1e-3, ShapeParam::SPHERE, q).is_err());
        assert!(kernel_value(1e-3, 0.0, ShapeParam::SPHERE, q).is_err());
        assert!(kernel_value(1e-3, 1e-13, ShapeParam::SPHERE, q).is_err());
    }

    #[test]
    fn saturates_at_longest_chord() {
        let q = AngularQuadSpec::default();
        for &eta in &[0.5, 2.0, 6.0] {
            let s = shape(eta);
            let top = 1e-3 * s.max_chord_factor();
            assert_eq!(kernel_value(top, 1e-3, s, q).unwrap(), 1.0);
            let just_below = kernel_value(top * (1.0 - 1e-9), 1e-3, s, q).unwrap();
            assert!(just_below > 0.999, "eta={eta}: {just_below}");
        }
    }

    #[test]
    fn default_rule_close_to_fine_rule() {
        // 64² vs 256², including the clamped band
        let coarse = AngularQuadSpec::default();
        let fine = AngularQuadSpec::new(256, 256).unwrap();
        for &eta in &[0.5, 2.0] {
            let tc = OrientationTable::new(shape(eta), coarse);
            let tf = OrientationTable::new(shape(eta), fine);
            let top = shape(eta).max_chord_factor();
            let mut worst: f64 = 0.0;
            for i in 1..100 {
                let ell = top * 1e-3 * i as f64 / 100.0;
                worst = worst.max((tc.kernel(ell, 1e-3) - tf.kernel(ell, 1e-3)).abs());
            }
            assert!(worst < 1e-6, "eta={eta}: {worst:e}");
        }
    }

    #[test]
    fn moment_a_examples() {
        let q = AngularQuadSpec::default();
        assert_eq!(moment_a(5, ShapeParam::SPHERE, q).unwrap(), 1.0);
        // a₁(2) = ½ + ½·E_θ[1/(1 + 3 sin²θ)], with E_θ computed by a
        // composite Simpson rule over u = cosθ ∈ [-1, 1]
        let n = 20_000;
        let h = 2.0 / n as f64;
        let f = |u: f64| 0.5 / (4.0 - 3.0 * u * u);
        let mut simpson = f(-1.0) + f(1.0);
        for i in 1..n {
            let u = -1.0 + i as f64 * h;
            simpson += if i % 2 == 1 { 4.0 } else { 2.0 } * f(u);
        }
        simpson *= h / 3.0;
        let oracle = 0.5 + 0.5 * simpson;
        let closed = 0.5 + 0.5 / (2.0 * 3f64.sqrt()) * (3f64.sqrt() / 2.0).atanh();
        assert!((oracle - closed).abs() < 1e-12);
        let a1 = moment_a(1, shape(2.0), q).unwrap();
        assert!((a1 - oracle).abs() < 1e-12, "{a1} vs {oracle}");
        assert!((a1 - 0.69009).abs() < 1e-5);
        assert!(moment_a(0, shape(2.0), q).is_err());
    }

    #[test]
    fn moment_b_examples() {
        assert_eq!(moment_b(1).unwrap(), -1.0 / 8.0);
        assert!((moment_b(2).unwrap() + 1.0 / 128.0).abs() < 1e-18);
        // direct factorial evaluation
        for n in 1..=12u32 {
            let fact = |k: u32| (1..=k).map(|i| i as f64).product::<f64>();
            let direct = fact(2 * n) / (fact(n).powi(2) * (1.0 - 2.0 * n as f64) * 4f64.powi(2 * n as i32));
            let b = moment_b(n).unwrap();
            assert!((b - direct).abs() <= 1e-14 * direct.abs(), "n={n}");
            assert!(b < 0.0);
        }
        let b200 = moment_b(200).unwrap();
        assert!(b200.is_finite() && b200 < 0.0);
        assert!(moment_b(0).is_err());
    }

    #[test]
    fn folded_rule_matches_full_domain() {
        let spec = AngularQuadSpec::new(24, 24).unwrap();
        let full = AngularQuadrature::full_domain(spec);
        for &eta in &[0.5, 2.0, 6.0] {
            let folded = OrientationTable::new(shape(eta), spec);
            let unfolded = OrientationTable::from_rule(shape(eta), &full);
            for n in [1, 3, 10] {
                let (a, b) = (folded.moment_a(n), unfolded.moment_a(n));
                assert!((a - b).abs() < 1e-12 * a.max(1.0), "eta={eta} n={n}: {a} vs {b}");
            }
            for i in 0..40 {
                let s = i as f64 / 10.0;
                assert!((folded.kernel_reduced(s) - unfolded.kernel_reduced(s)).abs() < 1e-12);
            }
        }
    }
}
