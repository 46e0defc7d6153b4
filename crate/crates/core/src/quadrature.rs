//! Gauss–Legendre rules and the tensor-product angular rule used for
//! orientation averages.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nodes and weights of an `n`-point Gauss–Legendre rule on `[-1, 1]`.
///
/// Roots are found by Newton iteration on the three-term recurrence,
/// starting from the Tricomi approximation.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
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
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (
        x.iter().map(|t| mid + half * t).collect(),
        w.iter().map(|v| v * half).collect(),
    )
}

/// Node counts of the tensor-product rule over the folded orientation
/// domain `φ ∈ [0, π/2] × cosθ ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AngularQuadSpec {
    pub n_phi: usize,
    pub n_theta: usize,
}

impl Default for AngularQuadSpec {
    fn default() -> Self {
        Self { n_phi: 64, n_theta: 64 }
    }
}

impl AngularQuadSpec {
    pub fn new(n_phi: usize, n_theta: usize) -> Result<Self> {
        if n_phi == 0 || n_theta == 0 {
            return Err(Error::invalid("angular quadrature needs at least one node per axis"));
        }
        Ok(Self { n_phi, n_theta })
    }
}

/// One orientation node with its probability weight (the `sinθ/4π` density
/// and, for the folded rule, the symmetry factor 8 are already included).
#[derive(Debug, Clone, Copy)]
pub struct AngularNode {
    pub phi: f64,
    pub theta: f64,
    pub weight: f64,
}

/// Tensor-product Gauss–Legendre rule for expectations under the uniform
/// orientation measure `sinθ/(4π) dφ dθ`.
///
/// The polar angle is integrated in `v = cosθ`, for which the measure is
/// flat. `α_η` is invariant under `φ → π − φ`, `φ → φ + π` and `θ → π − θ`,
/// so the folded rule covers one eighth of the sphere with weight ×8.
#[derive(Debug, Clone)]
pub struct AngularQuadrature {
    spec: AngularQuadSpec,
    nodes: Vec<AngularNode>,
}

impl AngularQuadrature {
    pub fn new(spec: AngularQuadSpec) -> Self {
        let (phis, wphi) = gauss_legendre_on(spec.n_phi, 0.0, FRAC_PI_2);
        let (vs, wv) = gauss_legendre_on(spec.n_theta, 0.0, 1.0);
        let mut nodes = Vec::with_capacity(spec.n_phi * spec.n_theta);
        for (phi, wp) in phis.iter().zip(&wphi) {
            for (v, w) in vs.iter().zip(&wv) {
                nodes.push(AngularNode {
                    phi: *phi,
                    theta: v.acos(),
                    weight: 8.0 * wp * w / (4.0 * PI),
                });
            }
        }
        Self { spec, nodes }
    }

    /// Same rule replicated on all eight sub-domains of the sphere (no
    /// symmetry folding). Used to check the folding.
    pub fn full_domain(spec: AngularQuadSpec) -> Self {
        let (phis, wphi) = gauss_legendre_on(spec.n_phi, 0.0, FRAC_PI_2);
        let (vs, wv) = gauss_legendre_on(spec.n_theta, 0.0, 1.0);
        let mut nodes = Vec::with_capacity(8 * spec.n_phi * spec.n_theta);
        for kp in 0..4 {
            for (phi, wp) in phis.iter().zip(&wphi) {
                for sign in [1.0, -1.0] {
                    for (v, w) in vs.iter().zip(&wv) {
                        nodes.push(AngularNode {
                            phi: phi + kp as f64 * FRAC_PI_2,
                            theta: (sign * v).acos(),
                            weight: wp * w / (4.0 * PI),
                        });
                    }
                }
            }
        }
        Self { spec, nodes }
    }

    pub fn spec(&self) -> AngularQuadSpec {
        self.spec
    }

    pub fn nodes(&self) -> &[AngularNode] {
        &self.nodes
    }

    /// `Σ w f(φ, θ)`.
    pub fn expectation(&self, mut f: impl FnMut(f64, f64) -> f64) -> f64 {
        self.nodes.iter().map(|n| n.weight * f(n.phi, n.theta)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(10);
        for deg in 0..20 {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-14, "degree {deg}: {q} vs {exact}");
        }
    }

    #[test]
    fn odd_rule_has_center_node() {
        let (x, w) = gauss_legendre(5);
        assert_eq!(x[2], 0.0);
        assert!((w[2] - 128.0 / 225.0).abs() < 1e-15);
    }

    #[test]
    fn orientation_measure_has_unit_mass() {
        for spec in [AngularQuadSpec::new(8, 8).unwrap(), AngularQuadSpec::default()] {
            let q = AngularQuadrature::new(spec);
            assert!((q.expectation(|_, _| 1.0) - 1.0).abs() < 1e-13);
            let full = AngularQuadrature::full_domain(spec);
            assert!((full.expectation(|_, _| 1.0) - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn mapped_rule_integrates_sine() {
        let (x, w) = gauss_legendre_on(20, 0.0, PI);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.sin()).sum();
        assert!((s - 2.0).abs() < 1e-14);
    }
}
