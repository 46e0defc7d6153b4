//! Regularized least squares for the single-shape CLD → PSD problem:
//! minimize `‖𝓚ψ − Q̄‖² + δ‖ψ‖²`, optionally subject to `ψ ≥ 0`.
//!
//! Data of kind [`FieldKind::Cld`] are fitted by the density operator
//! `∂ℓ𝓚` instead, discretized with the stencil of [`differentiate`].
//!
//! Norms are the quadrature-weighted L² norms of the grids. With weights
//! `W_ℓ`, `W_r` the problem is rewritten for `x = W_r^{1/2}ψ` as
//! `‖Bx − b‖² + δ‖x‖²` with `B = W_ℓ^{1/2} A W_r^{-1/2}`, `b = W_ℓ^{1/2}Q̄`.
//!
//! `length_unit` sets the unit in which δ is understood. Measuring lengths
//! in units of `L` multiplies the data term by `1/L` and the penalty by `L`,
//! so the SI-equivalent parameter is `δ·L²`. For density data both terms
//! scale alike and `length_unit` has no effect.

use nalgebra::{Cholesky, DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{differentiate, DensityField, FieldKind};
use crate::operator::KernelOperator;

/// Which form of the measured CLD is fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataForm {
    /// The density `q`.
    #[default]
    Density,
    /// The cumulative `Q`.
    Cumulative,
}

impl DataForm {
    /// Picks the matching field of a noisy `(q, Q)` pair.
    pub fn pick<'f>(self, q: &'f DensityField, big_q: &'f DensityField) -> &'f DensityField {
        match self {
            DataForm::Density => q,
            DataForm::Cumulative => big_q,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TikhonovOptions {
    pub nonneg: bool,
    /// Length unit in meters in which δ is expressed.
    pub length_unit: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for TikhonovOptions {
    fn default() -> Self {
        Self {
            nonneg: true,
            length_unit: 1.0,
            tol: 1e-8,
            max_iters: 50_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TikhonovProblem<'a> {
    pub operator: &'a KernelOperator,
    pub data: &'a DensityField,
    pub delta: f64,
    pub options: TikhonovOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TikhonovSolution {
    pub psd: DensityField,
    pub residual_norm: f64,
    pub solution_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub delta: f64,
    pub residual_norm: f64,
    pub solution_norm: f64,
}

pub fn solve(problem: &TikhonovProblem) -> Result<TikhonovSolution> {
    TikhonovSolver::new(problem.operator, problem.data, problem.options)?.solve(problem.delta)
}

pub fn sweep_delta(problem: &TikhonovProblem, deltas: &[f64]) -> Result<Vec<(SweepPoint, TikhonovSolution)>> {
    if deltas.is_empty() {
        return Ok(Vec::new());
    }
    TikhonovSolver::new(problem.operator, problem.data, problem.options)?.sweep(deltas)
}

/// Factorizations shared by every δ for one operator and data set.
pub struct TikhonovSolver<'a> {
    operator: &'a KernelOperator,
    options: TikhonovOptions,
    density: bool,
    b_mat: DMatrix<f64>,
    b_vec: DVector<f64>,
    svd: SVD<f64, nalgebra::Dyn, nalgebra::Dyn>,
    gram: DMatrix<f64>,
    rhs: DVector<f64>,
    sqrt_wr: Vec<f64>,
    sigma_max: f64,
}

impl<'a> TikhonovSolver<'a> {
    pub fn new(operator: &'a KernelOperator, data: &DensityField, options: TikhonovOptions) -> Result<Self> {
        if operator.n_shapes() != 1 {
            return Err(Error::invalid("Tikhonov inversion needs a single-shape operator"));
        }
        if !data.grid.same_as(operator.chord_grid()) {
            return Err(Error::GridMismatch(
                "data grid differs from the operator chord grid".into(),
            ));
        }
        if !(options.length_unit > 0.0 && options.tol > 0.0) {
            return Err(Error::invalid("length_unit and tol must be positive"));
        }
        let sqrt_wl: Vec<f64> = operator.chord_grid().weights().iter().map(|w| w.sqrt()).collect();
        let sqrt_wr: Vec<f64> = operator.radial_grid().weights().iter().map(|w| w.sqrt()).collect();
        let density = match data.kind {
            FieldKind::CumulativeCld => false,
            FieldKind::Cld => true,
            FieldKind::Psd => return Err(Error::invalid("Tikhonov data must be a CLD, got a PSD")),
        };
        let mut a = operator.weighted_block(0);
        if density {
            let grid = operator.chord_grid();
            for mut col in a.column_iter_mut() {
                let big_q = DensityField {
                    grid: grid.clone(),
                    values: col.iter().copied().collect(),
                    kind: FieldKind::CumulativeCld,
                };
                col.iter_mut()
                    .zip(differentiate(&big_q).values)
                    .for_each(|(c, v)| *c = v);
            }
        }
        let b_mat = DMatrix::from_fn(a.nrows(), a.ncols(), |j, m| sqrt_wl[j] * a[(j, m)] / sqrt_wr[m]);
        let b_vec = DVector::from_iterator(sqrt_wl.len(), sqrt_wl.iter().zip(&data.values).map(|(w, q)| w * q));
        let gram = b_mat.tr_mul(&b_mat);
        let rhs = b_mat.tr_mul(&b_vec);
        let svd = SVD::new(b_mat.clone(), true, true);
        let sigma_max = svd.singular_values.max();
        Ok(Self {
            operator,
            options,
            density,
            b_mat,
            b_vec,
            svd,
            gram,
            rhs,
            sqrt_wr,
            sigma_max,
        })
    }

    fn effective_delta(&self, delta: f64) -> f64 {
        if self.density {
            return delta;
        }
        delta * self.options.length_unit.powi(2)
    }

    fn filtered(&self, delta_eff: f64) -> Result<DVector<f64>> {
        let s = &self.svd.singular_values;
        if delta_eff == 0.0 {
            let sigma_min = s.min();
            if sigma_min <= f64::EPSILON * s.len() as f64 * self.sigma_max {
                return Err(Error::Singular { sigma_min });
            }
        }
        let u = self.svd.u.as_ref().expect("computed with U");
        let vt = self.svd.v_t.as_ref().expect("computed with Vᵀ");
        let utb = u.tr_mul(&self.b_vec);
        let coeffs = DVector::from_iterator(s.len(), (0..s.len()).map(|i| s[i] / (s[i] * s[i] + delta_eff) * utb[i]));
        Ok(vt.tr_mul(&coeffs))
    }

    pub fn solve(&self, delta: f64) -> Result<TikhonovSolution> {
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::invalid(format!("δ must be ≥ 0, got {delta}")));
        }
        let d = self.effective_delta(delta);
        let (x, iterations, converged) = if self.options.nonneg {
            let start = match self.filtered(d) {
                Ok(x) => x.map(|v| v.max(0.0)),
                Err(_) => DVector::zeros(self.rhs.len()),
            };
            self.projected(d, start)
        } else {
            (self.filtered(d)?, 0, true)
        };
        self.finish(x, iterations, converged)
    }

    pub fn sweep(&self, deltas: &[f64]) -> Result<Vec<(SweepPoint, TikhonovSolution)>> {
        if deltas.iter().any(|d| !(*d > 0.0)) || deltas.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("δ values must be positive and sorted"));
        }
        deltas
            .iter()
            .map(|&delta| {
                let sol = self.solve(delta)?;
                let point = SweepPoint {
                    delta,
                    residual_norm: sol.residual_norm,
                    solution_norm: sol.solution_norm,
                };
                Ok((point, sol))
            })
            .collect()
    }

    /// Gradient of `½(‖Bx−b‖² + δ‖x‖²)`.
    fn gradient(&self, delta_eff: f64, x: &DVector<f64>) -> DVector<f64> {
        &self.gram * x + x * delta_eff - &self.rhs
    }

    fn projected_gradient_norm(&self, x: &DVector<f64>, g: &DVector<f64>) -> f64 {
        x.iter()
            .zip(g.iter())
            .map(|(xi, gi)| if *xi > 0.0 { *gi } else { gi.min(0.0) })
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    fn objective(&self, delta_eff: f64, x: &DVector<f64>) -> f64 {
        (&self.b_mat * x - &self.b_vec).norm_squared() + delta_eff * x.norm_squared()
    }

    /// Accelerated projected gradient with adaptive restart, followed by an
    /// attempt to finish on the detected support.
    fn projected(&self, d: f64, start: DVector<f64>) -> (DVector<f64>, usize, bool) {
        let lip = self.sigma_max * self.sigma_max + d;
        let scale = self.rhs.norm().max(f64::MIN_POSITIVE);
        let threshold = self.options.tol * scale;
        let mut x = start;
        let mut y = x.clone();
        let mut t = 1.0f64;
        let mut iterations = 0;
        let mut converged = false;
        for it in 0..self.options.max_iters {
            iterations = it + 1;
            let gx = self.gradient(d, &x);
            if self.projected_gradient_norm(&x, &gx) <= threshold {
                converged = true;
                iterations = it;
                break;
            }
            if it % 50 == 0 {
                if let Some(p) = self.polish(d, &x, threshold) {
                    x = p;
                    converged = true;
                    break;
                }
            }
            let gy = self.gradient(d, &y);
            let next = (&y - gy / lip).map(|v| v.max(0.0));
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            // restart momentum when it points uphill
            if (&next - &x).dot(&(&y - &next)) > 0.0 {
                y = next.clone();
                t = 1.0;
            } else {
                y = &next + (&next - &x) * ((t - 1.0) / t_next);
                t = t_next;
            }
            x = next;
        }
        (x, iterations, converged)
    }

    /// Solves the reduced normal equations on the support of `x` and keeps
    /// the result when it is feasible and satisfies the KKT conditions.
    fn polish(&self, d: f64, x: &DVector<f64>, threshold: f64) -> Option<DVector<f64>> {
        let g = self.gradient(d, x);
        let free: Vec<usize> = (0..x.len()).filter(|&i| x[i] > 0.0 || g[i] < 0.0).collect();
        if free.is_empty() {
            return None;
        }
        let h = DMatrix::from_fn(free.len(), free.len(), |a, b| {
            self.gram[(free[a], free[b])] + if a == b { d } else { 0.0 }
        });
        let c = DVector::from_iterator(free.len(), free.iter().map(|&i| self.rhs[i]));
        let sol = Cholesky::new(h)?.solve(&c);
        if sol.iter().any(|v| *v < 0.0) {
            return None;
        }
        let mut out = DVector::zeros(x.len());
        for (k, &i) in free.iter().enumerate() {
            out[i] = sol[k];
        }
        let g = self.gradient(d, &out);
        if self.projected_gradient_norm(&out, &g) <= threshold && self.objective(d, &out) <= self.objective(d, x) {
            Some(out)
        } else {
            None
        }
    }

    fn finish(&self, x: DVector<f64>, iterations: usize, converged: bool) -> Result<TikhonovSolution> {
        let values: Vec<f64> = x.iter().zip(&self.sqrt_wr).map(|(v, w)| v / w).collect();
        let residual_norm = (&self.b_mat * &x - &self.b_vec).norm();
        let solution_norm = x.norm();
        let psd = DensityField::new(self.operator.radial_grid().clone(), values, FieldKind::Psd)?;
        Ok(TikhonovSolution {
            psd,
            residual_norm,
            solution_norm,
            iterations,
            converged,
        })
    }
}
