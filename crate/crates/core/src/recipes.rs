//! Ready-made experiment setups: the bimodal Tikhonov reconstruction and the
//! two-shape observer run, with the metrics used to judge them.
//!
//! The Gaussian profiles below are written in a scaled length unit of
//! `1e-4 m` (so `e^{-30(x-1.5)²}` with `x = r/1e-4`), which makes them
//! resolvable peaks on grids spanning a few hundred micrometres.

use serde::{Deserialize, Serialize};

use crate::bfn::{BfnConfig, BfnOutcome, CldSeries, Coupling, Observer};
use crate::error::Result;
use crate::field::{cumulative, differentiate, DensityField, FieldKind};
use crate::geometry::ShapeParam;
use crate::grid::Grid1D;
use crate::measurement::add_noise;
use crate::operator::KernelOperator;
use crate::quadrature::gauss_legendre_on;
use crate::quadrature::AngularQuadSpec;
use crate::tikhonov::{DataForm, TikhonovOptions, TikhonovSolution, TikhonovSolver};
use crate::transport::{
    extend_initial_state, simulate, Direction, ExtendedState, GrowthSchedule, NucleationInput, ProcessModel, Profile,
    Trajectory,
};

pub const HOUR: f64 = 3600.0;

/// Length unit (m) of the scaled Gaussian profiles and of δ.
pub const SCALED_LENGTH_UNIT: f64 = 1e-4;

/// `e^{-30(x-c)²}` summed over `centers` (given in meters), with `x` in
/// scaled units, normalized to unit mass on `grid`.
pub fn gaussian_mixture(grid: &Grid1D, centers: &[f64]) -> Result<DensityField> {
    DensityField::from_fn(grid.clone(), FieldKind::Psd, |r| {
        centers
            .iter()
            .map(|c| (-30.0 * ((r - c) / SCALED_LENGTH_UNIT).powi(2)).exp())
            .sum()
    })?
    .normalized()
}

/// Two-peak PSD with maxima at 1.5e-4 m and 2.5e-4 m.
pub fn bimodal_psd(grid: &Grid1D) -> Result<DensityField> {
    gaussian_mixture(grid, &[1.5e-4, 2.5e-4])
}

/// Adds noise to the density `q = dQ/dℓ` and integrates it back, so that
/// zero noise returns `big_q` unchanged.
pub fn noisy_cumulative(big_q: &DensityField, level: f64, seed: u64) -> Result<(DensityField, DensityField)> {
    let q = differentiate(big_q);
    let noisy_q = add_noise(&q, level, seed)?;
    let noise: Vec<f64> = noisy_q.values.iter().zip(&q.values).map(|(a, b)| a - b).collect();
    let noise = DensityField::new(q.grid.clone(), noise, FieldKind::Cld)?;
    let integrated = cumulative(&noise);
    let values = big_q
        .values
        .iter()
        .zip(&integrated.values)
        .map(|(a, b)| a + b)
        .collect();
    Ok((
        noisy_q,
        DensityField::new(big_q.grid.clone(), values, FieldKind::CumulativeCld)?,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TikhonovExperiment {
    pub eta: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub n_points: usize,
    pub noise: f64,
    pub seed: u64,
    pub deltas: Vec<f64>,
    pub fit: DataForm,
    pub quad: AngularQuadSpec,
    pub options: TikhonovOptions,
}

impl Default for TikhonovExperiment {
    fn default() -> Self {
        Self {
            eta: 2.0,
            r_min: 1e-4,
            r_max: 3e-4,
            n_points: 200,
            noise: 0.02,
            seed: 0,
            deltas: vec![1e-5, 1e-3, 1e-1],
            fit: DataForm::Density,
            quad: AngularQuadSpec::default(),
            options: TikhonovOptions {
                length_unit: SCALED_LENGTH_UNIT,
                ..TikhonovOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct TikhonovRun {
    pub truth: DensityField,
    pub clean: DensityField,
    pub noisy_density: DensityField,
    pub noisy: DensityField,
    pub solutions: Vec<(f64, TikhonovSolution)>,
}

impl TikhonovExperiment {
    pub fn operator(&self) -> Result<KernelOperator> {
        let shape = ShapeParam::new(self.eta)?;
        let rg = Grid1D::new(self.r_min, self.r_max, self.n_points)?;
        let cg = Grid1D::new(0.0, shape.max_chord_factor() * self.r_max, self.n_points)?;
        KernelOperator::build(rg, cg, &[shape], self.quad)
    }

    pub fn run(&self) -> Result<TikhonovRun> {
        self.run_with(&self.operator()?)
    }

    pub fn run_with(&self, op: &KernelOperator) -> Result<TikhonovRun> {
        let truth = bimodal_psd(op.radial_grid())?;
        let clean = op.apply(std::slice::from_ref(&truth))?;
        let (noisy_density, noisy) = noisy_cumulative(&clean, self.noise, self.seed)?;
        let solver = TikhonovSolver::new(op, self.fit.pick(&noisy_density, &noisy), self.options)?;
        let solutions = self
            .deltas
            .iter()
            .map(|&d| Ok((d, solver.solve(d)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(TikhonovRun {
            truth,
            clean,
            noisy_density,
            noisy,
            solutions,
        })
    }
}

/// Two-shape growth experiment observed through its cumulative CLD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObserverExperiment {
    pub r_min: f64,
    pub r_max: f64,
    /// Seconds.
    pub t_max: f64,
    pub etas: Vec<f64>,
    /// m·s⁻¹.
    pub growth: Vec<f64>,
    /// Radial spacing per shape as a fraction of `r_max − r_min`.
    pub spacing_fraction: Vec<f64>,
    /// Peak positions (m) of the terminal profile of each shape; an empty
    /// list means the shape is absent.
    pub terminal_peaks: Vec<Vec<f64>>,
    pub n_radius: usize,
    pub n_chord: usize,
    pub quad: AngularQuadSpec,
    /// Zero each shape's kernel past its own largest chord.
    pub truncate_support: bool,
    pub bfn: BfnConfig,
}

impl Default for ObserverExperiment {
    fn default() -> Self {
        Self {
            r_min: 1e-4,
            r_max: 2e-4,
            t_max: HOUR,
            etas: vec![1.0, 2.0],
            growth: vec![1e-4 / HOUR, 2e-4 / HOUR],
            spacing_fraction: vec![0.01, 0.02],
            terminal_peaks: vec![vec![1.5e-4], vec![1.5e-4]],
            n_radius: 101,
            n_chord: 201,
            quad: AngularQuadSpec::default(),
            truncate_support: true,
            bfn: BfnConfig::default(),
        }
    }
}

/// Sum of `e^{-30((r−c)/10⁻⁴ m)²}` over `peaks`, normalized to unit mass on
/// `[r_min, r_max]` and zero outside.
pub fn terminal_gaussians(r_min: f64, r_max: f64, peaks: &[f64]) -> impl Fn(f64) -> f64 + Send + Sync + 'static {
    let peaks = peaks.to_vec();
    let raw = move |r: f64| -> f64 {
        peaks
            .iter()
            .map(|c| (-30.0 * ((r - c) / SCALED_LENGTH_UNIT).powi(2)).exp())
            .sum()
    };
    let (x, w) = gauss_legendre_on(64, r_min, r_max);
    let mass: f64 = x.iter().zip(&w).map(|(x, w)| w * raw(*x)).sum();
    let scale = if mass > 0.0 { 1.0 / mass } else { 0.0 };
    let slack = 1e-9 * (r_max - r_min);
    move |r| {
        if (r_min - slack..=r_max + slack).contains(&r) {
            scale * raw(r)
        } else {
            0.0
        }
    }
}

/// Everything needed to run the observer against a known truth.
pub struct ObserverSetup {
    pub model: ProcessModel,
    pub operator: KernelOperator,
    pub truth: Trajectory,
    pub data: CldSeries,
}

impl ObserverExperiment {
    /// Terminal profile of `shape`, see [`terminal_gaussians`].
    pub fn terminal_profile(&self, shape: usize) -> impl Fn(f64) -> f64 + Send + Sync + 'static {
        terminal_gaussians(self.r_min, self.r_max, &self.terminal_peaks[shape])
    }

    /// Zero initial PSD and nucleation inputs chosen along characteristics so
    /// that each shape ends at its terminal profile.
    pub fn model(&self) -> Result<ProcessModel> {
        let n = self.etas.len();
        let span = self.r_max - self.r_min;
        let inputs = (0..n)
            .map(|i| {
                let g = self.growth[i];
                let (r_min, t_max) = (self.r_min, self.t_max);
                let target = self.terminal_profile(i);
                Profile::function(move |t| target(r_min + g * (t_max - t)))
            })
            .collect();
        let model = ProcessModel {
            r_min: self.r_min,
            r_max: self.r_max,
            t_max: self.t_max,
            growth: GrowthSchedule::constant(&self.growth),
            nucleation: NucleationInput { inputs },
            spacing: self.spacing_fraction.iter().map(|f| f * span).collect(),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn operator(&self) -> Result<KernelOperator> {
        let shapes = self
            .etas
            .iter()
            .map(|&e| ShapeParam::new(e))
            .collect::<Result<Vec<_>>>()?;
        let factor = shapes.iter().map(|s| s.max_chord_factor()).fold(0.0, f64::max);
        let rg = Grid1D::new(self.r_min, self.r_max, self.n_radius)?;
        let cg = Grid1D::new(0.0, factor * self.r_max, self.n_chord)?;
        let op = KernelOperator::build(rg, cg, &shapes, self.quad)?;
        Ok(if self.truncate_support {
            op.truncated_to_support()
        } else {
            op
        })
    }

    pub fn setup(&self) -> Result<ObserverSetup> {
        self.setup_with(self.operator()?)
    }

    pub fn setup_with(&self, operator: KernelOperator) -> Result<ObserverSetup> {
        let model = self.model()?;
        let psd0: Vec<DensityField> = (0..self.etas.len())
            .map(|_| DensityField::zeros(operator.radial_grid().clone(), FieldKind::Psd))
            .collect();
        let start = extend_initial_state(&model, &psd0)?;
        let steps = self.bfn.n_steps.unwrap_or_else(|| model.default_steps());
        let truth = simulate(start, &model.growth, model.t_max, steps, Direction::Forward, |_, _| {
            Ok(())
        })?;
        let coupling = Coupling::new(&operator, truth.last())?;
        let data = CldSeries::from_trajectory(&coupling, &truth)?;
        Ok(ObserverSetup {
            model,
            operator,
            truth,
            data,
        })
    }
}

impl ObserverSetup {
    pub fn run(&self, config: BfnConfig) -> Result<BfnOutcome> {
        let observer = Observer::new(&self.model, &self.operator, &self.data, config)?;
        let initial = ExtendedState::zeros(&self.model)?;
        observer.run(initial, Some(self.truth.last()))
    }
}

/// Positions of strict interior local maxima whose height exceeds
/// `min_fraction` of the global maximum.
pub fn interior_maxima(field: &DensityField, min_fraction: f64) -> Vec<f64> {
    let v = &field.values;
    let floor = min_fraction * field.max();
    (1..v.len().saturating_sub(1))
        .filter(|&i| v[i] > v[i - 1] && v[i] >= v[i + 1] && v[i] > floor)
        .map(|i| field.grid.node(i))
        .collect()
}

/// `‖a − b‖/‖b‖` in the grid's L² norm.
pub fn relative_l2_error(estimate: &DensityField, truth: &DensityField) -> f64 {
    let diff: Vec<f64> = estimate.values.iter().zip(&truth.values).map(|(a, b)| a - b).collect();
    truth.grid.norm(&diff) / truth.grid.norm(&truth.values)
}
