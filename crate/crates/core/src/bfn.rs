//! Back-and-forth nudging: forward and backward Luenberger observers on the
//! window `[0, t_max]`, each started from where the previous one ended and
//! nudged towards the measured cumulative CLD by `∓μ𝓚*(𝓚ψ̂ − Q̄)`.
//!
//! Each time step transports the estimate, then applies the correction
//! `ψ̂ ← ψ̂ − dt·μ·𝓚*(𝓚ψ̂ − Q̄(t))` on `[r_min, r_max]`. The backward sweep
//! marches from `t_max` to 0, so the same update damps the innovation in
//! both directions. Shape grids are coupled to the operator's radial grid by
//! linear interpolation `P`, and the correction uses its weighted adjoint.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::operator::KernelOperator;
use crate::transport::{simulate, Direction, ExtendedState, ProcessModel, Trajectory};

/// Cumulative CLD samples `Q̄(t_k, ℓ_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CldSeries {
    pub times: Vec<f64>,
    pub chord_grid: Grid1D,
    pub values: Vec<Vec<f64>>,
}

impl CldSeries {
    pub fn new(times: Vec<f64>, chord_grid: Grid1D, values: Vec<Vec<f64>>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::invalid("CLD series needs one profile per time"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("CLD series times must increase strictly"));
        }
        if values
            .iter()
            .any(|v| v.len() != chord_grid.len() || v.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::GridMismatch(
                "CLD profile length differs from the chord grid".into(),
            ));
        }
        Ok(Self {
            times,
            chord_grid,
            values,
        })
    }

    /// Profile at `t`, linear in time between samples.
    pub fn at(&self, t: f64) -> Result<Vec<f64>> {
        let n = self.times.len();
        let tol = 1e-9 * self.times[n - 1].abs().max(1.0);
        if t < self.times[0] - tol || t > self.times[n - 1] + tol {
            return Err(Error::invalid(format!(
                "no CLD data at t={t} (series covers [{}, {}])",
                self.times[0],
                self.times[n - 1]
            )));
        }
        let k = self.times.partition_point(|&s| s <= t + tol);
        if k == 0 {
            return Ok(self.values[0].clone());
        }
        let k = k - 1;
        if (t - self.times[k]).abs() <= tol || k + 1 == n {
            return Ok(self.values[k].clone());
        }
        let f = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        Ok(self.values[k]
            .iter()
            .zip(&self.values[k + 1])
            .map(|(a, b)| a * (1.0 - f) + b * f)
            .collect())
    }

    /// Synthesizes `𝓚ψ(t)` along a trajectory.
    pub fn from_trajectory(coupling: &Coupling, traj: &Trajectory) -> Result<Self> {
        let times = traj.states.iter().map(|s| s.time).collect();
        let values = traj
            .states
            .iter()
            .map(|s| coupling.forward(s))
            .collect::<Result<Vec<_>>>()?;
        Self::new(times, coupling.op.chord_grid().clone(), values)
    }

    /// Writes `t,ell,Qbar` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        writeln!(out, "t,ell,Qbar").expect("write to Vec");
        let ells = self.chord_grid.nodes();
        for (t, row) in self.times.iter().zip(&self.values) {
            for (l, q) in ells.iter().zip(row) {
                writeln!(out, "{t:e},{l:e},{q:e}").expect("write to Vec");
            }
        }
        fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| perr(0, e.to_string()))?;
        let headers = reader.headers().map_err(|e| perr(1, e.to_string()))?;
        if headers.iter().collect::<Vec<_>>() != ["t", "ell", "Qbar"] {
            return Err(perr(1, "expected header `t,ell,Qbar`".into()));
        }
        let mut times: Vec<f64> = Vec::new();
        let mut ells: Vec<f64> = Vec::new();
        let mut values: Vec<Vec<f64>> = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| perr(line, e.to_string()))?;
            if rec.len() != 3 {
                return Err(perr(line, format!("expected 3 columns, found {}", rec.len())));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| perr(line, format!("`{s}` is not a finite number")))
            };
            let (t, l, q) = (num(&rec[0])?, num(&rec[1])?, num(&rec[2])?);
            if times.last() != Some(&t) {
                if let Some(prev) = values.last() {
                    if prev.len() != ells.len() {
                        return Err(perr(line, "time blocks have different chord counts".into()));
                    }
                }
                times.push(t);
                values.push(Vec::new());
            }
            let row = values.last_mut().expect("pushed above");
            if times.len() == 1 {
                ells.push(l);
            } else if ells
                .get(row.len())
                .is_none_or(|e| (e - l).abs() > 1e-9 * e.abs().max(1e-12))
            {
                return Err(perr(
                    line,
                    format!("chord length {l:e} differs from the first time block"),
                ));
            }
            row.push(q);
        }
        if ells.len() < 2 {
            return Err(perr(2, "need at least two chord lengths".into()));
        }
        let grid = Grid1D::new(ells[0], ells[ells.len() - 1], ells.len()).map_err(|e| perr(2, e.to_string()))?;
        for (i, l) in ells.iter().enumerate() {
            if (l - grid.node(i)).abs() > 1e-6 * grid.spacing() {
                return Err(perr(i + 2, format!("chord length {l:e} breaks the uniform spacing")));
            }
        }
        Self::new(times, grid, values).map_err(|e| perr(0, e.to_string()))
    }
}

/// Linear interpolation from the physical part of each shape grid onto the
/// operator's radial grid, and its weighted adjoint.
#[derive(Debug, Clone)]
pub struct Coupling<'a> {
    pub op: &'a KernelOperator,
    /// Per shape, per operator node: `(left index, left weight)` on the
    /// extended grid, right neighbour implied.
    stencils: Vec<Vec<(usize, f64)>>,
    spacing: Vec<f64>,
    r_min_index: Vec<usize>,
}

impl<'a> Coupling<'a> {
    pub fn new(op: &'a KernelOperator, layout: &ExtendedState) -> Result<Self> {
        if op.n_shapes() != layout.n_shapes() {
            return Err(Error::invalid(format!(
                "operator has {} shapes, state has {}",
                op.n_shapes(),
                layout.n_shapes()
            )));
        }
        let rg = op.radial_grid();
        let mut stencils = Vec::new();
        for (g, &k) in layout.grids.iter().zip(&layout.r_min_index) {
            let lo = g.node(k);
            let tol = 1e-9 * g.spacing();
            if rg.lo() < lo - tol || rg.hi() > g.hi() + tol {
                return Err(Error::GridMismatch(format!(
                    "operator radial grid [{:e}, {:e}] leaves the physical interval [{lo:e}, {:e}]",
                    rg.lo(),
                    rg.hi(),
                    g.hi()
                )));
            }
            let last = g.len() - 1;
            let st = rg
                .nodes()
                .iter()
                .map(|&r| {
                    let pos = ((r - g.lo()) / g.spacing()).clamp(k as f64, last as f64);
                    let j = (pos.floor() as usize).min(last - 1);
                    (j, 1.0 - (pos - j as f64))
                })
                .collect();
            stencils.push(st);
        }
        Ok(Self {
            op,
            stencils,
            spacing: layout.grids.iter().map(|g| g.spacing()).collect(),
            r_min_index: layout.r_min_index.clone(),
        })
    }

    fn prolong(&self, shape: usize, v: &[f64]) -> Vec<f64> {
        self.stencils[shape]
            .iter()
            .map(|&(j, w)| w * v[j] + (1.0 - w) * v[j + 1])
            .collect()
    }

    /// `𝓚Pψ̂`.
    pub fn forward(&self, state: &ExtendedState) -> Result<Vec<f64>> {
        let blocks: Vec<Vec<f64>> = (0..state.n_shapes())
            .map(|i| self.prolong(i, &state.values[i]))
            .collect();
        let slices: Vec<&[f64]> = blocks.iter().map(|b| b.as_slice()).collect();
        self.op.apply_values(&slices)
    }

    /// `ψ̂ ← ψ̂ − step·P*𝓚*(residual)` on `[r_min, r_max]`.
    fn correct(&self, state: &mut ExtendedState, residual: &[f64], step: f64) -> Result<()> {
        let back = self.op.adjoint_values(residual)?;
        let w = self.op.radial_grid().weights();
        for (i, phi) in back.iter().enumerate() {
            let v = &mut state.values[i];
            let scale = step / self.spacing[i];
            for ((&(j, a), p), wm) in self.stencils[i].iter().zip(phi).zip(w) {
                let g = scale * wm * p;
                v[j] -= a * g;
                v[j + 1] -= (1.0 - a) * g;
            }
            debug_assert!(self.stencils[i].iter().all(|&(j, _)| j >= self.r_min_index[i]));
            let m = v.len() - 1;
            v[0] = v[m];
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BfnConfig {
    /// Observer gain; when absent, `mu0 / (‖𝓚‖²·t_max)`.
    pub mu: Option<f64>,
    pub mu0: f64,
    /// Total number of half-sweeps `2n`.
    pub n_iterations: usize,
    /// Time steps per sweep; when absent, the model's unit-Courant default.
    pub n_steps: Option<usize>,
    /// First half-sweep index `2n` used by the rate fit.
    pub fit_start: usize,
}

impl Default for BfnConfig {
    fn default() -> Self {
        Self {
            mu: None,
            mu0: 1.0,
            n_iterations: 100,
            n_steps: None,
            fit_start: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Half-sweep index, starting at 1.
    pub iteration: usize,
    pub direction: Direction,
    /// `(∫‖𝓚ψ̂ − Q̄‖² dt)^{1/2}` over the sweep.
    pub misfit: f64,
    /// `‖ψ̂(t_max) − ψ(t_max)‖` after forward sweeps, when a truth is given.
    pub error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BfnReport {
    pub mu: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub iterations: Vec<IterationRecord>,
    /// `(prefactor, rate)` of `error ≈ prefactor·rateⁿ` with `n` counting
    /// forward/backward pairs.
    pub fit: Option<(f64, f64)>,
}

impl BfnReport {
    /// `(n, error)` after each forward sweep `2n`.
    pub fn error_series(&self) -> Vec<(usize, f64)> {
        self.iterations
            .iter()
            .filter_map(|r| r.error.map(|e| (r.iteration / 2, e)))
            .collect()
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

#[derive(Debug, Clone)]
pub struct BfnOutcome {
    /// Last forward sweep.
    pub forward: Trajectory,
    /// Estimate at `t = 0` after the last half-sweep.
    pub initial_estimate: ExtendedState,
    pub report: BfnReport,
}

pub struct Observer<'a> {
    pub model: &'a ProcessModel,
    pub coupling: Coupling<'a>,
    pub data: &'a CldSeries,
    pub mu: f64,
    pub n_steps: usize,
    config: BfnConfig,
}

impl<'a> Observer<'a> {
    pub fn new(
        model: &'a ProcessModel,
        op: &'a KernelOperator,
        data: &'a CldSeries,
        config: BfnConfig,
    ) -> Result<Self> {
        model.validate()?;
        if !data.chord_grid.same_as(op.chord_grid()) {
            return Err(Error::GridMismatch(
                "CLD series chord grid differs from the operator".into(),
            ));
        }
        let layout = ExtendedState::zeros(model)?;
        let coupling = Coupling::new(op, &layout)?;
        let mu = match config.mu {
            Some(mu) if mu >= 0.0 && mu.is_finite() => mu,
            Some(mu) => return Err(Error::invalid(format!("μ must be ≥ 0, got {mu}"))),
            None => {
                if !(config.mu0 > 0.0) {
                    return Err(Error::invalid(format!("μ₀ must be positive, got {}", config.mu0)));
                }
                let k = op.norm_estimate(60);
                config.mu0 / (k * k * model.t_max)
            }
        };
        let n_steps = config.n_steps.unwrap_or_else(|| model.default_steps());
        if n_steps == 0 {
            return Err(Error::invalid("need at least one time step"));
        }
        Ok(Self {
            model,
            coupling,
            data,
            mu,
            n_steps,
            config,
        })
    }

    pub fn dt(&self) -> f64 {
        self.model.t_max / self.n_steps as f64
    }

    fn sweep(&self, start: ExtendedState, direction: Direction) -> Result<(Trajectory, f64)> {
        let dt = self.dt();
        let chord = self.data.chord_grid.clone();
        let mut misfit2 = 0.0;
        let innovation = |s: &ExtendedState| -> Result<Vec<f64>> {
            let q = self.data.at(s.time)?;
            let mut r = self.coupling.forward(s)?;
            r.iter_mut().zip(&q).for_each(|(a, b)| *a -= b);
            Ok(r)
        };
        let r0 = innovation(&start)?;
        misfit2 += 0.5 * dt * chord.dot(&r0, &r0);
        let traj = simulate(
            start,
            &self.model.growth,
            self.model.t_max,
            self.n_steps,
            direction,
            |k, s| {
                let r = innovation(s)?;
                let w = if k == self.n_steps { 0.5 } else { 1.0 };
                misfit2 += w * dt * chord.dot(&r, &r);
                if self.mu > 0.0 {
                    self.coupling.correct(s, &r, dt * self.mu)?;
                }
                Ok(())
            },
        )?;
        Ok((traj, misfit2.sqrt()))
    }

    /// Forward observer from `t = 0`.
    pub fn forward_sweep(&self, state0: ExtendedState) -> Result<Trajectory> {
        Ok(self.sweep(self.at_time(state0, 0.0), Direction::Forward)?.0)
    }

    /// Backward observer from `t = t_max`.
    pub fn backward_sweep(&self, state_end: ExtendedState) -> Result<Trajectory> {
        Ok(self
            .sweep(self.at_time(state_end, self.model.t_max), Direction::Backward)?
            .0)
    }

    fn at_time(&self, mut s: ExtendedState, t: f64) -> ExtendedState {
        s.time = t;
        s
    }

    /// Alternates sweeps `n_iterations` times starting with a forward one.
    pub fn run(&self, initial: ExtendedState, truth_at_end: Option<&ExtendedState>) -> Result<BfnOutcome> {
        if let Some(t) = truth_at_end {
            if !t.same_layout(&initial) {
                return Err(Error::GridMismatch("truth and estimate use different grids".into()));
            }
        }
        let mut records: Vec<IterationRecord> = Vec::with_capacity(self.config.n_iterations);
        let mut state = self.at_time(initial, 0.0);
        let mut last_forward = None;
        for it in 1..=self.config.n_iterations {
            let direction = if it % 2 == 1 {
                Direction::Forward
            } else {
                Direction::Backward
            };
            let (traj, misfit) = self.sweep(state, direction)?;
            state = traj.last().clone();
            let error = match (direction, truth_at_end) {
                (Direction::Forward, Some(t)) => Some(state.physical_distance(t)),
                _ => None,
            };
            if !misfit.is_finite() {
                return Err(Error::Divergence {
                    from: records.last().map_or(0.0, |r| r.misfit),
                    to: misfit,
                });
            }
            if let Some(from) = records.iter().rev().take(10).map(|r| r.misfit).reduce(f64::min) {
                if misfit > 10.0 * from {
                    return Err(Error::Divergence { from, to: misfit });
                }
            }
            records.push(IterationRecord {
                iteration: it,
                direction,
                misfit,
                error,
            });
            if direction == Direction::Forward {
                last_forward = Some(traj);
            }
        }
        let initial_estimate = if state.time == 0.0 {
            state
        } else {
            // ended on a forward sweep: report its starting point
            last_forward.as_ref().expect("at least one forward sweep").states[0].clone()
        };
        let mut report = BfnReport {
            mu: self.mu,
            dt: self.dt(),
            n_steps: self.n_steps,
            iterations: records,
            fit: None,
        };
        let series = report.error_series();
        let start = self.config.fit_start.div_ceil(2);
        if series.iter().filter(|(n, _)| *n >= start).count() >= 2 {
            report.fit = fit_rate(&series, start).ok();
        }
        Ok(BfnOutcome {
            forward: last_forward.ok_or_else(|| Error::invalid("need at least one iteration"))?,
            initial_estimate,
            report,
        })
    }
}

/// Least-squares fit of `ln e = ln a + n ln ρ` over points with `n ≥ start`;
/// returns `(a, ρ)`.
pub fn fit_rate(errors: &[(usize, f64)], start: usize) -> Result<(f64, f64)> {
    let pts: Vec<(f64, f64)> = errors
        .iter()
        .filter(|(n, _)| *n >= start)
        .map(|&(n, e)| {
            if e > 0.0 && e.is_finite() {
                Ok((n as f64, e.ln()))
            } else {
                Err(Error::invalid(format!(
                    "error at n={n} is {e}; rates need positive errors"
                )))
            }
        })
        .collect::<Result<_>>()?;
    if pts.len() < 2 {
        return Err(Error::invalid("need at least two points past the fit start"));
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / m, sy / m);
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok(((my - slope * mx).exp(), slope.exp()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_geometric_rate() {
        let e: Vec<(usize, f64)> = (0..4).map(|n| (n, 0.5f64.powi(n as i32))).collect();
        let (a, r) = fit_rate(&e, 0).unwrap();
        assert!((a - 1.0).abs() < 1e-12 && (r - 0.5).abs() < 1e-12);
        let flat: Vec<(usize, f64)> = (0..5).map(|n| (n, 3.0)).collect();
        assert!((fit_rate(&flat, 0).unwrap().1 - 1.0).abs() < 1e-12);
        assert!(fit_rate(&[(0, 1.0), (1, 0.0)], 0).is_err());
        assert!(fit_rate(&[(0, 1.0), (1, 0.5)], 1).is_err());
        let shifted: Vec<(usize, f64)> = (0..10)
            .map(|n| (n, if n < 5 { 100.0 } else { 0.9f64.powi(n as i32) }))
            .collect();
        assert!((fit_rate(&shifted, 5).unwrap().1 - 0.9).abs() < 1e-12);
    }

    #[test]
    fn series_interpolates_in_time() {
        let g = Grid1D::new(0.0, 1.0, 3).unwrap();
        let s = CldSeries::new(vec![0.0, 2.0], g, vec![vec![0.0, 1.0, 2.0], vec![2.0, 3.0, 4.0]]).unwrap();
        assert_eq!(s.at(1.0).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(s.at(2.0).unwrap(), vec![2.0, 3.0, 4.0]);
        assert!(s.at(3.0).is_err());
    }

    #[test]
    fn series_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid1D::new(0.0, 1e-3, 4).unwrap();
        let s = CldSeries::new(vec![0.0, 36.0, 72.0], g, vec![vec![0.0, 0.1, 0.2, 0.3]; 3]).unwrap();
        let p = dir.path().join("q.csv");
        s.write_csv(&p).unwrap();
        let back = CldSeries::read_csv(&p).unwrap();
        assert_eq!(back.times, s.times);
        assert_eq!(back.values, s.values);
        assert!(back.chord_grid.same_as(&s.chord_grid));
        fs::write(&p, "t,ell,Qbar\n0,0,0\n0,1,x\n").unwrap();
        let err = CldSeries::read_csv(&p).unwrap_err().to_string();
        assert!(err.contains(":3:"), "{err}");
    }

    use crate::recipes::{ObserverExperiment, ObserverSetup};
    use crate::AngularQuadSpec;

    fn small(etas: &[f64], growth: &[f64], spacing: &[f64]) -> (ObserverExperiment, ObserverSetup) {
        let exp = ObserverExperiment {
            etas: etas.to_vec(),
            growth: growth.to_vec(),
            spacing_fraction: spacing.to_vec(),
            terminal_peaks: vec![vec![1.5e-4]; etas.len()],
            n_radius: 21,
            n_chord: 41,
            quad: AngularQuadSpec::new(12, 12).unwrap(),
            ..Default::default()
        };
        let setup = exp.setup().unwrap();
        (exp, setup)
    }

    fn table1() -> (ObserverExperiment, ObserverSetup) {
        small(&[1.0, 2.0], &[1e-4 / HOUR_S, 2e-4 / HOUR_S], &[0.01, 0.02])
    }

    const HOUR_S: f64 = 3600.0;

    #[test]
    fn zero_gain_sweeps_are_reversible() {
        let (exp, setup) = table1();
        let cfg = BfnConfig {
            mu: Some(0.0),
            ..exp.bfn
        };
        let obs = Observer::new(&setup.model, &setup.operator, &setup.data, cfg).unwrap();
        let mut start = setup.truth.states[0].clone();
        for (i, v) in start.values.iter_mut().enumerate() {
            let m = v.len() - 1;
            for (j, x) in v.iter_mut().enumerate() {
                *x = ((j * (i + 3)) % 11) as f64;
            }
            v[0] = v[m];
        }
        let fwd = obs.forward_sweep(start.clone()).unwrap();
        let back = obs.backward_sweep(fwd.last().clone()).unwrap();
        for (a, b) in back.last().values.iter().zip(&start.values) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn truth_is_a_fixed_point() {
        let (exp, setup) = table1();
        let cfg = BfnConfig { mu0: 50.0, ..exp.bfn };
        let obs = Observer::new(&setup.model, &setup.operator, &setup.data, cfg).unwrap();
        let fwd = obs.forward_sweep(setup.truth.states[0].clone()).unwrap();
        assert!(fwd.last().physical_distance(setup.truth.last()) <= 1e-12 * setup.truth.last().physical_norm());
        let back = obs.backward_sweep(setup.truth.last().clone()).unwrap();
        assert!(back.last().physical_distance(&setup.truth.states[0]) <= 1e-12 * setup.truth.last().physical_norm());
    }

    #[test]
    fn correction_is_the_adjoint_of_the_coupling() {
        let (_, setup) = table1();
        let layout = ExtendedState::zeros(&setup.model).unwrap();
        let c = Coupling::new(&setup.operator, &layout).unwrap();
        let mut psi = layout.clone();
        for (i, v) in psi.values.iter_mut().enumerate() {
            let m = v.len() - 1;
            for (j, x) in v.iter_mut().enumerate() {
                *x = (0.37 * (j + i) as f64).sin();
            }
            v[0] = v[m];
        }
        let resid: Vec<f64> = (0..setup.operator.chord_grid().len())
            .map(|j| (0.2 * j as f64).cos())
            .collect();
        let lhs = setup.operator.chord_grid().dot(&c.forward(&psi).unwrap(), &resid);
        let mut corrected = psi.clone();
        c.correct(&mut corrected, &resid, 1.0).unwrap();
        let mut rhs = 0.0;
        for i in 0..psi.n_shapes() {
            let dx = psi.grids[i].spacing();
            let (a, b) = (&psi.values[i], &corrected.values[i]);
            // periodic inner product over one copy of the seam node
            rhs += (1..a.len()).map(|j| dx * a[j] * (a[j] - b[j])).sum::<f64>();
            assert!(corrected.is_periodic());
            // nothing below r_min moves
            for j in 1..psi.r_min_index[i] {
                assert_eq!(a[j], b[j]);
            }
        }
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs(), "{lhs} {rhs}");
    }

    #[test]
    fn single_shape_converges() {
        let (exp, setup) = small(&[1.0], &[1e-4 / HOUR_S], &[0.01]);
        let cfg = BfnConfig {
            mu0: 16.0,
            n_iterations: 40,
            fit_start: 10,
            ..exp.bfn
        };
        let out = setup.run(cfg).unwrap();
        let errs = out.report.error_series();
        assert!(errs.last().unwrap().1 < 0.5 * errs[0].1);
        let misfits: Vec<f64> = out.report.iterations.iter().map(|r| r.misfit).collect();
        assert!(misfits.last().unwrap() < &(0.1 * misfits[0]));
        let (_, rate) = out.report.fit.unwrap();
        assert!(rate < 1.0);
    }

    #[test]
    fn oversized_gain_is_reported_as_divergence() {
        let (exp, setup) = table1();
        let cfg = BfnConfig {
            mu0: 5000.0,
            n_iterations: 40,
            ..exp.bfn
        };
        let err = setup.run(cfg).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err}");
        assert_eq!(err.exit_code(), 3);
    }
}
