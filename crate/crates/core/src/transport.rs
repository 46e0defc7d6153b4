//! Size-independent growth `∂ψᵢ/∂t + Gᵢ(t)∂ψᵢ/∂r = 0` with nucleation
//! inflow at `r_min`, solved on an extended periodic domain `[r₀, r_max]`.
//!
//! Nodes below `r_min` hold particles that have not nucleated yet: at `t = 0`
//! the value at `r` is the nucleation input at the time its characteristic
//! reaches `r_min`. The inflow boundary then becomes plain advection and the
//! state is a single periodic field per shape.
//!
//! Each shape lives on its own uniform grid with `M + 1` nodes; node 0 and
//! node `M` are the same point of the circle and always carry equal values.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{DensityField, FieldKind};
use crate::grid::Grid1D;
use crate::quadrature::gauss_legendre_on;

/// Courant numbers within this distance of 1 are snapped to 1 so that unit
/// steps stay exact shifts.
const COURANT_SNAP: f64 = 1e-9;

/// Samples `(t, value)` with linear interpolation and constant extension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    t: Vec<f64>,
    v: Vec<f64>,
}

impl TimeSeries {
    pub fn new(t: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if t.is_empty() || t.len() != v.len() {
            return Err(Error::invalid(
                "time series needs matching, non-empty t and value columns",
            ));
        }
        if t.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::invalid("time series contains non-finite entries"));
        }
        if t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("time series abscissae must increase strictly"));
        }
        Ok(Self { t, v })
    }

    /// Reads a `t,value` CSV.
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
        if headers.iter().collect::<Vec<_>>() != ["t", "value"] {
            return Err(perr(1, "expected header `t,value`".into()));
        }
        let (mut t, mut v) = (Vec::new(), Vec::new());
        for (i, rec) in reader.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| perr(line, e.to_string()))?;
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| perr(line, format!("`{s}` is not a number")))
            };
            if rec.len() != 2 {
                return Err(perr(line, format!("expected 2 columns, found {}", rec.len())));
            }
            t.push(num(&rec[0])?);
            v.push(num(&rec[1])?);
        }
        Self::new(t, v).map_err(|e| perr(0, e.to_string()))
    }

    pub fn times(&self) -> &[f64] {
        &self.t
    }

    pub fn values(&self) -> &[f64] {
        &self.v
    }

    pub fn value(&self, t: f64) -> f64 {
        let n = self.t.len();
        if t <= self.t[0] {
            return self.v[0];
        }
        if t >= self.t[n - 1] {
            return self.v[n - 1];
        }
        let k = self.t.partition_point(|&s| s <= t) - 1;
        let f = (t - self.t[k]) / (self.t[k + 1] - self.t[k]);
        self.v[k] * (1.0 - f) + self.v[k + 1] * f
    }

    /// Exact integral of the interpolant over `[a, b]`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b < a {
            return -self.integral(b, a);
        }
        let mut knots = vec![a];
        knots.extend(self.t.iter().copied().filter(|&s| s > a && s < b));
        knots.push(b);
        knots
            .windows(2)
            .map(|w| 0.5 * (w[1] - w[0]) * (self.value(w[0]) + self.value(w[1])))
            .sum()
    }
}

pub type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A scalar function of time.
#[derive(Clone)]
pub enum Profile {
    Constant(f64),
    Series(TimeSeries),
    Function(TimeFn),
}

impl std::fmt::Debug for Profile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Profile::Constant(c) => write!(f, "Constant({c})"),
            Profile::Series(s) => write!(f, "Series({} samples)", s.t.len()),
            Profile::Function(_) => write!(f, "Function"),
        }
    }
}

impl Profile {
    pub fn function(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Profile::Function(Arc::new(f))
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            Profile::Constant(c) => *c,
            Profile::Series(s) => s.value(t),
            Profile::Function(f) => f(t),
        }
    }

    pub fn integral(&self, a: f64, b: f64) -> f64 {
        match self {
            Profile::Constant(c) => c * (b - a),
            Profile::Series(s) => s.integral(a, b),
            Profile::Function(f) => {
                let panels = 64;
                let h = (b - a) / panels as f64;
                (0..panels)
                    .map(|k| {
                        let (x, w) = gauss_legendre_on(8, a + k as f64 * h, a + (k + 1) as f64 * h);
                        x.iter().zip(&w).map(|(x, w)| w * f(*x)).sum::<f64>()
                    })
                    .sum()
            }
        }
    }

    /// Samples at `n + 1` evenly spaced times on `[0, t_max]`, plus any knots.
    fn probe_times(&self, t_max: f64, n: usize) -> Vec<f64> {
        let mut ts: Vec<f64> = (0..=n).map(|k| t_max * k as f64 / n as f64).collect();
        if let Profile::Series(s) = self {
            ts.extend(s.t.iter().copied().filter(|&t| (0.0..=t_max).contains(&t)));
        }
        ts
    }
}

/// Growth rates `Gᵢ(t)` in m·s⁻¹.
#[derive(Debug, Clone)]
pub struct GrowthSchedule {
    pub rates: Vec<Profile>,
    /// Declares `G_i / G_0` constant in time; checked by [`GrowthSchedule::validate`].
    pub constant_ratio: bool,
}

impl GrowthSchedule {
    pub fn constant(rates: &[f64]) -> Self {
        Self {
            rates: rates.iter().map(|&g| Profile::Constant(g)).collect(),
            constant_ratio: true,
        }
    }

    pub fn n_shapes(&self) -> usize {
        self.rates.len()
    }

    pub fn rate(&self, shape: usize, t: f64) -> f64 {
        self.rates[shape].value(t)
    }

    /// `∫_a^b Gᵢ(s) ds`.
    pub fn advance(&self, shape: usize, a: f64, b: f64) -> f64 {
        self.rates[shape].integral(a, b)
    }

    pub fn validate(&self, t_max: f64) -> Result<()> {
        if self.rates.is_empty() {
            return Err(Error::invalid("growth schedule has no shapes"));
        }
        for (i, p) in self.rates.iter().enumerate() {
            for t in p.probe_times(t_max, 256) {
                let g = p.value(t);
                if !(g > 0.0 && g.is_finite()) {
                    return Err(Error::invalid(format!(
                        "growth rate of shape {i} is {g} at t={t}; it must be positive"
                    )));
                }
            }
        }
        if self.constant_ratio {
            let ts = self.rates[0].probe_times(t_max, 256);
            for (i, p) in self.rates.iter().enumerate().skip(1) {
                let g = p.value(0.0) / self.rates[0].value(0.0);
                for &t in &ts {
                    let ratio = p.value(t) / self.rates[0].value(t);
                    if (ratio - g).abs() > 1e-10 * g {
                        return Err(Error::invalid(format!(
                            "growth rate of shape {i} is not a constant multiple of shape 0 (ratio {ratio} at t={t}, {g} at t=0)"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Smallest `τ ≥ 0` with `∫_t^{t+τ} Gᵢ = distance`, searched up to `horizon`.
    fn time_to_cover(&self, shape: usize, t: f64, distance: f64, horizon: f64) -> Option<f64> {
        if distance <= 0.0 {
            return Some(0.0);
        }
        match &self.rates[shape] {
            Profile::Constant(g) => {
                let tau = distance / g;
                (tau <= horizon * (1.0 + 1e-12)).then_some(tau.min(horizon))
            }
            p => {
                if p.integral(t, t + horizon) < distance * (1.0 - 1e-12) {
                    return None;
                }
                let (mut lo, mut hi) = (0.0, horizon);
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if p.integral(t, t + mid) < distance {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Some(0.5 * (lo + hi))
            }
        }
    }
}

/// Nucleation inputs `uᵢ(t) = Rᵢ(t)/Gᵢ(t)` in m⁻¹·m⁻³.
#[derive(Debug, Clone)]
pub struct NucleationInput {
    pub inputs: Vec<Profile>,
}

impl NucleationInput {
    pub fn zero(n_shapes: usize) -> Self {
        Self {
            inputs: vec![Profile::Constant(0.0); n_shapes],
        }
    }

    pub fn value(&self, shape: usize, t: f64) -> f64 {
        self.inputs[shape].value(t)
    }

    pub fn validate(&self, t_max: f64) -> Result<()> {
        for (i, p) in self.inputs.iter().enumerate() {
            for t in p.probe_times(t_max, 256) {
                let u = p.value(t);
                if !(u >= 0.0 && u.is_finite()) {
                    return Err(Error::invalid(format!("nucleation input of shape {i} is {u} at t={t}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

/// Physical interval, horizon and growth/nucleation data of a batch.
#[derive(Debug, Clone)]
pub struct ProcessModel {
    pub r_min: f64,
    pub r_max: f64,
    pub t_max: f64,
    pub growth: GrowthSchedule,
    pub nucleation: NucleationInput,
    /// Radial spacing per shape on the extended grid.
    pub spacing: Vec<f64>,
}

impl ProcessModel {
    pub fn n_shapes(&self) -> usize {
        self.growth.n_shapes()
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.r_min > 0.0 && self.r_max > self.r_min) {
            problems.push(format!(
                "need 0 < r_min < r_max (got {:e}, {:e})",
                self.r_min, self.r_max
            ));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            problems.push(format!("t_max must be positive (got {})", self.t_max));
        }
        let n = self.growth.n_shapes();
        if self.nucleation.inputs.len() != n || self.spacing.len() != n {
            problems.push(format!(
                "{} growth rates, {} nucleation inputs and {} spacings do not match",
                n,
                self.nucleation.inputs.len(),
                self.spacing.len()
            ));
        }
        if let Err(e) = self.growth.validate(self.t_max) {
            problems.push(e.to_string());
        }
        if let Err(e) = self.nucleation.validate(self.t_max) {
            problems.push(e.to_string());
        }
        if problems.is_empty() {
            for (i, h) in self.spacing.iter().enumerate() {
                if let Err(e) = self.grid(i) {
                    problems.push(format!("shape {i} spacing {h:e}: {e}"));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    /// `r₀ = r_min − maxᵢ ∫₀^{t_max} Gᵢ`.
    pub fn r0(&self) -> f64 {
        let reach = (0..self.n_shapes())
            .map(|i| self.growth.advance(i, 0.0, self.t_max))
            .fold(0.0, f64::max);
        self.r_min - reach
    }

    /// Extended grid of shape `i`; `r_min` must fall on a node.
    pub fn grid(&self, shape: usize) -> Result<Grid1D> {
        let h = self.spacing[shape];
        let g = Grid1D::with_spacing(self.r0(), self.r_max, h)?;
        let k = (self.r_min - g.lo()) / h;
        if (k - k.round()).abs() > 1e-6 {
            return Err(Error::invalid(format!("r_min is not on the grid (offset {k} cells)")));
        }
        Ok(g)
    }

    /// Index of `r_min` on the grid of `shape`.
    pub fn r_min_index(&self, grid: &Grid1D) -> usize {
        ((self.r_min - grid.lo()) / grid.spacing()).round() as usize
    }

    /// Uniform time step count that keeps every shape at Courant number ≤ 1,
    /// with the fastest shape at exactly 1 when the rates are constant.
    pub fn default_steps(&self) -> usize {
        (0..self.n_shapes())
            .map(|i| {
                let adv = self.growth.advance(i, 0.0, self.t_max) / self.spacing[i];
                let peak = self.rates_peak(i) * self.t_max / self.spacing[i];
                (adv.max(peak) * (1.0 - 1e-9)).ceil() as usize
            })
            .max()
            .unwrap_or(1)
            .max(1)
    }

    fn rates_peak(&self, shape: usize) -> f64 {
        self.growth.rates[shape]
            .probe_times(self.t_max, 256)
            .into_iter()
            .map(|t| self.growth.rate(shape, t))
            .fold(0.0, f64::max)
    }
}

/// Per-shape values on the extended periodic grids at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedState {
    pub grids: Vec<Grid1D>,
    pub values: Vec<Vec<f64>>,
    pub time: f64,
    /// Index of `r_min` on each grid.
    pub r_min_index: Vec<usize>,
}

impl ExtendedState {
    pub fn zeros(model: &ProcessModel) -> Result<Self> {
        let grids = (0..model.n_shapes())
            .map(|i| model.grid(i))
            .collect::<Result<Vec<_>>>()?;
        let r_min_index = grids.iter().map(|g| model.r_min_index(g)).collect();
        let values = grids.iter().map(|g| vec![0.0; g.len()]).collect();
        Ok(Self {
            grids,
            values,
            time: 0.0,
            r_min_index,
        })
    }

    pub fn n_shapes(&self) -> usize {
        self.grids.len()
    }

    /// Physical part `[r_min, r_max]` of shape `i`.
    pub fn restrict(&self, shape: usize) -> DensityField {
        let g = &self.grids[shape];
        let k = self.r_min_index[shape];
        let grid = Grid1D::new(g.node(k), g.hi(), g.len() - k).expect("sub-grid of a valid grid");
        DensityField {
            grid,
            values: self.values[shape][k..].to_vec(),
            kind: FieldKind::Psd,
        }
    }

    pub fn is_periodic(&self) -> bool {
        self.values.iter().all(|v| v[0] == v[v.len() - 1])
    }

    pub fn same_layout(&self, other: &ExtendedState) -> bool {
        self.grids.len() == other.grids.len() && self.grids.iter().zip(&other.grids).all(|(a, b)| a.same_as(b))
    }

    /// `Σᵢ ∫_{r_min}^{r_max} (aᵢ − bᵢ)²`, square-rooted.
    pub fn physical_distance(&self, other: &ExtendedState) -> f64 {
        (0..self.n_shapes())
            .map(|i| {
                let k = self.r_min_index[i];
                let d: Vec<f64> = self.values[i][k..]
                    .iter()
                    .zip(&other.values[i][k..])
                    .map(|(a, b)| a - b)
                    .collect();
                self.restrict(i).grid.dot(&d, &d)
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn physical_norm(&self) -> f64 {
        (0..self.n_shapes())
            .map(|i| {
                let f = self.restrict(i);
                f.grid.dot(&f.values, &f.values)
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Builds the `t = 0` state on the extended domain from the physical initial
/// PSDs and the nucleation inputs.
pub fn extend_initial_state(model: &ProcessModel, psd0: &[DensityField]) -> Result<ExtendedState> {
    model.validate()?;
    if psd0.len() != model.n_shapes() {
        return Err(Error::invalid(format!(
            "{} initial PSDs for {} shapes",
            psd0.len(),
            model.n_shapes()
        )));
    }
    let mut state = ExtendedState::zeros(model)?;
    for (i, p) in psd0.iter().enumerate() {
        if p.grid.lo() > model.r_min + 1e-9 * model.r_min || p.grid.hi() < model.r_max * (1.0 - 1e-9) {
            return Err(Error::invalid(format!(
                "initial PSD of shape {i} does not cover [r_min, r_max]"
            )));
        }
        let g = &state.grids[i];
        let k = state.r_min_index[i];
        let last = g.len() - 1;
        for j in 1..=last {
            let r = if j == last { g.hi() } else { g.node(j) };
            state.values[i][j] = if j >= k {
                p.grid.interpolate(&p.values, r)
            } else {
                match model.growth.time_to_cover(i, 0.0, model.r_min - r, model.t_max) {
                    Some(tau) => model.nucleation.value(i, tau),
                    None => 0.0,
                }
            };
        }
        state.values[i][0] = state.values[i][last];
    }
    Ok(state)
}

/// Upwind transport over `[t, t ± dt]` in place.
pub fn step(state: &mut ExtendedState, dt: f64, schedule: &GrowthSchedule, direction: Direction) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("time step must be positive, got {dt}")));
    }
    let (a, b) = match direction {
        Direction::Forward => (state.time, state.time + dt),
        Direction::Backward => (state.time - dt, state.time),
    };
    let courants = (0..state.n_shapes())
        .map(|i| {
            let mut c = schedule.advance(i, a, b) / state.grids[i].spacing();
            if (c - 1.0).abs() <= COURANT_SNAP {
                c = 1.0;
            }
            if c > 1.0 || !(c >= 0.0) {
                return Err(Error::Cfl { shape: i, courant: c });
            }
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    for (v, c) in state.values.iter_mut().zip(courants) {
        advect(v, c, direction);
    }
    state.time = match direction {
        Direction::Forward => b,
        Direction::Backward => a,
    };
    Ok(())
}

fn advect(v: &mut [f64], c: f64, direction: Direction) {
    let m = v.len() - 1;
    let old = v.to_vec();
    match direction {
        Direction::Forward => {
            for j in 1..=m {
                v[j] = (1.0 - c) * old[j] + c * old[j - 1];
            }
            v[0] = v[m];
        }
        Direction::Backward => {
            for j in 0..m {
                v[j] = (1.0 - c) * old[j] + c * old[j + 1];
            }
            v[m] = v[0];
        }
    }
}

/// States at every time node of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<ExtendedState>,
}

impl Trajectory {
    pub fn last(&self) -> &ExtendedState {
        self.states.last().expect("trajectory is never empty")
    }

    /// Writes the physical part as `t,r,shape,psi` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        writeln!(out, "t,r,shape,psi").expect("write to Vec");
        for s in &self.states {
            for i in 0..s.n_shapes() {
                let f = s.restrict(i);
                for (r, v) in f.grid.nodes().iter().zip(&f.values) {
                    writeln!(out, "{:e},{r:e},{i},{v:e}", s.time).expect("write to Vec");
                }
            }
        }
        fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

/// Runs `n_steps` uniform steps from `state0` (at `t = 0` forward, at
/// `t = t_max` backward). `hook` runs after every transport step and may
/// modify the state, which is how observers inject their correction.
pub fn simulate<F>(
    state0: ExtendedState,
    schedule: &GrowthSchedule,
    t_max: f64,
    n_steps: usize,
    direction: Direction,
    mut hook: F,
) -> Result<Trajectory>
where
    F: FnMut(usize, &mut ExtendedState) -> Result<()>,
{
    if n_steps == 0 {
        return Err(Error::invalid("need at least one time step"));
    }
    let dt = t_max / n_steps as f64;
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut s = state0;
    states.push(s.clone());
    for k in 1..=n_steps {
        step(&mut s, dt, schedule, direction)?;
        // pin the clock to the grid to avoid drift
        s.time = match direction {
            Direction::Forward => t_max * k as f64 / n_steps as f64,
            Direction::Backward => t_max * (n_steps - k) as f64 / n_steps as f64,
        };
        hook(k, &mut s)?;
        states.push(s.clone());
    }
    Ok(Trajectory { states })
}
