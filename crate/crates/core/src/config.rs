//! JSON experiment configuration.
//!
//! Physical quantities are SI numbers or strings with a unit suffix:
//! lengths `m`, `mm`, `um`, `µm`, `nm`; durations `s`, `min`, `h`; growth
//! rates any length unit over any duration unit, e.g. `"1e-4 m/h"`.
//! Sections that are absent fall back to the defaults of the command being
//! run, so `{}` is a valid configuration for every command except
//! `forward`, which needs PSD files or a point-mass radius.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::bfn::BfnConfig;
use crate::error::{Error, Result};
use crate::field::{DensityField, FieldKind};
use crate::geometry::ShapeParam;
use crate::grid::Grid1D;
use crate::operator::KernelOperator;
use crate::quadrature::AngularQuadSpec;
use crate::recipes::{terminal_gaussians, HOUR, SCALED_LENGTH_UNIT};
use crate::tikhonov::{DataForm, TikhonovOptions};
use crate::transport::{GrowthSchedule, NucleationInput, ProcessModel, Profile, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Length,
    Time,
    Rate,
}

fn length_factor(unit: &str) -> Option<f64> {
    Some(match unit {
        "m" => 1.0,
        "mm" => 1e-3,
        "um" | "µm" | "μm" => 1e-6,
        "nm" => 1e-9,
        _ => return None,
    })
}

fn time_factor(unit: &str) -> Option<f64> {
    Some(match unit {
        "s" => 1.0,
        "min" => 60.0,
        "h" => HOUR,
        _ => return None,
    })
}

/// Parses `"<number><unit>"` (spaces allowed) into SI; a bare number is
/// taken as already SI.
pub fn parse_quantity(text: &str, dim: Dimension) -> std::result::Result<f64, String> {
    let t = text.trim();
    let split = t
        .char_indices()
        .find(|&(i, c)| c.is_alphabetic() && !(matches!(c, 'e' | 'E') && looks_like_exponent(t, i)))
        .map_or(t.len(), |(i, _)| i);
    let (num, unit) = t.split_at(split);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| format!("`{text}` does not start with a number"))?;
    let unit = unit.trim();
    if unit.is_empty() {
        return Ok(value);
    }
    let factor = match dim {
        Dimension::Length => length_factor(unit),
        Dimension::Time => time_factor(unit),
        Dimension::Rate => unit
            .split_once('/')
            .and_then(|(l, t)| Some(length_factor(l.trim())? / time_factor(t.trim())?)),
    };
    factor
        .map(|f| value * f)
        .ok_or_else(|| format!("`{unit}` is not a {} unit", dim.name()))
}

fn looks_like_exponent(t: &str, i: usize) -> bool {
    let next = t[i + 1..].chars().next();
    i > 0 && matches!(next, Some(c) if c.is_ascii_digit() || c == '-' || c == '+')
}

impl Dimension {
    fn name(self) -> &'static str {
        match self {
            Dimension::Length => "length",
            Dimension::Time => "time",
            Dimension::Rate => "growth rate",
        }
    }
}

macro_rules! quantity {
    ($name:ident, $dim:expr, $doc:literal) => {
        #[doc = $doc]
        #[derive(Debug, Clone, Copy, PartialEq)]
        pub struct $name(pub f64);

        impl $name {
            pub fn si(self) -> f64 {
                self.0
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.serialize_f64(self.0)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                struct V;
                impl Visitor<'_> for V {
                    type Value = f64;
                    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                        write!(f, "a number or a string with a {} unit", $dim.name())
                    }
                    fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<f64, E> {
                        Ok(v)
                    }
                    fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<f64, E> {
                        Ok(v as f64)
                    }
                    fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<f64, E> {
                        Ok(v as f64)
                    }
                    fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<f64, E> {
                        parse_quantity(v, $dim).map_err(E::custom)
                    }
                }
                d.deserialize_any(V).map($name)
            }
        }

        impl std::str::FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                parse_quantity(s, $dim).map($name)
            }
        }
    };
}

quantity!(Length, Dimension::Length, "Length in meters.");
quantity!(Duration, Dimension::Time, "Duration in seconds.");
quantity!(Rate, Dimension::Rate, "Growth rate in m/s.");

/// A time profile given inline or as a `t,value` CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RateSource {
    Constant(Rate),
    File { file: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InputSource {
    Constant(f64),
    File { file: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadialGridConfig {
    pub min: Length,
    pub max: Length,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChordGridConfig {
    /// Defaults to the largest chord of the widest shape.
    #[serde(default)]
    pub max: Option<Length>,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcentrationConfig {
    /// kg of solid per kg of solvent.
    pub c_s: f64,
    /// Solid density, kg·m⁻³.
    pub rho_s: f64,
    /// Solvent mass, kg.
    #[serde(default = "one")]
    pub m_e: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForwardConfig {
    /// One `x,value` PSD file per shape.
    pub psd: Vec<PathBuf>,
    /// Point mass at this radius instead of PSD files, one curve per shape.
    pub dirac: Option<Length>,
    pub concentration: Option<ConcentrationConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InvertConfig {
    /// Measured cumulative CLD (`x,value`); synthesized from `truth` when absent.
    pub data: Option<PathBuf>,
    /// PSD used to synthesize data; the two-peak test PSD when absent.
    pub truth: Option<PathBuf>,
    pub noise: f64,
    pub seed: u64,
    pub deltas: Vec<f64>,
    /// `density` fits `q`, `cumulative` fits `Q`.
    pub fit: DataForm,
    pub nonneg: bool,
    /// Unit in which δ is expressed for cumulative fits.
    pub length_unit: Length,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for InvertConfig {
    fn default() -> Self {
        let o = TikhonovOptions::default();
        Self {
            data: None,
            truth: None,
            noise: 0.02,
            seed: 0,
            deltas: vec![1e-5, 1e-3, 1e-1],
            fit: DataForm::Density,
            nonneg: o.nonneg,
            length_unit: Length(SCALED_LENGTH_UNIT),
            tol: o.tol,
            max_iters: o.max_iters,
        }
    }
}

impl InvertConfig {
    pub fn options(&self) -> TikhonovOptions {
        TikhonovOptions {
            nonneg: self.nonneg,
            length_unit: self.length_unit.si(),
            tol: self.tol,
            max_iters: self.max_iters,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NucleationConfig {
    /// Inputs that carry each shape to Gaussians peaked at these radii at
    /// `t_max`.
    Terminal {
        terminal_peaks: Vec<Vec<Length>>,
    },
    Inputs(Vec<InputSource>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProcessConfig {
    pub t_max: Duration,
    pub growth: Vec<RateSource>,
    /// Declared constant ratio between growth rates.
    pub constant_ratio: bool,
    pub spacing: Vec<Length>,
    pub nucleation: NucleationConfig,
    /// Optional `x,value` initial PSDs, zero when empty.
    pub initial_psd: Vec<PathBuf>,
    /// Time steps; the unit-Courant default when absent.
    pub steps: Option<usize>,
}

impl Default for ProcessConfig {
    fn default() -> Self {
        Self {
            t_max: Duration(HOUR),
            growth: vec![
                RateSource::Constant(Rate(1e-4 / HOUR)),
                RateSource::Constant(Rate(2e-4 / HOUR)),
            ],
            constant_ratio: true,
            spacing: vec![Length(1e-6), Length(2e-6)],
            nucleation: NucleationConfig::Terminal {
                terminal_peaks: vec![vec![Length(1.5e-4)], vec![Length(1.5e-4)]],
            },
            initial_psd: Vec::new(),
            steps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BfnSection {
    pub mu: Option<f64>,
    pub mu0: f64,
    pub iterations: usize,
    pub fit_start: usize,
    /// `t,ell,Qbar` data; synthesized from `process` when absent.
    pub data: Option<PathBuf>,
    /// Simulate `process` as the truth for error reporting.
    pub truth: bool,
}

impl Default for BfnSection {
    fn default() -> Self {
        let d = BfnConfig::default();
        Self {
            mu: d.mu,
            mu0: d.mu0,
            iterations: d.n_iterations,
            fit_start: d.fit_start,
            data: None,
            truth: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub r: Length,
    pub samples: usize,
    pub seed: u64,
    pub probes: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            r: Length(1e-3),
            samples: 1_000_000,
            seed: 0,
            probes: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Forward,
    Invert,
    Simulate,
    Bfn,
    Oracle,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: Option<PathBuf>,
    pub shapes: Option<Vec<f64>>,
    pub radius: Option<RadialGridConfig>,
    pub chord: Option<ChordGridConfig>,
    pub quadrature: Option<AngularQuadSpec>,
    pub kernel_cache: Option<PathBuf>,
    /// Zero each shape's kernel past its own largest chord; defaults to
    /// true for `simulate` and `bfn`.
    pub truncate_support: Option<bool>,
    pub forward: ForwardConfig,
    pub invert: InvertConfig,
    pub process: ProcessConfig,
    pub bfn: BfnSection,
    pub oracle: OracleConfig,
}

impl ExperimentConfig {
    /// Reads a JSON file; relative file names inside are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            msg: e.to_string(),
        })?;
        if let Some(dir) = path.parent() {
            cfg.rebase(dir);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        self.forward.psd.iter_mut().for_each(fix);
        if let Some(p) = self.invert.data.as_mut() {
            fix(p);
        }
        if let Some(p) = self.invert.truth.as_mut() {
            fix(p);
        }
        self.process.initial_psd.iter_mut().for_each(fix);
        for g in &mut self.process.growth {
            if let RateSource::File { file } = g {
                fix(file);
            }
        }
        if let NucleationConfig::Inputs(list) = &mut self.process.nucleation {
            for n in list {
                if let InputSource::File { file } = n {
                    fix(file);
                }
            }
        }
        if let Some(p) = self.bfn.data.as_mut() {
            fix(p);
        }
        if let Some(p) = self.kernel_cache.as_mut() {
            fix(p);
        }
        if let Some(p) = self.output_dir.as_mut() {
            fix(p);
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn shapes(&self, cmd: Command) -> Vec<f64> {
        self.shapes.clone().unwrap_or_else(|| match cmd {
            Command::Forward => vec![1.0],
            Command::Invert => vec![2.0],
            Command::Simulate | Command::Bfn => vec![1.0, 2.0],
            Command::Oracle => vec![0.5, 1.0, 2.0],
        })
    }

    pub fn radius(&self, cmd: Command) -> RadialGridConfig {
        self.radius.clone().unwrap_or(match cmd {
            Command::Simulate | Command::Bfn => RadialGridConfig {
                min: Length(1e-4),
                max: Length(2e-4),
                points: 101,
            },
            _ => RadialGridConfig {
                min: Length(1e-4),
                max: Length(3e-4),
                points: 200,
            },
        })
    }

    pub fn chord(&self, cmd: Command) -> ChordGridConfig {
        self.chord.clone().unwrap_or(ChordGridConfig {
            max: None,
            points: match cmd {
                Command::Simulate | Command::Bfn => 201,
                _ => 200,
            },
        })
    }

    pub fn quadrature(&self) -> AngularQuadSpec {
        self.quadrature.unwrap_or_default()
    }

    pub fn truncate_support(&self, cmd: Command) -> bool {
        self.truncate_support
            .unwrap_or(matches!(cmd, Command::Simulate | Command::Bfn))
    }

    pub fn bfn_config(&self) -> BfnConfig {
        BfnConfig {
            mu: self.bfn.mu,
            mu0: self.bfn.mu0,
            n_iterations: self.bfn.iterations,
            n_steps: self.process.steps,
            fit_start: self.bfn.fit_start,
        }
    }

    /// Every problem found, without touching the file system beyond
    /// existence checks.
    pub fn validate(&self, cmd: Command) -> Result<()> {
        let mut p = Vec::new();
        let shapes = self.shapes(cmd);
        if shapes.is_empty() {
            p.push("`shapes` is empty".to_string());
        }
        for (i, &e) in shapes.iter().enumerate() {
            if let Err(err) = ShapeParam::new(e) {
                p.push(format!("shapes[{i}]: {err}"));
            }
        }
        let rad = self.radius(cmd);
        if !(rad.min.si() > 0.0 && rad.max.si() > rad.min.si()) {
            p.push(format!(
                "radius: need 0 < min < max (got {:e}, {:e})",
                rad.min.si(),
                rad.max.si()
            ));
        }
        if rad.points < 2 {
            p.push("radius.points must be at least 2".into());
        }
        let chord = self.chord(cmd);
        if chord.points < 2 {
            p.push("chord.points must be at least 2".into());
        }
        if let (Some(max), true) = (chord.max, shapes.iter().all(|&e| e > 0.0 && e.is_finite())) {
            let needed = self.chord_max_needed(&shapes, rad.max.si());
            if max.si() < needed * (1.0 - 1e-12) {
                p.push(format!(
                    "chord.max {:e} m is shorter than the largest chord {needed:e} m",
                    max.si()
                ));
            }
        }
        if let Some(q) = self.quadrature {
            if let Err(e) = AngularQuadSpec::new(q.n_phi, q.n_theta) {
                p.push(format!("quadrature: {e}"));
            }
        }
        let missing = |p: &mut Vec<String>, what: &str, f: &Path| {
            if !f.exists() {
                p.push(format!("{what}: {} does not exist", f.display()));
            }
        };
        match cmd {
            Command::Forward => {
                let f = &self.forward;
                match (&f.dirac, f.psd.is_empty()) {
                    (Some(r), true) => {
                        if !(r.si() > 0.0) {
                            p.push("forward.dirac must be a positive radius".into());
                        }
                    }
                    (Some(_), false) => p.push("forward: give either `dirac` or `psd`, not both".into()),
                    (None, true) => p.push("forward: needs `psd` files or a `dirac` radius".into()),
                    (None, false) => {
                        if f.psd.len() != shapes.len() {
                            p.push(format!(
                                "forward.psd has {} files for {} shapes",
                                f.psd.len(),
                                shapes.len()
                            ));
                        }
                        f.psd.iter().for_each(|x| missing(&mut p, "forward.psd", x));
                    }
                }
                if let Some(c) = &f.concentration {
                    if !(c.c_s > 0.0 && c.rho_s > 0.0 && c.m_e > 0.0 && c.m_e <= 1.0) {
                        p.push("forward.concentration: need c_s, rho_s > 0 and 0 < m_e ≤ 1".into());
                    }
                }
            }
            Command::Invert => {
                let c = &self.invert;
                if shapes.len() != 1 {
                    p.push(format!("invert needs exactly one shape, got {}", shapes.len()));
                }
                if !(c.noise >= 0.0 && c.noise.is_finite()) {
                    p.push("invert.noise must be ≥ 0".into());
                }
                if c.deltas.is_empty() {
                    p.push("invert.deltas is empty".into());
                }
                if c.deltas.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
                    p.push("invert.deltas must be positive".into());
                }
                if !(c.length_unit.si() > 0.0) {
                    p.push("invert.length_unit must be positive".into());
                }
                if c.data.is_some() && c.truth.is_some() {
                    p.push("invert: give either `data` or `truth`, not both".into());
                }
                if let Some(f) = &c.data {
                    missing(&mut p, "invert.data", f);
                }
                if let Some(f) = &c.truth {
                    missing(&mut p, "invert.truth", f);
                }
            }
            Command::Simulate | Command::Bfn => {
                self.validate_process(&shapes, &mut p, &missing);
                if cmd == Command::Bfn {
                    let b = &self.bfn;
                    if let Some(mu) = b.mu {
                        if !(mu >= 0.0 && mu.is_finite()) {
                            p.push("bfn.mu must be ≥ 0".into());
                        }
                    } else if !(b.mu0 > 0.0 && b.mu0.is_finite()) {
                        p.push("bfn.mu0 must be positive".into());
                    }
                    if b.iterations == 0 {
                        p.push("bfn.iterations must be positive".into());
                    }
                    if let Some(f) = &b.data {
                        missing(&mut p, "bfn.data", f);
                    }
                }
            }
            Command::Oracle => {
                let o = &self.oracle;
                if !(o.r.si() > 0.0) {
                    p.push("oracle.r must be positive".into());
                }
                if o.samples == 0 {
                    p.push("oracle.samples must be positive".into());
                }
                if o.probes == 0 {
                    p.push("oracle.probes must be positive".into());
                }
            }
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }

    fn validate_process(&self, shapes: &[f64], p: &mut Vec<String>, missing: &dyn Fn(&mut Vec<String>, &str, &Path)) {
        let pc = &self.process;
        let n = shapes.len();
        if !(pc.t_max.si() > 0.0 && pc.t_max.si().is_finite()) {
            p.push("process.t_max must be positive".into());
        }
        if pc.growth.len() != n {
            p.push(format!("process.growth has {} entries for {n} shapes", pc.growth.len()));
        }
        for (i, g) in pc.growth.iter().enumerate() {
            match g {
                RateSource::Constant(r) if !(r.si() > 0.0) => p.push(format!("process.growth[{i}] must be positive")),
                RateSource::File { file } => missing(p, "process.growth", file),
                _ => {}
            }
        }
        if pc.spacing.len() != n {
            p.push(format!(
                "process.spacing has {} entries for {n} shapes",
                pc.spacing.len()
            ));
        }
        if pc.spacing.iter().any(|h| !(h.si() > 0.0)) {
            p.push("process.spacing must be positive".into());
        }
        match &pc.nucleation {
            NucleationConfig::Terminal { terminal_peaks } => {
                if terminal_peaks.len() != n {
                    p.push(format!(
                        "process.nucleation.terminal_peaks has {} entries for {n} shapes",
                        terminal_peaks.len()
                    ));
                }
            }
            NucleationConfig::Inputs(list) => {
                if list.len() != n {
                    p.push(format!("process.nucleation has {} entries for {n} shapes", list.len()));
                }
                for x in list {
                    if let InputSource::File { file } = x {
                        missing(p, "process.nucleation", file);
                    }
                }
            }
        }
        if !pc.initial_psd.is_empty() && pc.initial_psd.len() != n {
            p.push(format!(
                "process.initial_psd has {} files for {n} shapes",
                pc.initial_psd.len()
            ));
        }
        pc.initial_psd.iter().for_each(|f| missing(p, "process.initial_psd", f));
        if pc.steps == Some(0) {
            p.push("process.steps must be positive".into());
        }
    }

    fn chord_max_needed(&self, shapes: &[f64], r_max: f64) -> f64 {
        shapes
            .iter()
            .filter_map(|&e| ShapeParam::new(e).ok())
            .map(|s| s.max_chord_factor() * r_max)
            .fold(0.0, f64::max)
    }

    pub fn radial_grid(&self, cmd: Command) -> Result<Grid1D> {
        let r = self.radius(cmd);
        Grid1D::new(r.min.si(), r.max.si(), r.points)
    }

    pub fn chord_grid(&self, cmd: Command) -> Result<Grid1D> {
        self.chord_grid_for(cmd, self.radius(cmd).max.si())
    }

    pub fn shape_params(&self, cmd: Command) -> Result<Vec<ShapeParam>> {
        self.shapes(cmd).into_iter().map(ShapeParam::new).collect()
    }

    /// Builds (or loads from `kernel_cache`) the operator for `cmd`.
    pub fn operator(&self, cmd: Command) -> Result<KernelOperator> {
        self.operator_on(cmd, self.radial_grid(cmd)?, self.chord_grid(cmd)?)
    }

    /// As [`ExperimentConfig::operator`] on explicit grids.
    pub fn operator_on(&self, cmd: Command, radial: Grid1D, chord: Grid1D) -> Result<KernelOperator> {
        let shapes = self.shape_params(cmd)?;
        let op = match &self.kernel_cache {
            Some(dir) => KernelOperator::build_cached(dir, radial, chord, &shapes, self.quadrature())?,
            None => KernelOperator::build(radial, chord, &shapes, self.quadrature())?,
        };
        Ok(if self.truncate_support(cmd) {
            op.truncated_to_support()
        } else {
            op
        })
    }

    /// Chord grid for particles up to `r_max`: `chord.max` if set, else the
    /// largest chord at `r_max`.
    pub fn chord_grid_for(&self, cmd: Command, r_max: f64) -> Result<Grid1D> {
        let c = self.chord(cmd);
        let max = match c.max {
            Some(m) => m.si(),
            None => self.chord_max_needed(&self.shapes(cmd), r_max),
        };
        Grid1D::new(0.0, max, c.points)
    }

    /// Process model of the `process` section on the `cmd` radial interval.
    pub fn process_model(&self, cmd: Command) -> Result<ProcessModel> {
        let pc = &self.process;
        let rad = self.radius(cmd);
        let (r_min, r_max, t_max) = (rad.min.si(), rad.max.si(), pc.t_max.si());
        let rates = pc
            .growth
            .iter()
            .map(|g| match g {
                RateSource::Constant(r) => Ok(Profile::Constant(r.si())),
                RateSource::File { file } => TimeSeries::read_csv(file).map(Profile::Series),
            })
            .collect::<Result<Vec<_>>>()?;
        let growth = GrowthSchedule {
            rates,
            constant_ratio: pc.constant_ratio,
        };
        let inputs = match &pc.nucleation {
            NucleationConfig::Inputs(list) => list
                .iter()
                .map(|x| match x {
                    InputSource::Constant(c) => Ok(Profile::Constant(*c)),
                    InputSource::File { file } => TimeSeries::read_csv(file).map(Profile::Series),
                })
                .collect::<Result<Vec<_>>>()?,
            NucleationConfig::Terminal { terminal_peaks } => terminal_peaks
                .iter()
                .enumerate()
                .map(|(i, peaks)| {
                    let peaks: Vec<f64> = peaks.iter().map(|l| l.si()).collect();
                    let target = terminal_gaussians(r_min, r_max, &peaks);
                    let g = growth.clone();
                    Profile::function(move |t| target(r_min + g.advance(i, t, t_max)))
                })
                .collect(),
        };
        let model = ProcessModel {
            r_min,
            r_max,
            t_max,
            growth,
            nucleation: NucleationInput { inputs },
            spacing: pc.spacing.iter().map(|h| h.si()).collect(),
        };
        model.validate()?;
        Ok(model)
    }

    /// Initial PSDs of `process`, zero when none are given.
    pub fn initial_psd(&self, cmd: Command) -> Result<Vec<DensityField>> {
        if self.process.initial_psd.is_empty() {
            let g = self.radial_grid(cmd)?;
            return Ok((0..self.shapes(cmd).len())
                .map(|_| DensityField::zeros(g.clone(), FieldKind::Psd))
                .collect());
        }
        self.process
            .initial_psd
            .iter()
            .map(|f| DensityField::read_csv(f, FieldKind::Psd))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantities_with_units() {
        let l = |s| parse_quantity(s, Dimension::Length).unwrap();
        assert_eq!(l("1e-4"), 1e-4);
        assert_eq!(l("1e-4 m"), 1e-4);
        assert!((l("150um") - 1.5e-4).abs() < 1e-18);
        assert!((l("0.15 mm") - 1.5e-4).abs() < 1e-18);
        assert!((l("2E-3m") - 2e-3).abs() < 1e-18);
        assert_eq!(parse_quantity("1h", Dimension::Time).unwrap(), 3600.0);
        assert_eq!(parse_quantity("36 s", Dimension::Time).unwrap(), 36.0);
        assert_eq!(parse_quantity("2 min", Dimension::Time).unwrap(), 120.0);
        let g = parse_quantity("1e-4 m/h", Dimension::Rate).unwrap();
        assert!((g - 1e-4 / 3600.0).abs() < 1e-20);
        assert!(parse_quantity("1 h", Dimension::Length).is_err());
        assert!(parse_quantity("m", Dimension::Length).is_err());
        assert!(parse_quantity("1 furlong", Dimension::Length).is_err());
    }

    #[test]
    fn empty_config_is_valid_everywhere_but_forward() {
        let cfg: ExperimentConfig = serde_json::from_str("{}").unwrap();
        for cmd in [Command::Invert, Command::Simulate, Command::Bfn, Command::Oracle] {
            cfg.validate(cmd).unwrap();
        }
        assert!(cfg.validate(Command::Forward).is_err());
    }

    #[test]
    fn errors_are_aggregated() {
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"shapes": [1, -2], "radius": {"min": "3e-4 m", "max": "1e-4 m", "points": 1},
                "process": {"t_max": "1h", "growth": ["1e-4 m/h"], "spacing": ["1um", "2um"]}}"#,
        )
        .unwrap();
        match cfg.validate(Command::Simulate).unwrap_err() {
            Error::Config(list) => assert!(list.len() >= 4, "{list:?}"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"shape": [1]}"#).is_err());
        assert!(
            serde_json::from_str::<ExperimentConfig>(r#"{"radius": {"min": 1, "max": 2, "points": 3, "x": 0}}"#)
                .is_err()
        );
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"oracle": {"r": "1 h"}}"#).is_err());
    }

    #[test]
    fn default_process_is_the_two_shape_batch() {
        let cfg = ExperimentConfig::default();
        let m = cfg.process_model(Command::Simulate).unwrap();
        assert_eq!(m.default_steps(), 100);
        assert_eq!(m.grid(0).unwrap().len(), 301);
        assert_eq!(m.grid(1).unwrap().len(), 151);
    }
}
