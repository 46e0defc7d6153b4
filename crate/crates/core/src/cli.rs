//! `spheroid-cld` command line: argument parsing, overrides and the five
//! commands. Every command validates the whole configuration first, then
//! writes its outputs under the output directory and returns their paths.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::bfn::{CldSeries, Coupling, Observer};
use crate::config::{Command, ExperimentConfig, Length, NucleationConfig};
use crate::error::{Error, Result};
use crate::field::{differentiate, DensityField, FieldKind};
use crate::kernel::OrientationTable;
use crate::measurement::{estimate_particle_count, ConcentrationData};
use crate::oracle;
use crate::recipes::{bimodal_psd, interior_maxima, noisy_cumulative, relative_l2_error, terminal_gaussians};
use crate::tikhonov::{DataForm, TikhonovSolver};
use crate::transport::{extend_initial_state, simulate, Direction, ExtendedState, Trajectory};

#[derive(Debug, Parser)]
#[command(
    name = "spheroid-cld",
    version,
    about = "Chord length distributions of spheroid populations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// PSD → cumulative CLD, or kernel curves of a point mass with --dirac.
    Forward(Overrides),
    /// Noisy synthetic or measured CLD → regularized PSD for each δ.
    Invert(Overrides),
    /// Growth/nucleation batch and its CLD time series.
    Simulate(Overrides),
    /// Back-and-forth nudging estimate of every shape from a CLD series.
    Bfn(Overrides),
    /// Monte-Carlo chord sampling against the kernel.
    Oracle(Overrides),
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// JSON configuration; defaults are used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated aspect ratios.
    #[arg(long, value_delimiter = ',')]
    pub eta: Vec<f64>,
    #[arg(long)]
    pub dirac: Option<Length>,
    /// Particle radius for `oracle`.
    #[arg(long)]
    pub r: Option<Length>,
    /// Accepts `1e6`.
    #[arg(long)]
    pub samples: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub delta: Vec<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub mu0: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        if let Some(o) = &self.out {
            cfg.output_dir = Some(o.clone());
        }
        if !self.eta.is_empty() {
            cfg.shapes = Some(self.eta.clone());
        }
        if let Some(r) = self.dirac {
            cfg.forward.dirac = Some(r);
            cfg.forward.psd.clear();
        }
        if let Some(r) = self.r {
            cfg.oracle.r = r;
        }
        if let Some(n) = self.samples {
            if !(n >= 1.0 && n.fract() == 0.0 && n <= usize::MAX as f64) {
                return Err(Error::Config(vec![format!(
                    "--samples must be a positive integer, got {n}"
                )]));
            }
            cfg.oracle.samples = n as usize;
        }
        if let Some(s) = self.seed {
            cfg.invert.seed = s;
            cfg.oracle.seed = s;
        }
        if let Some(n) = self.iters {
            cfg.bfn.iterations = n;
        }
        if !self.delta.is_empty() {
            cfg.invert.deltas = self.delta.clone();
        }
        if let Some(x) = self.noise {
            cfg.invert.noise = x;
        }
        if let Some(mu) = self.mu {
            cfg.bfn.mu = Some(mu);
        }
        if let Some(mu0) = self.mu0 {
            cfg.bfn.mu0 = mu0;
            cfg.bfn.mu = None;
        }
        Ok(())
    }

    pub fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        self.apply(&mut cfg)?;
        Ok(cfg)
    }
}

/// Runs a parsed command line and returns the files written.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    let (cmd, args) = match &cli.command {
        Cmd::Forward(a) => (Command::Forward, a),
        Cmd::Invert(a) => (Command::Invert, a),
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Bfn(a) => (Command::Bfn, a),
        Cmd::Oracle(a) => (Command::Oracle, a),
    };
    run_command(cmd, &args.config()?)
}

pub fn run_command(cmd: Command, cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.validate(cmd)?;
    let out = cfg.output_dir();
    fs::create_dir_all(&out).map_err(|e| Error::io(format!("creating {}", out.display()), e))?;
    let mut w = Outputs {
        dir: out,
        written: Vec::new(),
    };
    match cmd {
        Command::Forward => cmd_forward(cfg, &mut w)?,
        Command::Invert => cmd_invert(cfg, &mut w)?,
        Command::Simulate => cmd_simulate(cfg, &mut w)?,
        Command::Bfn => cmd_bfn(cfg, &mut w)?,
        Command::Oracle => cmd_oracle(cfg, &mut w)?,
    }
    Ok(w.written)
}

struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }

    fn field(&mut self, name: &str, f: &DensityField) -> Result<()> {
        let p = self.path(name);
        f.write_csv(&p)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let p = self.path(name);
        write_json(&p, value)
    }

    fn text(&mut self, name: &str, text: String) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, text).map_err(|e| Error::io(format!("writing {}", p.display()), e))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

#[derive(Serialize)]
struct ForwardShape {
    eta: f64,
    psd_integral: f64,
    /// Total particle count, when a concentration is configured.
    particle_count: Option<f64>,
}

#[derive(Serialize)]
struct ForwardSummary {
    shapes: Vec<ForwardShape>,
    chord_max: f64,
    cumulative_at_chord_max: f64,
}

fn cmd_forward(cfg: &ExperimentConfig, w: &mut Outputs) -> Result<()> {
    let shapes = cfg.shape_params(Command::Forward)?;
    let quad = cfg.quadrature();
    if let Some(r) = cfg.forward.dirac {
        let r = r.si();
        let chord = cfg.chord_grid_for(Command::Forward, r)?;
        let mut text = String::from("ell,eta,Q,q\n");
        for s in &shapes {
            let table = OrientationTable::new(*s, quad);
            let big_q = DensityField::from_fn(chord.clone(), FieldKind::CumulativeCld, |l| table.kernel(l, r))?;
            let q = differentiate(&big_q);
            for ((l, a), b) in chord.nodes().iter().zip(&big_q.values).zip(&q.values) {
                text.push_str(&format!("{l:e},{},{a:e},{b:e}\n", s.eta()));
            }
        }
        return w.text("dirac_curves.csv", text);
    }
    let psd = cfg
        .forward
        .psd
        .iter()
        .map(|f| DensityField::read_csv(f, FieldKind::Psd))
        .collect::<Result<Vec<_>>>()?;
    let radial = psd[0].grid.clone();
    if let Some((i, _)) = psd.iter().enumerate().find(|(_, p)| !p.grid.same_as(&radial)) {
        return Err(Error::GridMismatch(format!(
            "{} uses a different radial grid than {}",
            cfg.forward.psd[i].display(),
            cfg.forward.psd[0].display()
        )));
    }
    let chord = cfg.chord_grid_for(Command::Forward, radial.hi())?;
    let op = cfg.operator_on(Command::Forward, radial, chord)?;
    let big_q = op.apply(&psd)?;
    let q = differentiate(&big_q);
    w.field("cumulative_cld.csv", &big_q)?;
    w.field("cld.csv", &q)?;
    let conc = match &cfg.forward.concentration {
        Some(c) => Some(ConcentrationData::new(c.c_s, c.rho_s, c.m_e)?),
        None => None,
    };
    let shapes_out = shapes
        .iter()
        .zip(&psd)
        .map(|(s, p)| {
            let count = match (&conc, p.integral() > 0.0) {
                (Some(c), true) => Some(estimate_particle_count(c, *s, &p.normalized()?)?),
                _ => None,
            };
            Ok(ForwardShape {
                eta: s.eta(),
                psd_integral: p.integral(),
                particle_count: count,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    w.json(
        "forward_summary.json",
        &ForwardSummary {
            shapes: shapes_out,
            chord_max: big_q.grid.hi(),
            cumulative_at_chord_max: *big_q.values.last().expect("chord grid is not empty"),
        },
    )
}

#[derive(Serialize)]
struct InvertEntry {
    delta: f64,
    residual_norm: f64,
    solution_norm: f64,
    iterations: usize,
    converged: bool,
    relative_error: Option<f64>,
    peak: f64,
    maxima: Vec<f64>,
}

#[derive(Serialize)]
struct InvertSummary {
    eta: f64,
    noise: f64,
    seed: u64,
    fit: DataForm,
    length_unit: f64,
    nonneg: bool,
    solutions: Vec<InvertEntry>,
}

fn cmd_invert(cfg: &ExperimentConfig, w: &mut Outputs) -> Result<()> {
    let ic = &cfg.invert;
    let (op, truth, data) = match &ic.data {
        Some(path) => {
            let big_q = DensityField::read_csv(path, FieldKind::CumulativeCld)?;
            let op = cfg.operator_on(Command::Invert, cfg.radial_grid(Command::Invert)?, big_q.grid.clone())?;
            let data = match ic.fit {
                DataForm::Density => differentiate(&big_q),
                DataForm::Cumulative => big_q,
            };
            (op, None, data)
        }
        None => {
            let truth = match &ic.truth {
                Some(p) => DensityField::read_csv(p, FieldKind::Psd)?,
                None => bimodal_psd(&cfg.radial_grid(Command::Invert)?)?,
            };
            let chord = cfg.chord_grid_for(Command::Invert, truth.grid.hi())?;
            let op = cfg.operator_on(Command::Invert, truth.grid.clone(), chord)?;
            let clean = op.apply(std::slice::from_ref(&truth))?;
            let (noisy_q, noisy) = noisy_cumulative(&clean, ic.noise, ic.seed)?;
            w.field("truth.csv", &truth)?;
            w.field("data_clean.csv", &clean)?;
            w.field("data_noisy_cld.csv", &noisy_q)?;
            w.field("data_noisy.csv", &noisy)?;
            (op, Some(truth), ic.fit.pick(&noisy_q, &noisy).clone())
        }
    };
    let options = ic.options();
    let solver = TikhonovSolver::new(&op, &data, options)?;
    let mut entries = Vec::new();
    let mut stalled = None;
    for (k, &delta) in ic.deltas.iter().enumerate() {
        let sol = solver.solve(delta)?;
        w.field(&format!("reconstruction_{k}.csv"), &sol.psd)?;
        if !sol.converged {
            stalled.get_or_insert(sol.iterations);
        }
        entries.push(InvertEntry {
            delta,
            residual_norm: sol.residual_norm,
            solution_norm: sol.solution_norm,
            iterations: sol.iterations,
            converged: sol.converged,
            relative_error: truth.as_ref().map(|t| relative_l2_error(&sol.psd, t)),
            peak: sol.psd.max(),
            maxima: interior_maxima(&sol.psd, 0.1),
        });
    }
    w.json(
        "invert_summary.json",
        &InvertSummary {
            eta: op.shapes()[0].eta(),
            noise: if ic.data.is_some() { 0.0 } else { ic.noise },
            seed: ic.seed,
            fit: ic.fit,
            length_unit: options.length_unit,
            nonneg: options.nonneg,
            solutions: entries,
        },
    )?;
    match stalled {
        Some(iterations) => Err(Error::NoConvergence {
            solver: "Tikhonov solver".into(),
            iterations,
        }),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct SimulateShape {
    eta: f64,
    spacing: f64,
    grid_points: usize,
    r_min_index: usize,
    terminal_mass: f64,
    /// Max deviation from the configured terminal profile, relative to its
    /// peak.
    terminal_deviation: Option<f64>,
}

#[derive(Serialize)]
struct SimulateSummary {
    t_max: f64,
    steps: usize,
    dt: f64,
    r0: f64,
    shapes: Vec<SimulateShape>,
}

fn simulate_truth(cfg: &ExperimentConfig, cmd: Command) -> Result<(crate::transport::ProcessModel, Trajectory)> {
    let model = cfg.process_model(cmd)?;
    let psd0 = cfg.initial_psd(cmd)?;
    let start = extend_initial_state(&model, &psd0)?;
    let steps = cfg.process.steps.unwrap_or_else(|| model.default_steps());
    let traj = simulate(start, &model.growth, model.t_max, steps, Direction::Forward, |_, _| {
        Ok(())
    })?;
    Ok((model, traj))
}

fn cmd_simulate(cfg: &ExperimentConfig, w: &mut Outputs) -> Result<()> {
    let (model, traj) = simulate_truth(cfg, Command::Simulate)?;
    let op = cfg.operator(Command::Simulate)?;
    let coupling = Coupling::new(&op, traj.last())?;
    let series = CldSeries::from_trajectory(&coupling, &traj)?;
    traj.write_csv(&w.path("trajectory.csv"))?;
    series.write_csv(&w.path("cld_series.csv"))?;
    let end = traj.last();
    let mut shapes = Vec::new();
    for i in 0..end.n_shapes() {
        let f = end.restrict(i);
        w.field(&format!("terminal_shape{i}.csv"), &f)?;
        let deviation = match &cfg.process.nucleation {
            NucleationConfig::Terminal { terminal_peaks } if cfg.process.initial_psd.is_empty() => {
                let peaks: Vec<f64> = terminal_peaks[i].iter().map(|l| l.si()).collect();
                let target = terminal_gaussians(model.r_min, model.r_max, &peaks);
                let worst = f
                    .grid
                    .nodes()
                    .iter()
                    .zip(&f.values)
                    .map(|(&r, v)| (v - target(r)).abs())
                    .fold(0.0, f64::max);
                let peak = f.grid.nodes().iter().map(|&r| target(r)).fold(0.0, f64::max);
                Some(if peak > 0.0 { worst / peak } else { worst })
            }
            _ => None,
        };
        shapes.push(SimulateShape {
            eta: op.shapes()[i].eta(),
            spacing: model.spacing[i],
            grid_points: end.grids[i].len(),
            r_min_index: end.r_min_index[i],
            terminal_mass: f.integral(),
            terminal_deviation: deviation,
        });
    }
    let steps = traj.states.len() - 1;
    w.json(
        "simulate_summary.json",
        &SimulateSummary {
            t_max: model.t_max,
            steps,
            dt: model.t_max / steps as f64,
            r0: model.r0(),
            shapes,
        },
    )
}

fn cmd_bfn(cfg: &ExperimentConfig, w: &mut Outputs) -> Result<()> {
    let need_truth = cfg.bfn.truth || cfg.bfn.data.is_none();
    let truth = if need_truth {
        Some(simulate_truth(cfg, Command::Bfn)?)
    } else {
        None
    };
    let model = match &truth {
        Some((m, _)) => m.clone(),
        None => cfg.process_model(Command::Bfn)?,
    };
    let file_data = match &cfg.bfn.data {
        Some(p) => Some(CldSeries::read_csv(p)?),
        None => None,
    };
    let op = match &file_data {
        Some(d) => cfg.operator_on(Command::Bfn, cfg.radial_grid(Command::Bfn)?, d.chord_grid.clone())?,
        None => cfg.operator(Command::Bfn)?,
    };
    let data = match file_data {
        Some(d) => d,
        None => {
            let (_, traj) = truth.as_ref().expect("truth is simulated when data is absent");
            let coupling = Coupling::new(&op, traj.last())?;
            let d = CldSeries::from_trajectory(&coupling, traj)?;
            d.write_csv(&w.path("cld_series.csv"))?;
            d
        }
    };
    let observer = Observer::new(&model, &op, &data, cfg.bfn_config())?;
    let initial = ExtendedState::zeros(&model)?;
    let truth_end = truth.as_ref().map(|(_, t)| t.last());
    let outcome = observer.run(initial, truth_end)?;
    outcome.forward.write_csv(&w.path("estimate.csv"))?;
    for i in 0..model.n_shapes() {
        w.field(
            &format!("estimate_terminal_shape{i}.csv"),
            &outcome.forward.last().restrict(i),
        )?;
    }
    outcome.report.write_json(&w.path("bfn_report.json"))
}

fn cmd_oracle(cfg: &ExperimentConfig, w: &mut Outputs) -> Result<()> {
    let o = &cfg.oracle;
    let reports = cfg
        .shape_params(Command::Oracle)?
        .into_iter()
        .map(|s| oracle::compare(o.r.si(), s, cfg.quadrature(), o.samples, o.seed, o.probes))
        .collect::<Result<Vec<_>>>()?;
    oracle::write_csv(&reports, &w.path("oracle.csv"))?;
    #[derive(Serialize)]
    struct Line {
        eta: f64,
        max_deviation: f64,
        within_band: bool,
    }
    let lines: Vec<Line> = reports
        .iter()
        .map(|r| Line {
            eta: r.eta,
            max_deviation: r.max_deviation(),
            within_band: r.all_within_band(),
        })
        .collect();
    w.json("oracle_summary.json", &lines)
}
