//! Configuration parsing, experiment orchestration, and CSV emission.
//!
//! Config files are flat `key = value` text; `[section]` headers and `#`
//! comments are allowed and ignored. Every key can be overridden by an
//! environment variable `FERMION_UNRAVEL_<KEY>` (upper-cased key) and by
//! `--set key=value` flags, in that order of precedence.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use thiserror::Error;

use crate::grid::Grid;
use crate::operators::{eigenstates, EigenBasis, LindbladChannel, Potential};
use crate::reference::{
    analytic_harmonic_xp, dense_observables, exact_lindblad_dense, pauli_evolve,
    pauli_observables, DenseDM, DenseLindblad, PauliSystem,
};
use crate::state::{init_theta_state, SlaterState};
use crate::unravel::{run_ensemble, EngineParams, EnsembleStats, LConvention, PropagatorKind};

/// Environment-variable prefix for config overrides.
pub const ENV_PREFIX: &str = "FERMION_UNRAVEL_";

#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid configuration: exit code 2.
    #[error("config error: {0}")]
    Config(String),
    /// Runtime failure (simulation, oracle, or I/O): exit code 3.
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

fn io_err(context: &str, err: std::io::Error) -> CliError {
    CliError::Runtime(format!("{context}: {err}"))
}

/// All simulation parameters with documented defaults (the damped harmonic
/// trap benchmark).
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    /// `harmonic` or `double_well`.
    pub potential: String,
    pub mass: f64,
    pub omega: f64,
    /// Gaussian barrier height (double well only).
    pub barrier_height: f64,
    /// Gaussian barrier width (double well only).
    pub barrier_width: f64,
    /// Bath oscillator frequency of the lowering channel.
    pub omega_l: f64,
    /// Bath coupling; 0 disables the channel (closed system).
    pub gamma: f64,
    pub n_fermions: usize,
    /// HOMO-LUMO mixing angle of the initial state, radians.
    pub theta: f64,
    pub box_length: f64,
    pub n_points: usize,
    pub dt: f64,
    pub t_final: f64,
    pub n_hs: usize,
    pub n_traj: usize,
    pub n_runs: usize,
    pub ci_level: f64,
    /// `newton`, `split`, or `dense`.
    pub propagator: String,
    pub newton_tol: f64,
    /// `complex` (Gisin) or `real` (Wiseman) feedback expectation.
    pub l_convention: String,
    pub master_seed: u64,
    /// Truncated eigenbasis size for the pauli/dense oracles.
    pub basis_size: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            potential: "harmonic".into(),
            mass: 1.0,
            omega: 1.0,
            barrier_height: 5.0,
            barrier_width: 1.0,
            omega_l: 1.0,
            gamma: 0.2,
            n_fermions: 8,
            theta: std::f64::consts::FRAC_PI_4,
            box_length: 16.0,
            n_points: 128,
            dt: 0.25,
            t_final: 25.0,
            n_hs: 10,
            n_traj: 160,
            n_runs: 10,
            ci_level: 0.75,
            propagator: "split".into(),
            newton_tol: 1e-9,
            l_convention: "complex".into(),
            master_seed: 1,
            basis_size: 16,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("key '{key}': cannot parse '{value}'")))
}

impl SimConfig {
    /// Applies one `key = value` assignment.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value.trim();
        match key {
            "potential" => self.potential = v.to_string(),
            "mass" => self.mass = parse_num(key, v)?,
            "omega" => self.omega = parse_num(key, v)?,
            "barrier_height" => self.barrier_height = parse_num(key, v)?,
            "barrier_width" => self.barrier_width = parse_num(key, v)?,
            "omega_l" => self.omega_l = parse_num(key, v)?,
            "gamma" => self.gamma = parse_num(key, v)?,
            "n_fermions" => self.n_fermions = parse_num(key, v)?,
            "theta" => self.theta = parse_num(key, v)?,
            "box_length" => self.box_length = parse_num(key, v)?,
            "n_points" => self.n_points = parse_num(key, v)?,
            "dt" => self.dt = parse_num(key, v)?,
            "t_final" => self.t_final = parse_num(key, v)?,
            "n_hs" => self.n_hs = parse_num(key, v)?,
            "n_traj" => self.n_traj = parse_num(key, v)?,
            "n_runs" => self.n_runs = parse_num(key, v)?,
            "ci_level" => self.ci_level = parse_num(key, v)?,
            "propagator" => self.propagator = v.to_string(),
            "newton_tol" => self.newton_tol = parse_num(key, v)?,
            "l_convention" => self.l_convention = v.to_string(),
            "master_seed" => self.master_seed = parse_num(key, v)?,
            "basis_size" => self.basis_size = parse_num(key, v)?,
            _ => {
                return Err(CliError::Config(format!(
                    "unknown config key '{key}'"
                )))
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |key: &str, range: &str| -> CliError {
            CliError::Config(format!("key '{key}' out of range: accepted {range}"))
        };
        match self.potential.as_str() {
            "harmonic" | "double_well" => {}
            _ => return Err(bad("potential", "harmonic | double_well")),
        }
        match self.propagator.as_str() {
            "newton" | "split" | "dense" => {}
            _ => return Err(bad("propagator", "newton | split | dense")),
        }
        match self.l_convention.as_str() {
            "complex" | "real" => {}
            _ => return Err(bad("l_convention", "complex | real")),
        }
        if !(self.mass > 0.0) {
            return Err(bad("mass", "> 0"));
        }
        if !(self.omega > 0.0) {
            return Err(bad("omega", "> 0"));
        }
        if !(self.omega_l > 0.0) {
            return Err(bad("omega_l", "> 0"));
        }
        if !(self.gamma >= 0.0) {
            return Err(bad("gamma", ">= 0"));
        }
        if self.n_fermions < 1 {
            return Err(bad("n_fermions", ">= 1"));
        }
        if !(self.box_length > 0.0) {
            return Err(bad("box_length", "> 0"));
        }
        if self.n_points < 8 || !self.n_points.is_power_of_two() {
            return Err(bad("n_points", "power of two >= 8"));
        }
        if !(self.dt > 0.0) {
            return Err(bad("dt", "> 0"));
        }
        if !(self.t_final >= self.dt) {
            return Err(bad("t_final", ">= dt"));
        }
        if self.n_hs < 1 {
            return Err(bad("n_hs", ">= 1"));
        }
        if self.n_traj < 1 {
            return Err(bad("n_traj", ">= 1"));
        }
        if self.n_runs < 1 {
            return Err(bad("n_runs", ">= 1"));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(bad("ci_level", "in (0, 1)"));
        }
        if !(self.newton_tol > 0.0) {
            return Err(bad("newton_tol", "> 0"));
        }
        if self.basis_size < self.n_fermions + 1 {
            return Err(bad("basis_size", ">= n_fermions + 1"));
        }
        Ok(())
    }

    /// Parses a config file on top of the defaults.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = SimConfig::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Applies `key = value` lines (comments, blanks, and `[sections]`
    /// allowed).
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty()
                || line.starts_with('#')
                || line.starts_with(';')
                || (line.starts_with('[') && line.ends_with(']'))
            {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            self.apply_kv(key.trim(), value)?;
        }
        Ok(())
    }

    /// Applies `FERMION_UNRAVEL_<KEY>` environment overrides.
    pub fn apply_env(
        &mut self,
        vars: impl Iterator<Item = (String, String)>,
    ) -> Result<(), CliError> {
        for (name, value) in vars {
            if let Some(rest) = name.strip_prefix(ENV_PREFIX) {
                self.apply_kv(&rest.to_lowercase(), &value)?;
            }
        }
        Ok(())
    }

    /// Canonical `key = value` echo; feeding it back through
    /// [`SimConfig::apply_text`] reproduces this config exactly.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[potential]");
        let _ = writeln!(s, "potential = {}", self.potential);
        let _ = writeln!(s, "mass = {:e}", self.mass);
        let _ = writeln!(s, "omega = {:e}", self.omega);
        let _ = writeln!(s, "barrier_height = {:e}", self.barrier_height);
        let _ = writeln!(s, "barrier_width = {:e}", self.barrier_width);
        let _ = writeln!(s, "[channel]");
        let _ = writeln!(s, "omega_l = {:e}", self.omega_l);
        let _ = writeln!(s, "gamma = {:e}", self.gamma);
        let _ = writeln!(s, "[run]");
        let _ = writeln!(s, "n_fermions = {}", self.n_fermions);
        let _ = writeln!(s, "theta = {:e}", self.theta);
        let _ = writeln!(s, "box_length = {:e}", self.box_length);
        let _ = writeln!(s, "n_points = {}", self.n_points);
        let _ = writeln!(s, "dt = {:e}", self.dt);
        let _ = writeln!(s, "t_final = {:e}", self.t_final);
        let _ = writeln!(s, "n_hs = {}", self.n_hs);
        let _ = writeln!(s, "n_traj = {}", self.n_traj);
        let _ = writeln!(s, "n_runs = {}", self.n_runs);
        let _ = writeln!(s, "ci_level = {:e}", self.ci_level);
        let _ = writeln!(s, "propagator = {}", self.propagator);
        let _ = writeln!(s, "newton_tol = {:e}", self.newton_tol);
        let _ = writeln!(s, "l_convention = {}", self.l_convention);
        let _ = writeln!(s, "master_seed = {}", self.master_seed);
        let _ = writeln!(s, "basis_size = {}", self.basis_size);
        s
    }

    pub fn propagator_kind(&self) -> PropagatorKind {
        match self.propagator.as_str() {
            "newton" => PropagatorKind::Newton,
            "dense" => PropagatorKind::Dense,
            _ => PropagatorKind::Split,
        }
    }

    pub fn l_convention_kind(&self) -> LConvention {
        match self.l_convention.as_str() {
            "real" => LConvention::Real,
            _ => LConvention::Complex,
        }
    }
}

/// Resolves a config from (optional) file, environment, and `--set` flags.
pub fn parse_config(
    file: Option<&Path>,
    sets: &[String],
    seed: Option<u64>,
) -> Result<SimConfig, CliError> {
    let mut cfg = match file {
        Some(path) => SimConfig::from_file(path)?,
        None => SimConfig::default(),
    };
    cfg.apply_env(std::env::vars())?;
    for s in sets {
        let (key, value) = s.split_once('=').ok_or_else(|| {
            CliError::Config(format!("--set '{s}': expected key=value"))
        })?;
        cfg.apply_kv(key.trim(), value)?;
    }
    if let Some(seed) = seed {
        cfg.master_seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// The physical objects a config describes.
pub struct Setup {
    pub grid: Grid,
    pub potential: Potential,
    pub channel: Option<LindbladChannel>,
    pub basis: EigenBasis,
    pub initial: SlaterState,
}

/// Builds grid, potential, channel (absent when `gamma = 0`), eigenbasis,
/// and the initial determinant.
pub fn build_setup(cfg: &SimConfig) -> Result<Setup, CliError> {
    let grid = Grid::new(cfg.box_length, cfg.n_points)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let potential = match cfg.potential.as_str() {
        "double_well" => Potential::double_well(
            &grid,
            cfg.mass,
            cfg.omega,
            cfg.barrier_height,
            cfg.barrier_width,
        ),
        _ => Potential::harmonic(&grid, cfg.mass, cfg.omega),
    };
    let channel = if cfg.gamma > 0.0 {
        Some(
            LindbladChannel::new(cfg.mass, cfg.omega_l, cfg.gamma, cfg.n_fermions)
                .map_err(|e| CliError::Config(e.to_string()))?,
        )
    } else {
        None
    };
    let n_basis = cfg.basis_size.max(cfg.n_fermions + 1);
    let basis = eigenstates(&potential, &grid, n_basis)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let initial = init_theta_state(&basis, cfg.n_fermions, cfg.theta)
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(Setup {
        grid,
        potential,
        channel,
        basis,
        initial,
    })
}

impl Setup {
    pub fn engine_params<'a>(&'a self, cfg: &SimConfig) -> EngineParams<'a> {
        EngineParams {
            grid: &self.grid,
            potential: &self.potential,
            channel: self.channel.as_ref(),
            initial: &self.initial,
            dt: cfg.dt,
            t_final: cfg.t_final,
            n_hs: cfg.n_hs,
            propagator: cfg.propagator_kind(),
            newton_tol: cfg.newton_tol,
            newton_max_degree: crate::propagate::DEFAULT_NEWTON_MAX_DEGREE,
            l_convention: cfg.l_convention_kind(),
            master_seed: cfg.master_seed,
        }
    }
}

/// Deterministic, locale-free float formatting for all CSV output.
fn fmt(v: f64) -> String {
    format!("{v:.12e}")
}

/// Column order of `ensemble.csv`; guarded by a schema test.
pub const ENSEMBLE_COLUMNS: &str = "t,X_mean,X_sem,X_ci_lo,X_ci_hi,\
P_mean,P_sem,P_ci_lo,P_ci_hi,H_mean,H_sem,H_ci_lo,H_ci_hi,\
T_mean,T_sem,T_ci_lo,T_ci_hi";

/// Renders the ensemble statistics as the `ensemble.csv` body.
pub fn ensemble_csv(stats: &EnsembleStats) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{ENSEMBLE_COLUMNS}");
    for (i, t) in stats.times.iter().enumerate() {
        let mut row = vec![fmt(*t)];
        for obs in [&stats.x, &stats.p, &stats.h, &stats.t_kin] {
            let o = &obs[i];
            row.extend([fmt(o.mean), fmt(o.sem), fmt(o.ci_lo), fmt(o.ci_hi)]);
        }
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}

/// Runs the ensemble and writes `ensemble.csv`, `runs/run_<k>.csv`, and
/// `manifest.txt` into `out`.
pub fn cmd_simulate(
    cfg: &SimConfig,
    workers: Option<usize>,
    out: &Path,
) -> Result<EnsembleStats, CliError> {
    let setup = build_setup(cfg)?;
    let params = setup.engine_params(cfg);
    let started = std::time::Instant::now();
    let run = || run_ensemble(&params, cfg.n_traj, cfg.n_runs, cfg.ci_level);
    let stats = match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| CliError::Runtime(e.to_string()))?
            .install(run),
        None => run(),
    }
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    let elapsed = started.elapsed();

    fs::create_dir_all(out.join("runs")).map_err(|e| io_err("creating output dir", e))?;
    fs::write(out.join("ensemble.csv"), ensemble_csv(&stats))
        .map_err(|e| io_err("writing ensemble.csv", e))?;
    for (k, means) in stats.run_means.iter().enumerate() {
        let mut s = String::from("t,X,P,H,T\n");
        for (i, t) in stats.times.iter().enumerate() {
            let m = means[i];
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                fmt(*t),
                fmt(m[0]),
                fmt(m[1]),
                fmt(m[2]),
                fmt(m[3])
            );
        }
        fs::write(out.join(format!("runs/run_{k}.csv")), s)
            .map_err(|e| io_err("writing run CSV", e))?;
    }

    let mut manifest = String::new();
    let _ = writeln!(manifest, "# fermion-unravel v{}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(manifest, "# resolved configuration");
    manifest.push_str(&cfg.echo());
    let _ = writeln!(manifest, "# run info");
    let _ = writeln!(
        manifest,
        "# trajectory k of run r uses global index r * n_traj + k with master_seed above"
    );
    let _ = writeln!(manifest, "# failed_trajectories = {}", stats.n_failed);
    let _ = writeln!(manifest, "# wall_clock_s = {:.3}", elapsed.as_secs_f64());
    fs::write(out.join("manifest.txt"), manifest)
        .map_err(|e| io_err("writing manifest", e))?;
    Ok(stats)
}

/// Which oracle `reference` should run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReferenceKind {
    Analytic,
    Pauli,
    Dense,
}

/// Initial eigenstate populations of the theta state: levels `0..N-1`
/// filled except the HOMO, which carries `cos^2`, and the LUMO `sin^2`.
pub fn theta_populations(cfg: &SimConfig, d: usize) -> Vec<f64> {
    let mut n = vec![0.0; d];
    n[..cfg.n_fermions - 1].fill(1.0);
    n[cfg.n_fermions - 1] = cfg.theta.cos().powi(2);
    n[cfg.n_fermions] = cfg.theta.sin().powi(2);
    n
}

/// Writes the requested oracle series, on the simulate time mesh, to
/// `reference_<which>.csv` in `out`. Returns the file path.
pub fn cmd_reference(
    cfg: &SimConfig,
    which: ReferenceKind,
    out: &Path,
) -> Result<PathBuf, CliError> {
    fs::create_dir_all(out).map_err(|e| io_err("creating output dir", e))?;
    let n_steps = (cfg.t_final / cfg.dt).round() as usize;
    let times: Vec<f64> = (0..=n_steps).map(|i| i as f64 * cfg.dt).collect();
    let mut s = String::new();
    let path = match which {
        ReferenceKind::Analytic => {
            let setup = build_setup(cfg)?;
            let obs0 = crate::state::observables(
                &setup.grid,
                &setup.initial,
                &setup.potential,
                setup.channel.as_ref(),
            );
            let _ = writeln!(s, "t,X,P");
            for t in &times {
                let (x, p) =
                    analytic_harmonic_xp(obs0.x, obs0.p, cfg.mass, cfg.omega, cfg.gamma, *t);
                let _ = writeln!(s, "{},{},{}", fmt(*t), fmt(x), fmt(p));
            }
            out.join("reference_analytic.csv")
        }
        ReferenceKind::Pauli => {
            let setup = build_setup(cfg)?;
            let channel = setup.channel.as_ref().ok_or_else(|| {
                CliError::Config("pauli reference requires gamma > 0".into())
            })?;
            let sys = PauliSystem::new(
                &setup.grid,
                &setup.basis,
                channel,
                theta_populations(cfg, setup.basis.len()),
            );
            let series = pauli_evolve(&sys, cfg.dt, cfg.t_final)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            let _ = writeln!(s, "t,H,T");
            for (t, n) in &series {
                let (h, t_kin) = pauli_observables(&setup.grid, &setup.basis, cfg.mass, n);
                let _ = writeln!(s, "{},{},{}", fmt(*t), fmt(h), fmt(t_kin));
            }
            out.join("reference_pauli.csv")
        }
        ReferenceKind::Dense => {
            let setup = build_setup(cfg)?;
            let d = cfg.basis_size;
            let sys = DenseLindblad::new(&setup.grid, &setup.basis, setup.channel.as_ref(), d)
                .map_err(|e| CliError::Config(e.to_string()))?;
            if cfg.n_fermions != 1 {
                return Err(CliError::Config(
                    "dense reference is a single-particle oracle: set n_fermions = 1".into(),
                ));
            }
            let mut coeffs = vec![Complex64::default(); d];
            coeffs[0] = Complex64::new(cfg.theta.cos(), 0.0);
            coeffs[1] = Complex64::new(cfg.theta.sin(), 0.0);
            let rho0 = DenseDM::from_pure(&coeffs);
            let series = exact_lindblad_dense(&sys, &rho0, cfg.dt, cfg.t_final)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            let _ = writeln!(s, "t,X,P,H,T");
            for (t, dm) in &series {
                let o = dense_observables(&sys, dm);
                let _ = writeln!(
                    s,
                    "{},{},{},{},{}",
                    fmt(*t),
                    fmt(o.x),
                    fmt(o.p),
                    fmt(o.h),
                    fmt(o.t_kin)
                );
            }
            out.join("reference_dense.csv")
        }
    };
    fs::write(&path, s).map_err(|e| io_err("writing reference CSV", e))?;
    Ok(path)
}

/// Writes `energies.csv` (index, energy) and `orbitals.csv` (x plus one
/// column per state) for the lowest `n_states` trap eigenstates.
pub fn cmd_eigenstates(cfg: &SimConfig, n_states: usize, out: &Path) -> Result<(), CliError> {
    if n_states > cfg.n_points {
        return Err(CliError::Config(format!(
            "n_states = {n_states} exceeds the grid size {}",
            cfg.n_points
        )));
    }
    fs::create_dir_all(out).map_err(|e| io_err("creating output dir", e))?;
    let grid = Grid::new(cfg.box_length, cfg.n_points)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let potential = match cfg.potential.as_str() {
        "double_well" => Potential::double_well(
            &grid,
            cfg.mass,
            cfg.omega,
            cfg.barrier_height,
            cfg.barrier_width,
        ),
        _ => Potential::harmonic(&grid, cfg.mass, cfg.omega),
    };
    let basis = if n_states == 0 {
        EigenBasis {
            orbitals: vec![],
            energies: vec![],
        }
    } else {
        eigenstates(&potential, &grid, n_states).map_err(|e| CliError::Config(e.to_string()))?
    };

    let mut s = String::from("n,energy\n");
    for (i, e) in basis.energies.iter().enumerate() {
        let _ = writeln!(s, "{i},{}", fmt(*e));
    }
    fs::write(out.join("energies.csv"), s).map_err(|e| io_err("writing energies.csv", e))?;

    let mut s = String::from("x");
    for i in 0..n_states {
        let _ = write!(s, ",psi_{i}");
    }
    s.push('\n');
    for (j, x) in grid.x().iter().enumerate() {
        let _ = write!(s, "{}", fmt(*x));
        for orb in &basis.orbitals {
            let _ = write!(s, ",{}", fmt(orb.amp[j].re));
        }
        s.push('\n');
    }
    fs::write(out.join("orbitals.csv"), s).map_err(|e| io_err("writing orbitals.csv", e))?;
    Ok(())
}

/// Stochastic unraveling of Lindblad dynamics for trapped 1D fermions.
#[derive(Debug, Parser)]
#[command(name = "fermion-unravel", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the stochastic ensemble and write CSV statistics.
    Simulate {
        /// Config file (flat key = value); defaults used when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Extra key=value overrides (highest precedence).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
    /// Evaluate an oracle (analytic | pauli | dense) on the same time mesh.
    Reference {
        #[arg(long, value_enum)]
        which: ReferenceKind,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
    /// Write trap eigenenergies and orbitals.
    Eigenstates {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        n_states: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
}

/// Dispatches a parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate {
            config,
            seed,
            workers,
            out,
            sets,
        } => {
            let cfg = parse_config(config.as_deref(), &sets, seed)?;
            cmd_simulate(&cfg, workers, &out)?;
            Ok(())
        }
        Command::Reference {
            which,
            config,
            out,
            sets,
        } => {
            let cfg = parse_config(config.as_deref(), &sets, None)?;
            cmd_reference(&cfg, which, &out)?;
            Ok(())
        }
        Command::Eigenstates {
            config,
            n_states,
            out,
            sets,
        } => {
            let cfg = parse_config(config.as_deref(), &sets, None)?;
            cmd_eigenstates(&cfg, n_states, &out)
        }
    }
}
