//! Stochastic trajectory engine: noise streams, the fixed-`dw` /
//! resampled-`(du, dv)` Hubbard-Stratonovich inner loop, the collapse step,
//! and ensemble statistics.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::grid::Grid;
use crate::operators::{LindbladChannel, Potential};
use crate::propagate::{
    apply_exp_dense, apply_exp_split, build_generator, NewtonPropagator, PropagateError,
    DEFAULT_NEWTON_MAX_DEGREE, DEFAULT_NEWTON_TOL,
};
use crate::state::{
    coherent_superposition_dm, collapse_to_slater, observables, orthonormalize, Observables,
    SlaterState, StateError,
};

/// Fraction of failed trajectories above which an ensemble run aborts.
const MAX_FAILURE_FRACTION: f64 = 0.01;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("propagation failed: {0}")]
    Propagate(#[from] PropagateError),
    #[error("state algebra failed: {0}")]
    State(#[from] StateError),
    #[error("{failed} of {total} trajectories failed (limit {MAX_FAILURE_FRACTION}): {first}")]
    TooManyFailures {
        failed: usize,
        total: usize,
        first: String,
    },
}

/// One step's worth of Wiener increments for a single channel. `dw` drives
/// the physical unraveling noise; `du` and `dv` are the auxiliary
/// Hubbard-Stratonovich fields.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoiseIncrement {
    pub dw: f64,
    pub du: f64,
    pub dv: f64,
}

/// Three independent Gaussian increments with mean 0 and variance `dt`.
pub fn wiener(rng: &mut impl Rng, dt: f64) -> NoiseIncrement {
    assert!(dt >= 0.0, "dt must be non-negative");
    let s = dt.sqrt();
    NoiseIncrement {
        dw: s * rng.sample::<f64, _>(StandardNormal),
        du: s * rng.sample::<f64, _>(StandardNormal),
        dv: s * rng.sample::<f64, _>(StandardNormal),
    }
}

/// Counter-based stream generator: the seed is a hash of
/// (master_seed, trajectory, step, stream), so any trajectory/step can be
/// reproduced independently of execution order or worker count. Stream 0
/// carries the physical `dw`; streams `1..=N_HS` carry the auxiliary
/// `(du, dv)` pairs.
pub fn stream_rng(master_seed: u64, trajectory: u64, step: u64, stream: u64) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    for word in [master_seed, trajectory, step, stream] {
        hasher.update(word.to_le_bytes());
    }
    ChaCha8Rng::from_seed(hasher.finalize().into())
}

/// Convention for the nonlinear feedback expectation in the generator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LConvention {
    /// Complex `<L>` (Gisin form); the default.
    #[default]
    Complex,
    /// Real part only (Wiseman form).
    Real,
}

/// Which per-step propagator the engine uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PropagatorKind {
    /// Newton polynomial interpolation of the exponential (oracle grade).
    Newton,
    /// Symmetric split-operator factorization (second order, fast); default.
    #[default]
    Split,
    /// Dense matrix exponential (small grids only).
    Dense,
}

/// Everything a trajectory needs, shared immutably across workers.
pub struct EngineParams<'a> {
    pub grid: &'a Grid,
    pub potential: &'a Potential,
    pub channel: Option<&'a LindbladChannel>,
    pub initial: &'a SlaterState,
    pub dt: f64,
    pub t_final: f64,
    pub n_hs: usize,
    pub propagator: PropagatorKind,
    pub newton_tol: f64,
    pub newton_max_degree: usize,
    pub l_convention: LConvention,
    pub master_seed: u64,
}

impl<'a> EngineParams<'a> {
    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    fn feedback(&self, l: Complex64) -> Complex64 {
        match self.l_convention {
            LConvention::Complex => l,
            LConvention::Real => Complex64::new(l.re, 0.0),
        }
    }

    /// `<L>` of a state under the configured convention (zero with no bath).
    pub fn l_expectation(&self, state: &SlaterState) -> Complex64 {
        match self.channel {
            Some(ch) => self.feedback(ch.expectation(self.grid, &state.orbitals)),
            None => Complex64::default(),
        }
    }
}

/// Per-trajectory propagator state (the Newton table cache is mutable).
enum Stepper {
    Newton(NewtonPropagator),
    Split,
    Dense,
}

impl Stepper {
    fn new(params: &EngineParams) -> Self {
        match params.propagator {
            PropagatorKind::Newton => Stepper::Newton(NewtonPropagator::new(
                params.newton_tol,
                params.newton_max_degree,
            )),
            PropagatorKind::Split => Stepper::Split,
            PropagatorKind::Dense => Stepper::Dense,
        }
    }

    fn propagate(
        &mut self,
        gen: &crate::propagate::StepGenerator,
        grid: &Grid,
        state: &SlaterState,
    ) -> Result<SlaterState, PropagateError> {
        let orbitals = state
            .orbitals
            .iter()
            .map(|phi| match self {
                Stepper::Newton(prop) => prop.apply(gen, grid, phi),
                Stepper::Split => Ok(apply_exp_split(gen, grid, phi)),
                Stepper::Dense => apply_exp_dense(gen, grid, phi),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SlaterState { orbitals })
    }
}

/// One time step of the unraveling: draw one `dw`, then holding it fixed
/// sample `(du, dv)` `N_HS` times, propagate the determinant under each
/// realization, average the one-body density matrices, collapse back to a
/// Slater determinant, and update `<L>` from the collapsed orbitals.
///
/// With no channel this is a single unitary step.
fn hs_step(
    params: &EngineParams,
    stepper: &mut Stepper,
    state: &SlaterState,
    l_expect: Complex64,
    trajectory: u64,
    step: u64,
) -> Result<(SlaterState, Complex64), EngineError> {
    let grid = params.grid;
    if params.channel.is_none() {
        let gen = build_generator(
            grid,
            params.potential,
            None,
            Complex64::default(),
            params.dt,
            NoiseIncrement::default(),
        );
        let next = orthonormalize(grid, &stepper.propagate(&gen, grid, state)?)?;
        return Ok((next, Complex64::default()));
    }

    let dw = wiener(
        &mut stream_rng(params.master_seed, trajectory, step, 0),
        params.dt,
    )
    .dw;
    let mut samples = Vec::with_capacity(params.n_hs);
    for k in 1..=params.n_hs {
        let mut rng = stream_rng(params.master_seed, trajectory, step, k as u64);
        let aux = wiener(&mut rng, params.dt);
        let noise = NoiseIncrement {
            dw,
            du: aux.du,
            dv: aux.dv,
        };
        let gen = build_generator(
            grid,
            params.potential,
            params.channel,
            l_expect,
            params.dt,
            noise,
        );
        // Raw (unnormalized) propagated determinants: their relative
        // amplitudes carry the Hubbard-Stratonovich weights.
        samples.push(stepper.propagate(&gen, grid, state)?);
    }
    let averaged = coherent_superposition_dm(grid, &samples)?;
    let collapsed = collapse_to_slater(grid, &averaged, state.n_fermions(), Some(state))?;
    let l_next = params.l_expectation(&collapsed);
    Ok((collapsed, l_next))
}

/// Time series of one stochastic trajectory.
#[derive(Clone, Debug)]
pub struct TrajectoryResult {
    pub times: Vec<f64>,
    pub series: Vec<Observables>,
    /// (master_seed, trajectory index): everything needed to reproduce it.
    pub seed: (u64, u64),
}

/// Evolves one trajectory from `t = 0` to `t_final`. Deterministic for a
/// fixed `(master_seed, trajectory)` pair.
pub fn run_trajectory(params: &EngineParams, trajectory: u64) -> Result<TrajectoryResult, EngineError> {
    let n_steps = params.n_steps();
    let mut stepper = Stepper::new(params);
    let mut state = params.initial.clone();
    let mut l_expect = params.l_expectation(&state);

    let mut times = Vec::with_capacity(n_steps + 1);
    let mut series = Vec::with_capacity(n_steps + 1);
    times.push(0.0);
    series.push(observables(
        params.grid,
        &state,
        params.potential,
        params.channel,
    ));
    for step in 0..n_steps {
        let (next, l_next) = hs_step(params, &mut stepper, &state, l_expect, trajectory, step as u64)?;
        state = next;
        l_expect = l_next;
        times.push((step + 1) as f64 * params.dt);
        series.push(observables(
            params.grid,
            &state,
            params.potential,
            params.channel,
        ));
    }
    Ok(TrajectoryResult {
        times,
        series,
        seed: (params.master_seed, trajectory),
    })
}

/// Per-time summary of one observable across independent runs.
#[derive(Clone, Copy, Debug, Default)]
pub struct Summary {
    pub mean: f64,
    /// Standard error of the cross-run mean.
    pub sem: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Cross-run ensemble statistics on the shared time mesh.
#[derive(Clone, Debug)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    pub x: Vec<Summary>,
    pub p: Vec<Summary>,
    pub h: Vec<Summary>,
    pub t_kin: Vec<Summary>,
    /// `run_means[run][time] = [X, P, H, T]` averaged over the run's
    /// surviving trajectories.
    pub run_means: Vec<Vec<[f64; 4]>>,
    pub n_failed: usize,
}

/// Runs `n_runs x n_traj` independent trajectories (trajectory `j` of run
/// `r` has global index `r * n_traj + j`, making results independent of the
/// worker count), averages within runs, and reports cross-run means with
/// Student-t confidence intervals at `ci_level`.
pub fn run_ensemble(
    params: &EngineParams,
    n_traj: usize,
    n_runs: usize,
    ci_level: f64,
) -> Result<EnsembleStats, EngineError> {
    assert!(n_traj >= 1 && n_runs >= 1, "need at least one trajectory");
    assert!((0.0..1.0).contains(&ci_level), "ci_level must be in (0,1)");
    let total = n_runs * n_traj;
    let results: Vec<_> = (0..total)
        .into_par_iter()
        .map(|idx| run_trajectory(params, idx as u64))
        .collect();

    let failed = results.iter().filter(|r| r.is_err()).count();
    if failed as f64 > MAX_FAILURE_FRACTION * total as f64 {
        let first = results
            .iter()
            .find_map(|r| r.as_ref().err().map(|e| e.to_string()))
            .unwrap_or_default();
        return Err(EngineError::TooManyFailures {
            failed,
            total,
            first,
        });
    }

    let n_times = params.n_steps() + 1;
    let times: Vec<f64> = (0..n_times).map(|i| i as f64 * params.dt).collect();

    // Within-run means over surviving trajectories, in global-index order.
    let mut run_means = vec![vec![[0.0; 4]; n_times]; n_runs];
    for (run, mean) in run_means.iter_mut().enumerate() {
        let ok: Vec<_> = results[run * n_traj..(run + 1) * n_traj]
            .iter()
            .filter_map(|r| r.as_ref().ok())
            .collect();
        assert!(!ok.is_empty(), "a run lost all trajectories below the global failure limit");
        let w = 1.0 / ok.len() as f64;
        for traj in &ok {
            for (t, obs) in traj.series.iter().enumerate() {
                mean[t][0] += w * obs.x;
                mean[t][1] += w * obs.p;
                mean[t][2] += w * obs.h;
                mean[t][3] += w * obs.t_kin;
            }
        }
    }

    // Cross-run mean, SEM, and Student-t interval per time and observable.
    let t_quantile = if n_runs >= 2 {
        StudentsT::new(0.0, 1.0, (n_runs - 1) as f64)
            .expect("valid Student-t")
            .inverse_cdf(0.5 * (1.0 + ci_level))
    } else {
        0.0
    };
    let summarize = |component: usize| -> Vec<Summary> {
        (0..n_times)
            .map(|t| {
                let vals: Vec<f64> = run_means.iter().map(|m| m[t][component]).collect();
                let mean = vals.iter().sum::<f64>() / n_runs as f64;
                let sem = if n_runs >= 2 {
                    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                        / (n_runs - 1) as f64;
                    (var / n_runs as f64).sqrt()
                } else {
                    0.0
                };
                let half = t_quantile * sem;
                Summary {
                    mean,
                    sem,
                    ci_lo: mean - half,
                    ci_hi: mean + half,
                }
            })
            .collect()
    };

    Ok(EnsembleStats {
        times,
        x: summarize(0),
        p: summarize(1),
        h: summarize(2),
        t_kin: summarize(3),
        run_means,
        n_failed: failed,
    })
}

/// Engine defaults shared by the CLI and tests.
pub fn default_newton_settings() -> (f64, usize) {
    (DEFAULT_NEWTON_TOL, DEFAULT_NEWTON_MAX_DEGREE)
}
