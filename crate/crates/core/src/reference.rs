//! Independent oracles used to validate the stochastic engine: analytic
//! first-moment transients for the harmonic trap, the Pauli-master-equation
//! approximation in the trap eigenbasis, and an exact dense Lindblad
//! integrator for single-particle problems.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::grid::{apply_kinetic, inner, Grid};
use crate::operators::{EigenBasis, LindbladChannel};
use crate::state::Observables;

/// Largest internal step of the Pauli RK4 integrator.
const PAULI_MAX_STEP: f64 = 1e-2;
/// Internal step of the dense Lindblad RK4 integrator.
const DENSE_STEP: f64 = 1e-3;
/// Allowed drift of conserved quantities (trace, total population).
const CONSERVATION_TOL: f64 = 1e-10;
/// Allowed excursion of Pauli populations outside [0, 1].
const POPULATION_TOL: f64 = 1e-8;
/// Most negative admissible density-matrix eigenvalue.
const POSITIVITY_TOL: f64 = -1e-8;
/// Cost guard on the truncated eigenbasis of the dense oracle.
const DENSE_MAX_DIM: usize = 64;

#[derive(Debug, Error)]
pub enum ReferenceError {
    #[error("population left [0,1] by {excess:.3e} (tolerance {POPULATION_TOL:.0e})")]
    PopulationEscape { excess: f64 },
    #[error("total population drifted by {drift:.3e} (tolerance {CONSERVATION_TOL:.0e})")]
    PopulationDrift { drift: f64 },
    #[error("density-matrix trace drifted by {drift:.3e} (tolerance {CONSERVATION_TOL:.0e})")]
    TraceDrift { drift: f64 },
    #[error("density matrix lost positivity: min eigenvalue {min_eig:.3e}")]
    PositivityLoss { min_eig: f64 },
    #[error("dense basis of dimension {dim} exceeds the limit of {DENSE_MAX_DIM}")]
    BasisTooLarge { dim: usize },
}

/// Analytic first moments of the damped harmonic trap:
/// `X_t = (X0 cos wt + (P0/mw) sin wt) e^{-gt/2}` and
/// `P_t = (P0 cos wt - mw X0 sin wt) e^{-gt/2}`, the closed-form solution of
/// the Lindblad moment equations `dX/dt = P/m - (g/2)X`,
/// `dP/dt = -mw^2 X - (g/2)P`. The trajectory depends only on (X0, P0), not
/// on the particle number.
pub fn analytic_harmonic_xp(
    x0: f64,
    p0: f64,
    mass: f64,
    omega: f64,
    gamma: f64,
    t: f64,
) -> (f64, f64) {
    assert!(omega > 0.0, "omega must be positive");
    let envelope = (-0.5 * gamma * t).exp();
    let (s, c) = (omega * t).sin_cos();
    let x = (x0 * c + p0 / (mass * omega) * s) * envelope;
    let p = (p0 * c - mass * omega * x0 * s) * envelope;
    (x, p)
}

/// Transition-rate matrix of the Pauli master equation: `rates[(i, j)] =
/// |<psi_i|l|psi_j>|^2` is the rate of j -> i transfer. For the harmonic trap
/// with `omega_l = omega` the channel is a pure lowering operator and only the
/// first subdiagonal is nonzero.
pub fn pauli_rates(grid: &Grid, basis: &EigenBasis, channel: &LindbladChannel) -> DMatrix<f64> {
    let d = basis.len();
    let applied: Vec<_> = basis
        .orbitals
        .iter()
        .map(|phi| channel.apply(grid, phi))
        .collect();
    DMatrix::from_fn(d, d, |i, j| {
        inner(grid, &basis.orbitals[i], &applied[j]).norm_sqr()
    })
}

/// Closed population dynamics in the trap eigenbasis: energies, pairwise
/// transfer rates, and the initial occupation of each eigenstate.
#[derive(Clone, Debug)]
pub struct PauliSystem {
    pub energies: Vec<f64>,
    pub rates: DMatrix<f64>,
    pub populations: Vec<f64>,
}

impl PauliSystem {
    pub fn new(
        grid: &Grid,
        basis: &EigenBasis,
        channel: &LindbladChannel,
        populations: Vec<f64>,
    ) -> Self {
        assert_eq!(populations.len(), basis.len(), "population/basis mismatch");
        Self {
            energies: basis.energies.clone(),
            rates: pauli_rates(grid, basis, channel),
            populations,
        }
    }
}

/// `dn_i/dt = sum_j [rate_ij n_j (1 - n_i) - rate_ji n_i (1 - n_j)]`.
fn pauli_rhs(rates: &DMatrix<f64>, n: &DVector<f64>) -> DVector<f64> {
    let d = n.len();
    DVector::from_fn(d, |i, _| {
        (0..d)
            .map(|j| rates[(i, j)] * n[j] * (1.0 - n[i]) - rates[(j, i)] * n[i] * (1.0 - n[j]))
            .sum()
    })
}

/// Integrates the Pauli master equation with classic fourth-order Runge-Kutta
/// (internal step at most [`PAULI_MAX_STEP`]) and records the populations at
/// `t = 0, dt, 2 dt, ..., t_final`. Total population must be conserved and
/// every population must stay in [0, 1]; violations are reported, not
/// clamped, because clamping would mask rate-matrix bugs.
pub fn pauli_evolve(
    sys: &PauliSystem,
    dt: f64,
    t_final: f64,
) -> Result<Vec<(f64, Vec<f64>)>, ReferenceError> {
    assert!(dt > 0.0 && t_final >= 0.0, "invalid time mesh");
    let mut n = DVector::from_vec(sys.populations.clone());
    let total0 = n.sum();
    let n_out = (t_final / dt).round() as usize;
    let n_sub = (dt / PAULI_MAX_STEP).ceil().max(1.0) as usize;
    let h = dt / n_sub as f64;

    let mut series = Vec::with_capacity(n_out + 1);
    series.push((0.0, n.as_slice().to_vec()));
    for step in 1..=n_out {
        for _ in 0..n_sub {
            let k1 = pauli_rhs(&sys.rates, &n);
            let k2 = pauli_rhs(&sys.rates, &(&n + &k1 * (0.5 * h)));
            let k3 = pauli_rhs(&sys.rates, &(&n + &k2 * (0.5 * h)));
            let k4 = pauli_rhs(&sys.rates, &(&n + &k3 * h));
            n += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        let drift = (n.sum() - total0).abs();
        if drift > CONSERVATION_TOL {
            return Err(ReferenceError::PopulationDrift { drift });
        }
        let excess = n
            .iter()
            .map(|&v| (-v).max(v - 1.0).max(0.0))
            .fold(0.0, f64::max);
        if excess > POPULATION_TOL {
            return Err(ReferenceError::PopulationEscape { excess });
        }
        series.push((step as f64 * dt, n.as_slice().to_vec()));
    }
    Ok(series)
}

/// Total energy `H = sum_i n_i e_i` and kinetic energy
/// `T = sum_i n_i <psi_i|T|psi_i>` of a population vector.
pub fn pauli_observables(
    grid: &Grid,
    basis: &EigenBasis,
    mass: f64,
    populations: &[f64],
) -> (f64, f64) {
    assert_eq!(populations.len(), basis.len(), "population/basis mismatch");
    let h: f64 = populations
        .iter()
        .zip(&basis.energies)
        .map(|(n, e)| n * e)
        .sum();
    let t: f64 = populations
        .iter()
        .zip(&basis.orbitals)
        .map(|(n, phi)| n * inner(grid, phi, &apply_kinetic(grid, mass, phi)).re)
        .sum();
    (h, t)
}

/// Single-particle operators projected onto a truncated trap eigenbasis:
/// everything needed to integrate the Lindblad equation densely and read out
/// observables.
#[derive(Clone, Debug)]
pub struct DenseLindblad {
    pub dim: usize,
    /// Hamiltonian (diagonal: the eigenenergies).
    pub h: DMatrix<Complex64>,
    /// Position matrix elements.
    pub x: DMatrix<Complex64>,
    /// Momentum matrix elements.
    pub p: DMatrix<Complex64>,
    /// Kinetic-energy matrix elements.
    pub t_kin: DMatrix<Complex64>,
    /// Lindblad operator; zero when the channel is absent.
    pub l: DMatrix<Complex64>,
}

impl DenseLindblad {
    /// Projects h, x, p, T, and l onto the first `dim` states of `basis`.
    pub fn new(
        grid: &Grid,
        basis: &EigenBasis,
        channel: Option<&LindbladChannel>,
        dim: usize,
    ) -> Result<Self, ReferenceError> {
        if dim > DENSE_MAX_DIM {
            return Err(ReferenceError::BasisTooLarge { dim });
        }
        assert!(dim >= 1 && dim <= basis.len(), "basis too small for dim");
        let states = &basis.orbitals[..dim];
        let project = |applied: &dyn Fn(usize) -> crate::grid::Orbital| {
            let cols: Vec<_> = (0..dim).map(applied).collect();
            DMatrix::from_fn(dim, dim, |i, j| inner(grid, &states[i], &cols[j]))
        };
        let mass = channel.map_or(1.0, |c| c.mass);
        Ok(Self {
            dim,
            h: DMatrix::from_fn(dim, dim, |i, j| {
                if i == j {
                    Complex64::new(basis.energies[i], 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }),
            x: project(&|j| crate::grid::apply_position(grid, &states[j])),
            p: project(&|j| crate::grid::apply_momentum(grid, &states[j])),
            t_kin: project(&|j| apply_kinetic(grid, mass, &states[j])),
            l: match channel {
                Some(ch) => project(&|j| ch.apply(grid, &states[j])),
                None => DMatrix::zeros(dim, dim),
            },
        })
    }
}

/// A density matrix over the truncated eigenbasis.
#[derive(Clone, Debug)]
pub struct DenseDM {
    pub rho: DMatrix<Complex64>,
}

impl DenseDM {
    /// `rho = |c><c|` for a normalized coefficient vector `c`.
    pub fn from_pure(coeffs: &[Complex64]) -> Self {
        let c = DVector::from_column_slice(coeffs);
        let norm = c.norm();
        assert!(norm > 0.0, "zero state vector");
        let c = c / Complex64::new(norm, 0.0);
        Self {
            rho: &c * c.adjoint(),
        }
    }

    pub fn trace(&self) -> f64 {
        self.rho.diagonal().iter().map(|z| z.re).sum()
    }

    /// Largest element of `rho - rho^dagger`.
    pub fn hermiticity_error(&self) -> f64 {
        (&self.rho - self.rho.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    fn min_eigenvalue(&self) -> f64 {
        self.rho
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b))
    }
}

/// `drho/dt = -i[h, rho] + l rho l^dag - (1/2){l^dag l, rho}`.
fn lindblad_rhs(
    sys: &DenseLindblad,
    ldl: &DMatrix<Complex64>,
    rho: &DMatrix<Complex64>,
) -> DMatrix<Complex64> {
    let i = Complex64::new(0.0, 1.0);
    let comm = &sys.h * rho - rho * &sys.h;
    let jump = &sys.l * rho * sys.l.adjoint();
    let anti = ldl * rho + rho * ldl;
    comm * (-i) + jump - anti * Complex64::new(0.5, 0.0)
}

/// Integrates the dense Lindblad equation by classic fourth-order Runge-Kutta
/// with fixed internal step [`DENSE_STEP`], sampling the density matrix at
/// `t = 0, dt, ..., t_final`. Trace conservation, Hermiticity, and
/// approximate positivity are enforced as hard checks at every sample.
pub fn exact_lindblad_dense(
    sys: &DenseLindblad,
    rho0: &DenseDM,
    dt: f64,
    t_final: f64,
) -> Result<Vec<(f64, DenseDM)>, ReferenceError> {
    assert!(dt > 0.0 && t_final >= 0.0, "invalid time mesh");
    let ldl = sys.l.adjoint() * &sys.l;
    let mut rho = rho0.rho.clone();
    let trace0 = rho0.trace();
    let n_out = (t_final / dt).round() as usize;
    let n_sub = (dt / DENSE_STEP).ceil().max(1.0) as usize;
    let h = dt / n_sub as f64;

    let mut series = Vec::with_capacity(n_out + 1);
    series.push((0.0, rho0.clone()));
    for step in 1..=n_out {
        for _ in 0..n_sub {
            let k1 = lindblad_rhs(sys, &ldl, &rho);
            let k2 = lindblad_rhs(sys, &ldl, &(&rho + &k1 * Complex64::new(0.5 * h, 0.0)));
            let k3 = lindblad_rhs(sys, &ldl, &(&rho + &k2 * Complex64::new(0.5 * h, 0.0)));
            let k4 = lindblad_rhs(sys, &ldl, &(&rho + &k3 * Complex64::new(h, 0.0)));
            rho += (k1 + k2 * Complex64::new(2.0, 0.0) + k3 * Complex64::new(2.0, 0.0) + k4)
                * Complex64::new(h / 6.0, 0.0);
            // Round-off hygiene: the exact flow preserves Hermiticity.
            rho = (&rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
        }
        let sample = DenseDM { rho: rho.clone() };
        let drift = (sample.trace() - trace0).abs();
        if drift > CONSERVATION_TOL {
            return Err(ReferenceError::TraceDrift { drift });
        }
        let min_eig = sample.min_eigenvalue();
        if min_eig < POSITIVITY_TOL {
            return Err(ReferenceError::PositivityLoss { min_eig });
        }
        series.push((step as f64 * dt, sample));
    }
    Ok(series)
}

/// Observables of a dense density matrix: `<A> = tr(rho A)`.
pub fn dense_observables(sys: &DenseLindblad, dm: &DenseDM) -> Observables {
    let expect = |op: &DMatrix<Complex64>| (&dm.rho * op).trace();
    Observables {
        x: expect(&sys.x).re,
        p: expect(&sys.p).re,
        h: expect(&sys.h).re,
        t_kin: expect(&sys.t_kin).re,
        l_expect: expect(&sys.l),
    }
}
