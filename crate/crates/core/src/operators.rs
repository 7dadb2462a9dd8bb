//! Single-particle Hamiltonian, trap potentials, bound-state eigensolver
//! and the Lindblad channel with its Hermitian R/S/C decomposition.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::grid::{self, Grid, Orbital};

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("parameter {name} must be positive, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },
    #[error("requested {requested} eigenstates but the grid has only {available} points")]
    TooManyStates { requested: usize, available: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PotentialKind {
    Harmonic,
    DoubleWell,
}

/// Trap potential tabulated on the grid.
#[derive(Clone, Debug)]
pub struct Potential {
    pub kind: PotentialKind,
    pub mass: f64,
    pub omega: f64,
    pub barrier_height: f64,
    pub barrier_width: f64,
    values: DVector<f64>,
}

impl Potential {
    /// `V(x) = m omega^2 x^2 / 2`.
    pub fn harmonic(grid: &Grid, mass: f64, omega: f64) -> Self {
        let values = DVector::from_iterator(
            grid.n_points(),
            grid.x().iter().map(|&x| 0.5 * mass * omega * omega * x * x),
        );
        Potential {
            kind: PotentialKind::Harmonic,
            mass,
            omega,
            barrier_height: 0.0,
            barrier_width: 0.0,
            values,
        }
    }

    /// Harmonic trap plus a Gaussian barrier centered at the origin:
    /// `V(x) = m omega^2 x^2 / 2 + V_B exp(-x^2 / 2 sigma_B^2)`.
    pub fn double_well(grid: &Grid, mass: f64, omega: f64, v_b: f64, sigma_b: f64) -> Self {
        let values = DVector::from_iterator(
            grid.n_points(),
            grid.x().iter().map(|&x| {
                0.5 * mass * omega * omega * x * x
                    + v_b * (-x * x / (2.0 * sigma_b * sigma_b)).exp()
            }),
        );
        Potential {
            kind: PotentialKind::DoubleWell,
            mass,
            omega,
            barrier_height: v_b,
            barrier_width: sigma_b,
            values,
        }
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    /// `h phi = p^2/(2m) phi + V(x) phi`.
    pub fn apply_h(&self, grid: &Grid, phi: &Orbital) -> Orbital {
        let mut out = grid::apply_kinetic(grid, self.mass, phi);
        for ((o, p), &v) in out.amp.iter_mut().zip(phi.amp.iter()).zip(self.values.iter()) {
            *o += p * v;
        }
        out
    }
}

/// Orthonormal bound states of `h` with ascending energies.
#[derive(Clone, Debug)]
pub struct EigenBasis {
    pub orbitals: Vec<Orbital>,
    pub energies: Vec<f64>,
}

impl EigenBasis {
    pub fn len(&self) -> usize {
        self.orbitals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orbitals.is_empty()
    }
}

/// Rotate the global phase so the largest-magnitude entry is positive real.
/// Makes eigenstates and natural orbitals deterministic. Symmetric trap
/// states have two mirror lobes of equal magnitude; the rightmost
/// near-maximal entry is the anchor, which reproduces the conventional
/// (positive leading Hermite coefficient) signs for oscillator states.
pub fn fix_phase(grid: &Grid, orbital: &mut Orbital) {
    let _ = grid;
    let mut best_mag = 0.0f64;
    for a in orbital.amp.iter() {
        best_mag = best_mag.max(a.norm_sqr());
    }
    if best_mag <= 0.0 {
        return;
    }
    let threshold = best_mag * (1.0 - 1e-9);
    let mut best = 0usize;
    for (i, a) in orbital.amp.iter().enumerate() {
        if a.norm_sqr() >= threshold {
            best = i;
        }
    }
    let a = orbital.amp[best];
    let phase = a / a.norm();
    let rot = phase.conj();
    for v in orbital.amp.iter_mut() {
        *v *= rot;
    }
}

/// Lowest `n_states` eigenstates of `h` by dense diagonalization of the
/// grid Hamiltonian. The kinetic term makes the matrix real symmetric, so
/// the grid Hamiltonian is assembled column-by-column from real unit
/// vectors.
pub fn eigenstates(
    pot: &Potential,
    grid: &Grid,
    n_states: usize,
) -> Result<EigenBasis, OperatorError> {
    let ng = grid.n_points();
    if n_states > ng {
        return Err(OperatorError::TooManyStates {
            requested: n_states,
            available: ng,
        });
    }
    let mut h = DMatrix::<f64>::zeros(ng, ng);
    let mut unit = Orbital::zeros(grid);
    for j in 0..ng {
        unit.amp[j] = Complex64::new(1.0, 0.0);
        let col = pot.apply_h(grid, &unit);
        for i in 0..ng {
            h[(i, j)] = col.amp[i].re;
        }
        unit.amp[j] = Complex64::new(0.0, 0.0);
    }
    // Symmetrize away FFT round-off.
    let ht = h.transpose();
    h = (h + ht) * 0.5;

    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..ng).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let scale = 1.0 / grid.dx().sqrt();
    let mut orbitals = Vec::with_capacity(n_states);
    let mut energies = Vec::with_capacity(n_states);
    for &idx in order.iter().take(n_states) {
        let col = eig.eigenvectors.column(idx);
        let mut orb = Orbital {
            amp: DVector::from_iterator(ng, col.iter().map(|&v| Complex64::new(v * scale, 0.0))),
        };
        fix_phase(grid, &mut orb);
        orbitals.push(orb);
        energies.push(eig.eigenvalues[idx]);
    }
    Ok(EigenBasis { orbitals, energies })
}

/// One-body Lindblad channel `l = c (x + i p / (m omega_l))`, the lowering
/// ladder operator of a harmonic oscillator with frequency `omega_l`,
/// decomposed into a position-diagonal Hermitian part `R = c x`, a
/// momentum-diagonal Hermitian part `S = c p / (m omega_l)` and the scalar
/// commutator `C = i [R, S] = -gamma / (2 N)`.
#[derive(Clone, Debug)]
pub struct LindbladChannel {
    pub prefactor: f64,
    pub mass: f64,
    pub omega_l: f64,
    pub gamma: f64,
    pub n_fermions: usize,
}

impl LindbladChannel {
    pub fn new(
        mass: f64,
        omega_l: f64,
        gamma: f64,
        n_fermions: usize,
    ) -> Result<Self, OperatorError> {
        for (name, value) in [("mass", mass), ("omega_l", omega_l), ("gamma", gamma)] {
            if !(value > 0.0) {
                return Err(OperatorError::NonPositiveParameter { name, value });
            }
        }
        if n_fermions == 0 {
            return Err(OperatorError::NonPositiveParameter {
                name: "n_fermions",
                value: 0.0,
            });
        }
        let prefactor = (mass * omega_l * gamma / (2.0 * n_fermions as f64)).sqrt();
        Ok(LindbladChannel {
            prefactor,
            mass,
            omega_l,
            gamma,
            n_fermions,
        })
    }

    /// Diagonal of `R` in position space: `c x_j`.
    pub fn position_coeffs(&self, grid: &Grid) -> Vec<f64> {
        grid.x().iter().map(|&x| self.prefactor * x).collect()
    }

    /// Diagonal of `S` in momentum space: `c k_j / (m omega_l)`.
    pub fn momentum_coeffs(&self, grid: &Grid) -> Vec<f64> {
        grid.k()
            .iter()
            .map(|&k| self.prefactor * k / (self.mass * self.omega_l))
            .collect()
    }

    /// The scalar `C = i [R, S] = -gamma / (2 N)`.
    pub fn scalar(&self) -> f64 {
        -self.gamma / (2.0 * self.n_fermions as f64)
    }

    /// `R phi`.
    pub fn apply_r(&self, grid: &Grid, phi: &Orbital) -> Orbital {
        let mut out = grid::apply_position(grid, phi);
        for a in out.amp.iter_mut() {
            *a *= self.prefactor;
        }
        out
    }

    /// `S phi`.
    pub fn apply_s(&self, grid: &Grid, phi: &Orbital) -> Orbital {
        let mut out = grid::apply_momentum(grid, phi);
        let s = self.prefactor / (self.mass * self.omega_l);
        for a in out.amp.iter_mut() {
            *a *= s;
        }
        out
    }

    /// `l phi = (R + i S) phi`.
    pub fn apply(&self, grid: &Grid, phi: &Orbital) -> Orbital {
        let r = self.apply_r(grid, phi);
        let s = self.apply_s(grid, phi);
        Orbital {
            amp: r.amp + s.amp * Complex64::new(0.0, 1.0),
        }
    }

    /// `l^dag phi = (R - i S) phi`.
    pub fn apply_adjoint(&self, grid: &Grid, phi: &Orbital) -> Orbital {
        let r = self.apply_r(grid, phi);
        let s = self.apply_s(grid, phi);
        Orbital {
            amp: r.amp - s.amp * Complex64::new(0.0, 1.0),
        }
    }

    /// `<L> = sum_n <phi_n | l | phi_n>` over a set of orbitals.
    pub fn expectation(&self, grid: &Grid, orbitals: &[Orbital]) -> Complex64 {
        orbitals
            .iter()
            .map(|phi| grid::inner(grid, phi, &self.apply(grid, phi)))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::inner;
    use crate::testutil::{ho_state, random_orbital, random_smooth_orbital};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid() -> Grid {
        Grid::new(16.0, 128).unwrap()
    }

    #[test]
    fn apply_h_on_harmonic_eigenstates() {
        let g = grid();
        let pot = Potential::harmonic(&g, 1.0, 1.0);
        let basis = eigenstates(&pot, &g, 8).unwrap();
        for (n, e) in [(0usize, 0.5), (7, 7.5)] {
            let psi = &basis.orbitals[n];
            let hpsi = pot.apply_h(&g, psi);
            let resid = Orbital {
                amp: &hpsi.amp - &psi.amp * Complex64::new(e, 0.0),
            };
            assert!(resid.norm_sq(&g).sqrt() < 1e-8, "residual too large for n={n}");
        }
        // Analytic Hermite fixture agrees with the ground state closely.
        let psi0 = ho_state(&g, 0);
        let hpsi0 = pot.apply_h(&g, &psi0);
        let resid = Orbital {
            amp: &hpsi0.amp - &psi0.amp * Complex64::new(0.5, 0.0),
        };
        assert!(resid.norm_sq(&g).sqrt() < 1e-10);
        let z = Orbital::zeros(&g);
        assert_eq!(pot.apply_h(&g, &z).norm_sq(&g), 0.0);
    }

    #[test]
    fn harmonic_spectrum() {
        let g = grid();
        let pot = Potential::harmonic(&g, 1.0, 1.0);
        let basis = eigenstates(&pot, &g, 9).unwrap();
        for (n, &e) in basis.energies.iter().enumerate() {
            assert_abs_diff_eq!(e, n as f64 + 0.5, epsilon = 1e-6);
        }
        let total: f64 = basis.energies.iter().take(8).sum();
        assert_abs_diff_eq!(total, 32.0, epsilon = 1e-5);
        // Orthonormality and eigen-residuals.
        for i in 0..9 {
            for j in 0..9 {
                let s = inner(&g, &basis.orbitals[i], &basis.orbitals[j]);
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((s - Complex64::new(expect, 0.0)).norm() < 1e-10);
            }
            let h = pot.apply_h(&g, &basis.orbitals[i]);
            let resid = Orbital {
                amp: &h.amp - &basis.orbitals[i].amp * Complex64::new(basis.energies[i], 0.0),
            };
            assert!(resid.norm_sq(&g).sqrt() < 1e-8);
        }
    }

    #[test]
    fn eigenstates_phase_is_deterministic() {
        let g = grid();
        let pot = Potential::harmonic(&g, 1.0, 1.0);
        let a = eigenstates(&pot, &g, 4).unwrap();
        let b = eigenstates(&pot, &g, 4).unwrap();
        for (x, y) in a.orbitals.iter().zip(&b.orbitals) {
            assert_eq!(x.amp, y.amp);
        }
        // Sign convention: peak entry positive real.
        for orb in &a.orbitals {
            let peak = orb.amp.iter().cloned().max_by(|u, v| u.norm_sqr().total_cmp(&v.norm_sqr())).unwrap();
            assert!(peak.re > 0.0 && peak.im.abs() < 1e-12);
        }
    }

    #[test]
    fn eigenstates_rejects_oversized_request() {
        let g = Grid::new(8.0, 16).unwrap();
        let pot = Potential::harmonic(&g, 1.0, 1.0);
        assert!(matches!(
            eigenstates(&pot, &g, 17),
            Err(OperatorError::TooManyStates { .. })
        ));
    }

    #[test]
    fn double_well_level_structure() {
        let g = grid();
        let pot = Potential::double_well(&g, 1.0, 1.0, 8.0, 0.2);
        let basis = eigenstates(&pot, &g, 10).unwrap();
        for w in basis.energies.windows(2) {
            assert!(w[0] < w[1], "energies must be strictly ascending");
        }
        // Below-barrier levels pair up: the tunneling splitting inside a
        // pair is smaller than the gap to the next pair.
        let e = &basis.energies;
        for p in 0..2 {
            let split = e[2 * p + 1] - e[2 * p];
            let gap = e[2 * p + 2] - e[2 * p + 1];
            assert!(split < gap, "pair {p}: split={split} gap={gap}");
        }
    }

    #[test]
    fn channel_constants() {
        let ch = LindbladChannel::new(1.0, 1.0, 0.2, 8).unwrap();
        assert_abs_diff_eq!(ch.prefactor, 0.0125f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(ch.scalar(), -0.0125, epsilon = 1e-14);
        assert!(LindbladChannel::new(1.0, 1.0, -0.2, 8).is_err());
        assert!(LindbladChannel::new(1.0, 1.0, 0.2, 0).is_err());
    }

    #[test]
    fn channel_annihilates_ground_state() {
        let g = grid();
        let ch = LindbladChannel::new(1.0, 1.0, 0.2, 8).unwrap();
        let psi0 = ho_state(&g, 0);
        let l0 = ch.apply(&g, &psi0);
        assert!(l0.norm_sq(&g).sqrt() < 1e-8);
    }

    #[test]
    fn channel_lowering_matrix_element() {
        let g = grid();
        let ch = LindbladChannel::new(1.0, 1.0, 0.2, 8).unwrap();
        let psi0 = ho_state(&g, 0);
        let psi1 = ho_state(&g, 1);
        // l = c sqrt(2 hbar / m omega_l) a for the matched oscillator, so
        // |<0|l|1>|^2 = 2 c^2 = gamma / N.
        let me = inner(&g, &psi0, &ch.apply(&g, &psi1));
        assert_abs_diff_eq!(me.norm_sqr(), 0.025, epsilon = 1e-10);
    }

    #[test]
    fn r_s_hermitian_and_ldag_l_decomposition() {
        let g = grid();
        let ch = LindbladChannel::new(1.0, 1.0, 0.2, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let a = random_orbital(&g, &mut rng);
            let b = random_orbital(&g, &mut rng);
            let lhs = inner(&g, &a, &ch.apply_r(&g, &b));
            let rhs = inner(&g, &b, &ch.apply_r(&g, &a)).conj();
            assert!((lhs - rhs).norm() < 1e-10 * (1.0 + lhs.norm()));
            let lhs = inner(&g, &a, &ch.apply_s(&g, &b));
            let rhs = inner(&g, &b, &ch.apply_s(&g, &a)).conj();
            assert!((lhs - rhs).norm() < 1e-10 * (1.0 + lhs.norm()));

            // Operator algebra on the grid: l^dag l = R^2 + S^2 + i[R, S].
            let ldl = ch.apply_adjoint(&g, &ch.apply(&g, &a));
            let rr = ch.apply_r(&g, &ch.apply_r(&g, &a));
            let ss = ch.apply_s(&g, &ch.apply_s(&g, &a));
            let rs = ch.apply_r(&g, &ch.apply_s(&g, &a));
            let sr = ch.apply_s(&g, &ch.apply_r(&g, &a));
            let rhs = Orbital {
                amp: rr.amp + ss.amp + (rs.amp - sr.amp) * Complex64::new(0.0, 1.0),
            };
            let diff = Orbital { amp: &ldl.amp - &rhs.amp };
            let rel = diff.norm_sq(&g).sqrt() / ldl.norm_sq(&g).sqrt().max(1e-300);
            assert!(rel < 1e-10, "decomposition relative error {rel}");
        }
        // With the scalar C the identity holds on band-limited states, where
        // the grid commutator reaches its continuum value.
        for _ in 0..5 {
            let a = random_smooth_orbital(&g, &mut rng);
            let ldl = ch.apply_adjoint(&g, &ch.apply(&g, &a));
            let rr = ch.apply_r(&g, &ch.apply_r(&g, &a));
            let ss = ch.apply_s(&g, &ch.apply_s(&g, &a));
            let rhs = Orbital {
                amp: rr.amp + ss.amp + &a.amp * Complex64::new(ch.scalar(), 0.0),
            };
            let diff = Orbital { amp: &ldl.amp - &rhs.amp };
            let rel = diff.norm_sq(&g).sqrt() / ldl.norm_sq(&g).sqrt().max(1e-300);
            assert!(rel < 1e-10, "scalar-C decomposition relative error {rel}");
        }
    }

    #[test]
    fn commutator_scalar_on_smooth_states() {
        let g = grid();
        let ch = LindbladChannel::new(1.0, 1.0, 0.2, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let phi = random_smooth_orbital(&g, &mut rng);
            let rs = ch.apply_r(&g, &ch.apply_s(&g, &phi));
            let sr = ch.apply_s(&g, &ch.apply_r(&g, &phi));
            // i [R, S] phi = -gamma/(2N) phi
            let comm = Orbital {
                amp: (rs.amp - sr.amp) * Complex64::new(0.0, 1.0),
            };
            let expect = Orbital {
                amp: &phi.amp * Complex64::new(ch.scalar(), 0.0),
            };
            let diff = Orbital { amp: &comm.amp - &expect.amp };
            let rel = diff.norm_sq(&g).sqrt() / expect.norm_sq(&g).sqrt();
            assert!(rel < 1e-8, "commutator relative error {rel}");
        }
    }
}
