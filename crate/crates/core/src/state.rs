//! Slater-determinant state algebra: orthonormalization, one-body density
//! matrices, averaging over Hubbard-Stratonovich samples, natural-orbital
//! collapse, and observables.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

use crate::grid::{self, Grid, Orbital};
use crate::operators::{fix_phase, EigenBasis, LindbladChannel, Potential};

/// Residual norm below which a vector adds nothing new to the joint span
/// of the HS samples. Occupation error from the dropped directions is of
/// the order of the square of this.
const SPAN_DROP_TOL: f64 = 1e-7;

/// Occupations closer than this are treated as degenerate at the collapse
/// cut.
const OCCUPATION_TIE_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum StateError {
    #[error("basis has {available} states but {needed} are required")]
    InsufficientBasis { available: usize, needed: usize },
    #[error("Gram matrix is near-singular (condition {cond:.3e}); step size too large?")]
    SingularGram { cond: f64 },
    #[error("cannot average an empty list of density matrices")]
    EmptyAverage,
    #[error("density matrix has only {rank} occupations above threshold, need {needed}")]
    RankDeficient { rank: usize, needed: usize },
}

/// Determinant wave function given by `N` orthonormal orbitals.
#[derive(Clone, Debug)]
pub struct SlaterState {
    pub orbitals: Vec<Orbital>,
}

impl SlaterState {
    pub fn n_fermions(&self) -> usize {
        self.orbitals.len()
    }
}

/// Spectral form of a one-body reduced density matrix: natural orbitals
/// with descending occupations.
#[derive(Clone, Debug)]
pub struct OneBodyDM {
    pub natural_orbitals: Vec<Orbital>,
    pub occupations: Vec<f64>,
}

impl OneBodyDM {
    pub fn rank(&self) -> usize {
        self.occupations.len()
    }

    pub fn trace(&self) -> f64 {
        self.occupations.iter().sum()
    }
}

/// One-body expectation values of a determinant state.
#[derive(Clone, Copy, Debug, Default)]
pub struct Observables {
    /// Total displacement `<sum_n x_n>`.
    pub x: f64,
    /// Total momentum `<sum_n p_n>`.
    pub p: f64,
    /// Total energy `<sum_n h(n)>`.
    pub h: f64,
    /// Total kinetic energy.
    pub t_kin: f64,
    /// Expectation of the Lindblad channel, `sum_n <phi_n|l|phi_n>`.
    pub l_expect: Complex64,
}

/// Initial pure state: the lowest `N-1` eigenstates plus the HOMO-LUMO
/// superposition `phi_theta = psi_N cos(theta) + psi_{N+1} sin(theta)`.
pub fn init_theta_state(
    basis: &EigenBasis,
    n_fermions: usize,
    theta: f64,
) -> Result<SlaterState, StateError> {
    if basis.len() < n_fermions + 1 {
        return Err(StateError::InsufficientBasis {
            available: basis.len(),
            needed: n_fermions + 1,
        });
    }
    let mut orbitals: Vec<Orbital> = basis.orbitals[..n_fermions - 1].to_vec();
    let homo = &basis.orbitals[n_fermions - 1];
    let lumo = &basis.orbitals[n_fermions];
    orbitals.push(Orbital {
        amp: &homo.amp * Complex64::new(theta.cos(), 0.0)
            + &lumo.amp * Complex64::new(theta.sin(), 0.0),
    });
    Ok(SlaterState { orbitals })
}

fn gram(grid: &Grid, orbitals: &[Orbital]) -> DMatrix<Complex64> {
    let n = orbitals.len();
    let mut s = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = grid::inner(grid, &orbitals[i], &orbitals[j]);
            s[(i, j)] = v;
            s[(j, i)] = v.conj();
        }
    }
    s
}

/// Symmetric (Loewdin) orthonormalization. The determinant state is
/// invariant under the implied linear recombination of orbitals.
pub fn orthonormalize(grid: &Grid, state: &SlaterState) -> Result<SlaterState, StateError> {
    let n = state.orbitals.len();
    let s = gram(grid, &state.orbitals);
    let eig = SymmetricEigen::new(s);
    let lam_max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    let lam_min = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
    if lam_min <= 0.0 || lam_max / lam_min > 1e12 {
        return Err(StateError::SingularGram {
            cond: if lam_min > 0.0 { lam_max / lam_min } else { f64::INFINITY },
        });
    }
    // X = U diag(lambda^{-1/2}) U^H
    let u = &eig.eigenvectors;
    let mut x = DMatrix::<Complex64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = Complex64::default();
            for m in 0..n {
                acc += u[(i, m)] * eig.eigenvalues[m].powf(-0.5) * u[(j, m)].conj();
            }
            x[(i, j)] = acc;
        }
    }
    let mut orbitals = Vec::with_capacity(n);
    for i in 0..n {
        let mut amp = DVector::<Complex64>::zeros(grid.n_points());
        for j in 0..n {
            amp += &state.orbitals[j].amp * x[(j, i)];
        }
        orbitals.push(Orbital { amp });
    }
    Ok(SlaterState { orbitals })
}

/// One-body density matrix of an orthonormalized determinant: the rank-`N`
/// projector onto its orbitals.
pub fn one_body_dm(state: &SlaterState) -> OneBodyDM {
    OneBodyDM {
        natural_orbitals: state.orbitals.clone(),
        occupations: vec![1.0; state.orbitals.len()],
    }
}

/// Equal-weight average of one-body density matrices, diagonalized in the
/// joint span of all constituent natural orbitals.
///
/// The span is orthonormalized by pivoted (twice-iterated) Gram-Schmidt
/// with a drop tolerance, so the cost is linear in the grid size and the
/// reduced eigenproblem has the dimension of the effective span rather
/// than `N * N_HS`.
pub fn average_dms(grid: &Grid, dms: &[OneBodyDM]) -> Result<OneBodyDM, StateError> {
    if dms.is_empty() {
        return Err(StateError::EmptyAverage);
    }
    let k_inv = 1.0 / dms.len() as f64;
    let mut basis: Vec<&Orbital> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for dm in dms {
        for (orb, &occ) in dm.natural_orbitals.iter().zip(&dm.occupations) {
            basis.push(orb);
            weights.push(occ * k_inv);
        }
    }
    let coeff = DMatrix::from_diagonal(&DVector::from_iterator(
        weights.len(),
        weights.iter().map(|&w| Complex64::new(w, 0.0)),
    ));
    span_eigen(grid, &basis, &coeff)
}

/// Diagonalizes the low-rank Hermitian kernel `sum_ij B_i coeff_ij B_j^*`
/// over the span of the (generally non-orthogonal) vectors `B`.
fn span_eigen(
    grid: &Grid,
    basis: &[&Orbital],
    coeff: &DMatrix<Complex64>,
) -> Result<OneBodyDM, StateError> {
    let m = basis.len();
    assert_eq!(coeff.nrows(), m, "coefficient/basis mismatch");

    // Pivoted Gram-Schmidt over the joint span.
    let mut residuals: Vec<DVector<Complex64>> = basis.iter().map(|o| o.amp.clone()).collect();
    let mut remaining: Vec<usize> = (0..m).collect();
    let mut q: Vec<DVector<Complex64>> = Vec::new();
    let dx = grid.dx();
    let norm_of = |v: &DVector<Complex64>| (v.iter().map(|a| a.norm_sqr()).sum::<f64>() * dx).sqrt();
    let dot = |a: &DVector<Complex64>, b: &DVector<Complex64>| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.conj() * y)
            .sum::<Complex64>()
            * dx
    };
    while !remaining.is_empty() {
        let (pos, &idx) = remaining
            .iter()
            .enumerate()
            .max_by(|a, b| norm_of(&residuals[*a.1]).total_cmp(&norm_of(&residuals[*b.1])))
            .unwrap();
        let norm = norm_of(&residuals[idx]);
        if norm < SPAN_DROP_TOL {
            break;
        }
        let mut v = residuals[idx].clone();
        // Re-orthogonalize once against the current basis for stability.
        for qv in &q {
            let c = dot(qv, &v);
            v -= qv * c;
        }
        let norm = norm_of(&v);
        if norm < SPAN_DROP_TOL {
            remaining.swap_remove(pos);
            continue;
        }
        v /= Complex64::new(norm, 0.0);
        remaining.swap_remove(pos);
        for &j in &remaining {
            let c = dot(&v, &residuals[j]);
            residuals[j] -= &v * c;
        }
        q.push(v);
    }
    let d = q.len();

    // Reduced matrix T = P diag(w) P^H with P = Q^H B.
    let mut p = DMatrix::<Complex64>::zeros(d, m);
    for (di, qv) in q.iter().enumerate() {
        for (mi, b) in basis.iter().enumerate() {
            p[(di, mi)] = dot(qv, &b.amp);
        }
    }
    let mut t = &p * coeff * p.adjoint();
    // Enforce Hermiticity against round-off.
    let th = t.adjoint();
    t = (t + th) * Complex64::new(0.5, 0.0);

    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut natural_orbitals = Vec::with_capacity(d);
    let mut occupations = Vec::with_capacity(d);
    for &idx in &order {
        let mut amp = DVector::<Complex64>::zeros(grid.n_points());
        for (di, qv) in q.iter().enumerate() {
            amp += qv * eig.eigenvectors[(di, idx)];
        }
        let mut orb = Orbital { amp };
        fix_phase(grid, &mut orb);
        natural_orbitals.push(orb);
        occupations.push(eig.eigenvalues[idx]);
    }
    Ok(OneBodyDM {
        natural_orbitals,
        occupations,
    })
}

/// One-body density matrix of the normalized equal-amplitude superposition
/// `sum_k Phi^(k)` of (generally non-orthogonal, unnormalized) determinants.
///
/// Cross terms between determinants follow the generalized Wick formula: for
/// the orbital sets `B_k = {phi^(k)_n}` with cross-Gram `M_mn =
/// <phi^(k')_m|phi^(k)_n>`, the transition kernel is `det(M) B_k M^{-1}
/// B_k'^dag`, and `<Phi^(k')|Phi^(k)> = det(M)`. Amplitude-level averaging
/// is what restores the two-body `exp(-L^dag L dt / 2)` factor of the
/// unraveling from the auxiliary Hubbard-Stratonovich samples; averaging
/// the per-determinant density matrices instead would turn those fields
/// into spurious dephasing.
pub fn coherent_superposition_dm(
    grid: &Grid,
    sets: &[SlaterState],
) -> Result<OneBodyDM, StateError> {
    if sets.is_empty() {
        return Err(StateError::EmptyAverage);
    }
    let k = sets.len();
    let n = sets[0].n_fermions();
    assert!(
        sets.iter().all(|s| s.n_fermions() == n),
        "mismatched particle numbers"
    );
    let m = k * n;
    let basis: Vec<&Orbital> = sets.iter().flat_map(|s| s.orbitals.iter()).collect();

    // Full cross-Gram of all K*N orbitals.
    let ng = grid.n_points();
    let mut b = DMatrix::<Complex64>::zeros(ng, m);
    for (j, orb) in basis.iter().enumerate() {
        b.column_mut(j).copy_from(&orb.amp);
    }
    let gram = (b.adjoint() * &b) * Complex64::new(grid.dx(), 0.0);

    // coeff[(k a + n), (k' b + m)] = det(M^{k'k}) (M^{k'k})^{-1}_{nm} with
    // M^{k'k} the (k', k) block of the cross-Gram; Z = sum of the pair
    // overlaps det(M^{k'k}) normalizes the superposition.
    let mut coeff = DMatrix::<Complex64>::zeros(m, m);
    let mut z = Complex64::default();
    for ka in 0..k {
        for kb in ka..k {
            let block = gram.view((kb * n, ka * n), (n, n)).into_owned();
            let lu = block.lu();
            let det = lu.determinant();
            let inv = lu.try_inverse().ok_or(StateError::SingularGram { cond: f64::INFINITY })?;
            let w = inv * det;
            coeff.view_mut((ka * n, kb * n), (n, n)).copy_from(&w);
            if kb != ka {
                coeff
                    .view_mut((kb * n, ka * n), (n, n))
                    .copy_from(&w.adjoint());
                z += det + det.conj();
            } else {
                z += det;
            }
        }
    }
    if !(z.re > 0.0 && z.re.is_finite()) {
        return Err(StateError::SingularGram { cond: f64::INFINITY });
    }
    coeff /= Complex64::new(z.re, 0.0);
    span_eigen(grid, &basis, &coeff)
}

/// Determinant of the `N` highest-occupation natural orbitals.
///
/// Degenerate occupations at the cut are resolved by preferring the
/// candidate with the larger overlap with the previously occupied
/// subspace, then by index.
pub fn collapse_to_slater(
    grid: &Grid,
    dm: &OneBodyDM,
    n_fermions: usize,
    previous: Option<&SlaterState>,
) -> Result<SlaterState, StateError> {
    let rank = dm
        .occupations
        .iter()
        .filter(|&&w| w > OCCUPATION_TIE_TOL)
        .count();
    if rank < n_fermions {
        return Err(StateError::RankDeficient {
            rank,
            needed: n_fermions,
        });
    }
    let cut_occ = dm.occupations[n_fermions - 1];
    let tied: Vec<usize> = (0..dm.occupations.len())
        .filter(|&i| (dm.occupations[i] - cut_occ).abs() < OCCUPATION_TIE_TOL)
        .collect();
    let mut selected: Vec<usize> = (0..n_fermions)
        .filter(|i| !tied.contains(i))
        .collect();
    let slots = n_fermions - selected.len();
    let mut ranked = tied;
    if slots < ranked.len() {
        if let Some(prev) = previous {
            // Projection of each candidate onto the previous occupied subspace.
            let mut scored: Vec<(usize, f64)> = ranked
                .iter()
                .map(|&i| {
                    let s: f64 = prev
                        .orbitals
                        .iter()
                        .map(|p| grid::inner(grid, p, &dm.natural_orbitals[i]).norm_sqr())
                        .sum();
                    (i, s)
                })
                .collect();
            scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            ranked = scored.into_iter().map(|(i, _)| i).collect();
        }
    }
    selected.extend(ranked.into_iter().take(slots));
    selected.sort_unstable();
    Ok(SlaterState {
        orbitals: selected
            .into_iter()
            .map(|i| dm.natural_orbitals[i].clone())
            .collect(),
    })
}

/// One-body observables of an orthonormalized determinant.
pub fn observables(
    grid: &Grid,
    state: &SlaterState,
    pot: &Potential,
    channel: Option<&LindbladChannel>,
) -> Observables {
    let mut obs = Observables::default();
    for phi in &state.orbitals {
        obs.x += grid::inner(grid, phi, &grid::apply_position(grid, phi)).re;
        obs.p += grid::inner(grid, phi, &grid::apply_momentum(grid, phi)).re;
        obs.h += grid::inner(grid, phi, &pot.apply_h(grid, phi)).re;
        obs.t_kin += grid::inner(grid, phi, &grid::apply_kinetic(grid, pot.mass, phi)).re;
    }
    if let Some(ch) = channel {
        obs.l_expect = ch.expectation(grid, &state.orbitals);
    }
    obs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{eigenstates, Potential};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (Grid, Potential, EigenBasis) {
        let g = Grid::new(16.0, 128).unwrap();
        let pot = Potential::harmonic(&g, 1.0, 1.0);
        let basis = eigenstates(&pot, &g, 10).unwrap();
        (g, pot, basis)
    }

    #[test]
    fn theta_state_energies_and_moments() {
        let (g, pot, basis) = setup();
        let s0 = init_theta_state(&basis, 8, 0.0).unwrap();
        let o0 = observables(&g, &s0, &pot, None);
        assert_abs_diff_eq!(o0.h, 32.0, epsilon = 1e-6);
        assert_abs_diff_eq!(o0.t_kin, 16.0, epsilon = 1e-6);

        let s_pi2 = init_theta_state(&basis, 8, std::f64::consts::FRAC_PI_2).unwrap();
        let o2 = observables(&g, &s_pi2, &pot, None);
        assert_abs_diff_eq!(o2.h, 33.0, epsilon = 1e-6);

        let s_pi4 = init_theta_state(&basis, 8, std::f64::consts::FRAC_PI_4).unwrap();
        let o4 = observables(&g, &s_pi4, &pot, None);
        assert_abs_diff_eq!(o4.x, 2.0, epsilon = 1e-6);
        assert_abs_diff_eq!(o4.p, 0.0, epsilon = 1e-10);

        assert!(init_theta_state(&basis, 10, 0.0).is_err());
    }

    #[test]
    fn theta_state_is_orthonormal() {
        let (g, _, basis) = setup();
        let s = init_theta_state(&basis, 8, 0.3).unwrap();
        let sm = gram(&g, &s.orbitals);
        for i in 0..8 {
            for j in 0..8 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((sm[(i, j)] - Complex64::new(expect, 0.0)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn loewdin_idempotent_and_scale_invariant() {
        let (g, _, basis) = setup();
        let s = init_theta_state(&basis, 4, 0.7).unwrap();
        let o = orthonormalize(&g, &s).unwrap();
        for (a, b) in o.orbitals.iter().zip(&s.orbitals) {
            let d = Orbital { amp: &a.amp - &b.amp };
            assert!(d.norm_sq(&g).sqrt() < 1e-10);
        }
        let scaled = SlaterState {
            orbitals: s
                .orbitals
                .iter()
                .map(|o| Orbital {
                    amp: &o.amp * Complex64::new(2.0, 0.0),
                })
                .collect(),
        };
        let o2 = orthonormalize(&g, &scaled).unwrap();
        for (a, b) in o2.orbitals.iter().zip(&o.orbitals) {
            let d = Orbital { amp: &a.amp - &b.amp };
            assert!(d.norm_sq(&g).sqrt() < 1e-10);
        }
    }

    #[test]
    fn loewdin_rejects_singular_gram() {
        let (g, _, basis) = setup();
        let s = SlaterState {
            orbitals: vec![basis.orbitals[0].clone(), basis.orbitals[0].clone()],
        };
        assert!(matches!(
            orthonormalize(&g, &s),
            Err(StateError::SingularGram { .. })
        ));
    }

    #[test]
    fn projector_dm_and_trace() {
        let (_, _, basis) = setup();
        let s = init_theta_state(&basis, 8, 0.0).unwrap();
        let dm = one_body_dm(&s);
        assert!(dm.occupations.iter().all(|&w| w == 1.0));
        assert_abs_diff_eq!(dm.trace(), 8.0, epsilon = 1e-12);
        let s1 = SlaterState {
            orbitals: vec![basis.orbitals[0].clone()],
        };
        assert_eq!(one_body_dm(&s1).rank(), 1);
    }

    #[test]
    fn average_single_and_identical() {
        let (g, _, basis) = setup();
        let s = init_theta_state(&basis, 4, 0.0).unwrap();
        let dm = one_body_dm(&s);
        let avg = average_dms(&g, &[dm.clone()]).unwrap();
        assert_abs_diff_eq!(avg.trace(), 4.0, epsilon = 1e-8);
        for w in avg.occupations.iter().take(4) {
            assert_abs_diff_eq!(*w, 1.0, epsilon = 1e-10);
        }
        let avg3 = average_dms(&g, &[dm.clone(), dm.clone(), dm]).unwrap();
        for w in avg3.occupations.iter().take(4) {
            assert_abs_diff_eq!(*w, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn average_of_orthogonal_projectors() {
        let (g, _, basis) = setup();
        let da = OneBodyDM {
            natural_orbitals: vec![basis.orbitals[0].clone()],
            occupations: vec![1.0],
        };
        let db = OneBodyDM {
            natural_orbitals: vec![basis.orbitals[1].clone()],
            occupations: vec![1.0],
        };
        let avg = average_dms(&g, &[da, db]).unwrap();
        assert_eq!(avg.rank(), 2);
        assert_abs_diff_eq!(avg.occupations[0], 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(avg.occupations[1], 0.5, epsilon = 1e-10);
        assert!(average_dms(&g, &[]).is_err());
    }

    #[test]
    fn collapse_round_trip_and_selection() {
        let (g, _, basis) = setup();
        let s = init_theta_state(&basis, 4, 0.4).unwrap();
        let dm = one_body_dm(&s);
        let back = collapse_to_slater(&g, &dm, 4, None).unwrap();
        let dm2 = one_body_dm(&back);
        // Same subspace: projector of `back` applied to original orbitals
        // reproduces them.
        for phi in &s.orbitals {
            let mut proj = DVector::<Complex64>::zeros(g.n_points());
            for o in &dm2.natural_orbitals {
                proj += &o.amp * grid::inner(&g, o, phi);
            }
            let d = Orbital { amp: proj - phi.amp.clone() };
            assert!(d.norm_sq(&g).sqrt() < 1e-10);
        }

        // Descending selection picks the 0.6 orbital over 0.4.
        let dm = OneBodyDM {
            natural_orbitals: basis.orbitals[..4].to_vec(),
            occupations: vec![1.0, 1.0, 0.6, 0.4],
        };
        let picked = collapse_to_slater(&g, &dm, 3, None).unwrap();
        let ov = grid::inner(&g, &picked.orbitals[2], &basis.orbitals[2]).norm();
        assert_abs_diff_eq!(ov, 1.0, epsilon = 1e-12);

        // Rank deficiency.
        let dm = OneBodyDM {
            natural_orbitals: basis.orbitals[..2].to_vec(),
            occupations: vec![1.0, 1e-14],
        };
        assert!(matches!(
            collapse_to_slater(&g, &dm, 2, None),
            Err(StateError::RankDeficient { .. })
        ));
    }

    #[test]
    fn collapse_tie_break_prefers_previous_subspace() {
        let (g, _, basis) = setup();
        let dm = OneBodyDM {
            natural_orbitals: vec![
                basis.orbitals[0].clone(),
                basis.orbitals[1].clone(),
                basis.orbitals[2].clone(),
            ],
            occupations: vec![1.0, 0.5, 0.5],
        };
        let prev = SlaterState {
            orbitals: vec![basis.orbitals[0].clone(), basis.orbitals[2].clone()],
        };
        let picked = collapse_to_slater(&g, &dm, 2, Some(&prev)).unwrap();
        let ov = grid::inner(&g, &picked.orbitals[1], &basis.orbitals[2]).norm();
        assert_abs_diff_eq!(ov, 1.0, epsilon = 1e-12);
        // Without history the lower index wins.
        let picked = collapse_to_slater(&g, &dm, 2, None).unwrap();
        let ov = grid::inner(&g, &picked.orbitals[1], &basis.orbitals[1]).norm();
        assert_abs_diff_eq!(ov, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn l_expectation_consistency() {
        let (g, pot, basis) = setup();
        let ch = LindbladChannel::new(1.0, 1.0, 0.2, 8).unwrap();
        for theta in [0.0, std::f64::consts::FRAC_PI_4, 1.1] {
            let s = init_theta_state(&basis, 8, theta).unwrap();
            let o = observables(&g, &s, &pot, Some(&ch));
            let expect = Complex64::new(o.x, o.p / (ch.mass * ch.omega_l)) * ch.prefactor;
            assert!((o.l_expect - expect).norm() < 1e-10, "theta={theta}");
        }
        let s0 = init_theta_state(&basis, 8, 0.0).unwrap();
        let o = observables(&g, &s0, &pot, Some(&ch));
        assert!(o.l_expect.norm() < 1e-8);
    }

    #[test]
    fn observables_invariant_under_orbital_recombination() {
        let (g, pot, basis) = setup();
        let ch = LindbladChannel::new(1.0, 1.0, 0.2, 4).unwrap();
        let s = init_theta_state(&basis, 4, 0.9).unwrap();
        let before = observables(&g, &s, &pot, Some(&ch));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // Random invertible recombination followed by Loewdin.
        let mut mixed = Vec::new();
        for _ in 0..4 {
            let mut amp = DVector::<Complex64>::zeros(g.n_points());
            for o in &s.orbitals {
                amp += &o.amp
                    * Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
            mixed.push(Orbital { amp });
        }
        let remixed = orthonormalize(&g, &SlaterState { orbitals: mixed }).unwrap();
        let after = observables(&g, &remixed, &pot, Some(&ch));
        assert_abs_diff_eq!(before.x, after.x, epsilon = 1e-9);
        assert_abs_diff_eq!(before.p, after.p, epsilon = 1e-9);
        assert_abs_diff_eq!(before.h, after.h, epsilon = 1e-8);
        assert_abs_diff_eq!(before.t_kin, after.t_kin, epsilon = 1e-8);
        assert!((before.l_expect - after.l_expect).norm() < 1e-9);
    }

    #[test]
    fn average_trace_is_preserved_for_random_mixtures() {
        let (g, _, basis) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let mut dms = Vec::new();
            for _ in 0..3 {
                // Random rotation within a 4-state subspace.
                let mut orbs = Vec::new();
                for _ in 0..3 {
                    let mut amp = DVector::<Complex64>::zeros(g.n_points());
                    for b in basis.orbitals.iter().take(4) {
                        amp += &b.amp
                            * Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    }
                    orbs.push(Orbital { amp });
                }
                let s = orthonormalize(&g, &SlaterState { orbitals: orbs }).unwrap();
                dms.push(one_body_dm(&s));
            }
            let avg = average_dms(&g, &dms).unwrap();
            assert!((avg.trace() - 3.0).abs() < 1e-8);
            for &w in &avg.occupations {
                assert!(w > -1e-10 && w < 1.0 + 1e-10);
            }
        }
    }
}
