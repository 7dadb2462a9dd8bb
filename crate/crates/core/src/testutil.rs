//! Analytic fixtures shared by unit tests.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;

use crate::grid::{Grid, Orbital};

/// Normalized harmonic-oscillator eigenstate `psi_n` (m = omega = 1),
/// built from the Hermite recurrence. Adequate up to n ~ 20 on the grids
/// used in tests.
pub fn ho_state(grid: &Grid, n: usize) -> Orbital {
    let phi = Orbital::from_fn(grid, |x| {
        Complex64::new(hermite(n, x) * (-0.5 * x * x).exp(), 0.0)
    });
    phi.normalized(grid)
}

fn hermite(n: usize, x: f64) -> f64 {
    let mut h0 = 1.0;
    let mut h1 = 2.0 * x;
    if n == 0 {
        return h0;
    }
    for k in 1..n {
        let h2 = 2.0 * x * h1 - 2.0 * k as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

/// Random complex orbital with entries uniform in the unit square.
pub fn random_orbital(grid: &Grid, rng: &mut impl Rng) -> Orbital {
    Orbital {
        amp: DVector::from_iterator(
            grid.n_points(),
            (0..grid.n_points())
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))),
        ),
    }
}

/// Random band-limited orbital: a Gaussian envelope times a low-order
/// polynomial, so commutator identities are not polluted by Nyquist modes.
pub fn random_smooth_orbital(grid: &Grid, rng: &mut impl Rng) -> Orbital {
    let a: f64 = rng.gen_range(0.5..1.0);
    let c1 = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let c2 = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let c3 = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    Orbital::from_fn(grid, |x| {
        (c1 + c2 * x + c3 * x * x) * (-a * x * x).exp()
    })
}
