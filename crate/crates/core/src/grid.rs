//! Uniform periodic 1D grid with spectral application of momentum-space
//! operators.
//!
//! Positions span `[-L/2, L/2 - dx]`; wavenumbers follow the standard DFT
//! ordering with `max |k| = pi/dx`. All quadrature is the uniform `dx`
//! weight (rectangle rule on a periodic mesh).

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("box length must be positive, got {0}")]
    NonPositiveLength(f64),
    #[error("number of grid points must be a power of two >= 8, got {0}")]
    BadPointCount(usize),
}

/// Immutable spatial discretization shared by all orbitals of a simulation.
pub struct Grid {
    box_length: f64,
    n_points: usize,
    dx: f64,
    x: Vec<f64>,
    k: Vec<f64>,
    fft_fwd: Arc<dyn Fft<f64>>,
    fft_inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("box_length", &self.box_length)
            .field("n_points", &self.n_points)
            .field("dx", &self.dx)
            .finish()
    }
}

impl Grid {
    pub fn new(box_length: f64, n_points: usize) -> Result<Self, GridError> {
        if !(box_length > 0.0) {
            return Err(GridError::NonPositiveLength(box_length));
        }
        if n_points < 8 || !n_points.is_power_of_two() {
            return Err(GridError::BadPointCount(n_points));
        }
        let dx = box_length / n_points as f64;
        let x: Vec<f64> = (0..n_points)
            .map(|j| -0.5 * box_length + j as f64 * dx)
            .collect();
        let dk = 2.0 * std::f64::consts::PI / box_length;
        let k: Vec<f64> = (0..n_points)
            .map(|j| {
                let j = j as i64;
                let n = n_points as i64;
                let m = if j < n / 2 { j } else { j - n };
                m as f64 * dk
            })
            .collect();
        let mut planner = FftPlanner::new();
        let fft_fwd = planner.plan_fft_forward(n_points);
        let fft_inv = planner.plan_fft_inverse(n_points);
        Ok(Grid {
            box_length,
            n_points,
            dx,
            x,
            k,
            fft_fwd,
            fft_inv,
        })
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Grid positions, ascending.
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Wavenumbers in DFT ordering (non-negative first, then negative).
    pub fn k(&self) -> &[f64] {
        &self.k
    }

    /// Unnormalized forward DFT, in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.fft_fwd.process(data);
    }

    /// Inverse DFT including the `1/Ng` normalization, in place.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.fft_inv.process(data);
        let scale = 1.0 / self.n_points as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
}

/// Complex single-particle wave function sampled on the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Orbital {
    pub amp: DVector<Complex64>,
}

impl Orbital {
    pub fn zeros(grid: &Grid) -> Self {
        Orbital {
            amp: DVector::zeros(grid.n_points()),
        }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> Complex64) -> Self {
        Orbital {
            amp: DVector::from_iterator(grid.n_points(), grid.x().iter().map(|&x| f(x))),
        }
    }

    pub fn len(&self) -> usize {
        self.amp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amp.is_empty()
    }

    /// `sum_j |phi_j|^2 dx`.
    pub fn norm_sq(&self, grid: &Grid) -> f64 {
        self.amp.iter().map(|a| a.norm_sqr()).sum::<f64>() * grid.dx()
    }

    pub fn normalized(&self, grid: &Grid) -> Orbital {
        let n = self.norm_sq(grid).sqrt();
        Orbital {
            amp: &self.amp / Complex64::new(n, 0.0),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.amp.iter().all(|a| a.re.is_finite() && a.im.is_finite())
    }
}

/// Discretized `<a|b> = sum_j conj(a_j) b_j dx`.
pub fn inner(grid: &Grid, a: &Orbital, b: &Orbital) -> Complex64 {
    assert_eq!(a.len(), grid.n_points(), "orbital/grid mismatch");
    assert_eq!(b.len(), grid.n_points(), "orbital/grid mismatch");
    a.amp
        .iter()
        .zip(b.amp.iter())
        .map(|(x, y)| x.conj() * y)
        .sum::<Complex64>()
        * grid.dx()
}

/// `x_hat phi`: pointwise multiplication by the position.
pub fn apply_position(grid: &Grid, phi: &Orbital) -> Orbital {
    assert_eq!(phi.len(), grid.n_points(), "orbital/grid mismatch");
    let mut amp = phi.amp.clone();
    for (a, &x) in amp.iter_mut().zip(grid.x()) {
        *a *= x;
    }
    Orbital { amp }
}

/// `p_hat phi` via the spectral derivative (`hbar = 1`).
pub fn apply_momentum(grid: &Grid, phi: &Orbital) -> Orbital {
    assert_eq!(phi.len(), grid.n_points(), "orbital/grid mismatch");
    let mut buf: Vec<Complex64> = phi.amp.iter().copied().collect();
    grid.forward(&mut buf);
    for (c, &k) in buf.iter_mut().zip(grid.k()) {
        *c *= k;
    }
    grid.inverse(&mut buf);
    Orbital {
        amp: DVector::from_vec(buf),
    }
}

/// `p_hat^2/(2m) phi` via a single spectral round trip.
pub fn apply_kinetic(grid: &Grid, mass: f64, phi: &Orbital) -> Orbital {
    assert!(mass > 0.0, "mass must be positive");
    assert_eq!(phi.len(), grid.n_points(), "orbital/grid mismatch");
    let mut buf: Vec<Complex64> = phi.amp.iter().copied().collect();
    grid.forward(&mut buf);
    for (c, &k) in buf.iter_mut().zip(grid.k()) {
        *c *= k * k / (2.0 * mass);
    }
    grid.inverse(&mut buf);
    Orbital {
        amp: DVector::from_vec(buf),
    }
}

/// Largest probability density on the outermost `2*margin` points.
///
/// Trap potentials should confine the density away from the periodic
/// edges; callers warn when this exceeds ~1e-8.
pub fn edge_density(grid: &Grid, phi: &Orbital, margin: usize) -> f64 {
    let n = grid.n_points();
    let mut max = 0.0f64;
    for j in 0..margin.min(n) {
        max = max.max(phi.amp[j].norm_sqr());
        max = max.max(phi.amp[n - 1 - j].norm_sqr());
    }
    max
}
