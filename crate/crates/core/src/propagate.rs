//! Short-time propagators for the non-unitary step generator
//! `A = -(i/hbar)(h dt - i(dh_R + dh_C + dh_S))`.
//!
//! Three routes with one contract: a Newton-form interpolating polynomial
//! of the exponential at Leja points (the production method), a symmetric
//! split-operator factorization (cheap, second order in the deterministic
//! part), and a dense matrix exponential used as the oracle on small
//! grids.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::grid::{Grid, Orbital};
use crate::operators::{LindbladChannel, Potential};
use crate::unravel::NoiseIncrement;

#[derive(Debug, Error)]
pub enum PropagateError {
    #[error("Newton series did not converge within degree {max_degree}; dt times the spectral radius is too large")]
    NonConvergence { max_degree: usize },
    #[error("dense propagator limited to 256 grid points, got {0}")]
    GridTooLarge(usize),
}

/// One-step evolution generator, split into a position-diagonal part, a
/// momentum-diagonal part and a scalar. Valid for channels whose `R` is
/// position-diagonal and `S` momentum-diagonal with scalar commutator.
#[derive(Clone, Debug)]
pub struct StepGenerator {
    pub dt: f64,
    pub position_diag: DVector<Complex64>,
    pub momentum_diag: DVector<Complex64>,
    pub scalar: Complex64,
}

/// Assemble the single-particle generator exponent
/// `A = -i h dt + [<L>* dt + dw + i du] R + i [<L>* dt + dw + dv] S - C dt`
/// (atomic units). With no channel this reduces to the unitary `-i h dt`.
pub fn build_generator(
    grid: &Grid,
    pot: &Potential,
    channel: Option<&LindbladChannel>,
    l_expect: Complex64,
    dt: f64,
    noise: NoiseIncrement,
) -> StepGenerator {
    let ng = grid.n_points();
    let i = Complex64::new(0.0, 1.0);
    let mut position_diag = DVector::from_iterator(
        ng,
        pot.values().iter().map(|&v| -i * v * dt),
    );
    let mut momentum_diag = DVector::from_iterator(
        ng,
        grid.k().iter().map(|&k| -i * (k * k / (2.0 * pot.mass)) * dt),
    );
    let mut scalar = Complex64::default();
    if let Some(ch) = channel {
        let coef_r = l_expect.conj() * dt + noise.dw + i * noise.du;
        let coef_s = l_expect.conj() * dt + noise.dw + noise.dv;
        for (a, r) in position_diag.iter_mut().zip(ch.position_coeffs(grid)) {
            *a += coef_r * r;
        }
        for (a, s) in momentum_diag.iter_mut().zip(ch.momentum_coeffs(grid)) {
            *a += i * coef_s * s;
        }
        scalar = Complex64::new(-ch.scalar() * dt, 0.0);
    }
    StepGenerator {
        dt,
        position_diag,
        momentum_diag,
        scalar,
    }
}

impl StepGenerator {
    /// `A phi`.
    pub fn apply(&self, grid: &Grid, phi: &Orbital) -> Orbital {
        let mut out = DVector::<Complex64>::zeros(phi.len());
        for ((o, a), p) in out.iter_mut().zip(phi.amp.iter()).zip(self.position_diag.iter()) {
            *o = a * p + a * self.scalar;
        }
        let mut buf: Vec<Complex64> = phi.amp.iter().copied().collect();
        grid.forward(&mut buf);
        for (c, m) in buf.iter_mut().zip(self.momentum_diag.iter()) {
            *c *= m;
        }
        grid.inverse(&mut buf);
        for (o, c) in out.iter_mut().zip(buf) {
            *o += c;
        }
        Orbital { amp: out }
    }

    fn scaled(&self, factor: f64) -> StepGenerator {
        StepGenerator {
            dt: self.dt * factor,
            position_diag: &self.position_diag * Complex64::new(factor, 0.0),
            momentum_diag: &self.momentum_diag * Complex64::new(factor, 0.0),
            scalar: self.scalar * factor,
        }
    }

    /// Bounding rectangle of the numerical range: the sum of the value
    /// ranges of the two diagonal parts plus the scalar.
    fn bounding_box(&self) -> [f64; 4] {
        let mut re = [f64::MAX, f64::MIN];
        let mut im = [f64::MAX, f64::MIN];
        let fold = |vals: &DVector<Complex64>, re: &mut [f64; 2], im: &mut [f64; 2]| {
            let mut r = [f64::MAX, f64::MIN];
            let mut i = [f64::MAX, f64::MIN];
            for v in vals.iter() {
                r[0] = r[0].min(v.re);
                r[1] = r[1].max(v.re);
                i[0] = i[0].min(v.im);
                i[1] = i[1].max(v.im);
            }
            re[0] = r[0];
            re[1] = r[1];
            im[0] = i[0];
            im[1] = i[1];
        };
        let mut re_p = [0.0; 2];
        let mut im_p = [0.0; 2];
        fold(&self.position_diag, &mut re, &mut im);
        re_p.copy_from_slice(&re);
        im_p.copy_from_slice(&im);
        let mut re_m = [f64::MAX, f64::MIN];
        let mut im_m = [f64::MAX, f64::MIN];
        fold(&self.momentum_diag, &mut re_m, &mut im_m);
        [
            re_p[0] + re_m[0] + self.scalar.re,
            re_p[1] + re_m[1] + self.scalar.re,
            im_p[0] + im_m[0] + self.scalar.im,
            im_p[1] + im_m[1] + self.scalar.im,
        ]
    }
}

/// Precomputed diagonal factors for the symmetric split
/// `exp(A) ~ exp(s) exp(P/2) exp(M) exp(P/2)`.
pub struct SplitFactors {
    half_position: Vec<Complex64>,
    full_momentum: Vec<Complex64>,
}

impl SplitFactors {
    pub fn new(gen: &StepGenerator) -> Self {
        SplitFactors {
            half_position: gen
                .position_diag
                .iter()
                .map(|a| (0.5 * a + 0.5 * gen.scalar).exp())
                .collect(),
            full_momentum: gen.momentum_diag.iter().map(|a| a.exp()).collect(),
        }
    }

    pub fn apply(&self, grid: &Grid, phi: &Orbital) -> Orbital {
        let mut buf: Vec<Complex64> = phi
            .amp
            .iter()
            .zip(&self.half_position)
            .map(|(a, f)| a * f)
            .collect();
        grid.forward(&mut buf);
        for (c, f) in buf.iter_mut().zip(&self.full_momentum) {
            *c *= *f;
        }
        grid.inverse(&mut buf);
        for (c, f) in buf.iter_mut().zip(&self.half_position) {
            *c *= *f;
        }
        Orbital {
            amp: DVector::from_vec(buf),
        }
    }
}

/// Second-order symmetric splitting; exact when the generator is purely
/// position-diagonal or purely momentum-diagonal.
pub fn apply_exp_split(gen: &StepGenerator, grid: &Grid, phi: &Orbital) -> Orbital {
    SplitFactors::new(gen).apply(grid, phi)
}

/// Per-substep interpolation table: Leja points (in scaled coordinates)
/// and divided differences of the exponential.
struct NewtonTable {
    center: Complex64,
    rho: f64,
    points: Vec<Complex64>,
    divided_differences: Vec<Complex64>,
}

const LEJA_CANDIDATES: usize = 512;
/// Imaginary/real half-extent a single substep is allowed to cover.
const SUBSTEP_HALF_EXTENT: f64 = 40.0;
/// Quantization of the bounding box used as the interpolation-table cache
/// key; boxes are rounded outward to this resolution.
const BOX_QUANTUM: f64 = 0.5;

fn build_table(box_q: [f64; 4], n_points: usize) -> NewtonTable {
    let center = Complex64::new(
        0.5 * (box_q[0] + box_q[1]),
        0.5 * (box_q[2] + box_q[3]),
    );
    let half_w = 0.5 * (box_q[1] - box_q[0]);
    let half_h = 0.5 * (box_q[3] - box_q[2]);
    let rho = (0.5 * half_w.max(half_h)).max(1e-2);

    // Candidate points on the rectangle boundary, in scaled coordinates.
    let mut candidates = Vec::with_capacity(LEJA_CANDIDATES);
    let per_side = LEJA_CANDIDATES / 4;
    for s in 0..per_side {
        let t = -1.0 + 2.0 * s as f64 / (per_side - 1) as f64;
        candidates.push(Complex64::new(t * half_w, half_h) / rho);
        candidates.push(Complex64::new(t * half_w, -half_h) / rho);
        candidates.push(Complex64::new(half_w, t * half_h) / rho);
        candidates.push(Complex64::new(-half_w, t * half_h) / rho);
    }

    // Leja ordering: greedily maximize the product of distances.
    let mut log_prod = vec![0.0f64; candidates.len()];
    let mut used = vec![false; candidates.len()];
    let first = candidates
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm_sqr().total_cmp(&b.1.norm_sqr()))
        .map(|(i, _)| i)
        .unwrap();
    let mut points = vec![candidates[first]];
    used[first] = true;
    while points.len() < n_points {
        let last = *points.last().unwrap();
        let mut best = None;
        let mut best_val = f64::MIN;
        for (i, &c) in candidates.iter().enumerate() {
            if used[i] {
                continue;
            }
            log_prod[i] += (c - last).norm().max(1e-300).ln();
            if log_prod[i] > best_val {
                best_val = log_prod[i];
                best = Some(i);
            }
        }
        match best {
            Some(i) => {
                used[i] = true;
                points.push(candidates[i]);
            }
            None => break,
        }
    }

    // Divided differences of exp(center + rho * w) at the scaled points,
    // from the first column of the exponential of the bidiagonal node
    // matrix (Opitz' formula).
    let n = points.len();
    let mut j = DMatrix::<Complex64>::zeros(n, n);
    for (idx, &w) in points.iter().enumerate() {
        j[(idx, idx)] = w * rho;
        if idx + 1 < n {
            j[(idx + 1, idx)] = Complex64::new(1.0, 0.0) * rho;
        }
    }
    let ej = expm(&j);
    let scale = center.exp();
    // Column 0 of exp(rho*J) carries rho^k * dd_k; the recurrence below
    // works in scaled coordinates, which absorbs exactly that factor.
    let divided_differences: Vec<Complex64> = (0..n).map(|k| ej[(k, 0)] * scale).collect();

    NewtonTable {
        center,
        rho,
        points,
        divided_differences,
    }
}

/// Reusable cache of interpolation tables keyed by the quantized bounding
/// box, so repeated steps with nearly identical generators share setup.
pub struct NewtonPropagator {
    pub tol: f64,
    pub max_degree: usize,
    tables: HashMap<[i64; 4], Arc<NewtonTable>>,
}

pub const DEFAULT_NEWTON_TOL: f64 = 1e-9;
pub const DEFAULT_NEWTON_MAX_DEGREE: usize = 128;

impl NewtonPropagator {
    pub fn new(tol: f64, max_degree: usize) -> Self {
        NewtonPropagator {
            tol,
            max_degree,
            tables: HashMap::new(),
        }
    }

    pub fn apply(
        &mut self,
        gen: &StepGenerator,
        grid: &Grid,
        phi: &Orbital,
    ) -> Result<Orbital, PropagateError> {
        let bbox = gen.bounding_box();
        let half = 0.5 * (bbox[1] - bbox[0]).max(bbox[3] - bbox[2]);
        let n_sub = ((half / SUBSTEP_HALF_EXTENT).ceil() as usize).max(1);
        let sub = if n_sub == 1 {
            gen.clone()
        } else {
            gen.scaled(1.0 / n_sub as f64)
        };
        let sub_box = sub.bounding_box();
        let key = [
            (sub_box[0] / BOX_QUANTUM).floor() as i64,
            (sub_box[1] / BOX_QUANTUM).ceil() as i64,
            (sub_box[2] / BOX_QUANTUM).floor() as i64,
            (sub_box[3] / BOX_QUANTUM).ceil() as i64,
        ];
        let max_degree = self.max_degree;
        let table = self
            .tables
            .entry(key)
            .or_insert_with(|| {
                let box_q = [
                    key[0] as f64 * BOX_QUANTUM,
                    key[1] as f64 * BOX_QUANTUM,
                    key[2] as f64 * BOX_QUANTUM,
                    key[3] as f64 * BOX_QUANTUM,
                ];
                let half_w = 0.5 * (box_q[1] - box_q[0]);
                let half_h = 0.5 * (box_q[3] - box_q[2]);
                let a = half_w.max(half_h);
                let n_points =
                    ((a + 10.0 * a.cbrt() + 20.0).ceil() as usize).min(max_degree.max(8));
                Arc::new(build_table(box_q, n_points))
            })
            .clone();

        let tol = self.tol;
        let mut phi = phi.clone();
        for _ in 0..n_sub {
            phi = newton_substep(&sub, grid, &phi, &table, tol, self.max_degree)?;
        }
        Ok(phi)
    }
}

fn newton_substep(
    gen: &StepGenerator,
    grid: &Grid,
    phi: &Orbital,
    table: &NewtonTable,
    tol: f64,
    max_degree: usize,
) -> Result<Orbital, PropagateError> {
    let phi_norm = phi.amp.norm();
    if phi_norm == 0.0 {
        return Ok(phi.clone());
    }
    let rho_inv = Complex64::new(1.0 / table.rho, 0.0);
    let dd = &table.divided_differences;
    let mut r = phi.clone();
    let mut acc = Orbital {
        amp: &r.amp * dd[0],
    };
    let mut small_streak = 0usize;
    for k in 1..dd.len() {
        // r <- ((A - center)/rho - w_{k-1}) r
        let ar = gen.apply(grid, &r);
        let shift = (table.center * rho_inv + table.points[k - 1]) * Complex64::new(1.0, 0.0);
        r = Orbital {
            amp: ar.amp * rho_inv - &r.amp * shift,
        };
        acc.amp += &r.amp * dd[k];
        let term = dd[k].norm() * r.amp.norm();
        if term < tol * phi_norm {
            small_streak += 1;
            if small_streak >= 2 {
                return Ok(acc);
            }
        } else {
            small_streak = 0;
        }
    }
    Err(PropagateError::NonConvergence { max_degree })
}

/// One-off Newton application without an external cache.
pub fn apply_exp_newton(
    gen: &StepGenerator,
    grid: &Grid,
    phi: &Orbital,
    tol: f64,
) -> Result<Orbital, PropagateError> {
    NewtonPropagator::new(tol, DEFAULT_NEWTON_MAX_DEGREE).apply(gen, grid, phi)
}

/// Scaling-and-squaring Taylor exponential of a small dense matrix.
fn expm(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let n = m.nrows();
    let norm = (0..n)
        .map(|j| (0..n).map(|i| m[(i, j)].norm()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let s = if norm > 1.0 {
        (norm.log2().ceil() as u32).min(60)
    } else {
        0
    };
    let a = m / Complex64::new(2f64.powi(s as i32), 0.0);
    let mut result = DMatrix::<Complex64>::identity(n, n);
    let mut term = DMatrix::<Complex64>::identity(n, n);
    for k in 1..=40 {
        term = (&term * &a) / Complex64::new(k as f64, 0.0);
        result += &term;
        let tnorm = term.iter().map(|v| v.norm()).fold(0.0f64, f64::max);
        if tnorm < 1e-18 {
            break;
        }
    }
    for _ in 0..s {
        result = &result * &result;
    }
    result
}

/// Materialize the generator as a dense matrix (oracle path).
pub fn dense_matrix(gen: &StepGenerator, grid: &Grid) -> Result<DMatrix<Complex64>, PropagateError> {
    let ng = grid.n_points();
    if ng > 256 {
        return Err(PropagateError::GridTooLarge(ng));
    }
    let mut m = DMatrix::<Complex64>::zeros(ng, ng);
    let mut unit = Orbital::zeros(grid);
    for j in 0..ng {
        unit.amp[j] = Complex64::new(1.0, 0.0);
        let col = gen.apply(grid, &unit);
        m.column_mut(j).copy_from(&col.amp);
        unit.amp[j] = Complex64::default();
    }
    Ok(m)
}

/// Reference-accuracy exponential: materialize, exponentiate by scaling
/// and squaring, apply. Limited to small grids.
pub fn apply_exp_dense(
    gen: &StepGenerator,
    grid: &Grid,
    phi: &Orbital,
) -> Result<Orbital, PropagateError> {
    let m = dense_matrix(gen, grid)?;
    let e = expm(&m);
    Ok(Orbital { amp: &e * &phi.amp })
}
