//! Open-system quantum dynamics of non-interacting fermions in 1D traps.
//!
//! The Lindblad evolution of the one-body-coupled fermion gas is unraveled
//! into stochastic Slater-determinant trajectories. The bath-induced
//! effective interaction is removed with a Hubbard-Stratonovich
//! decomposition, which adds auxiliary noise fields that are resampled
//! `N_HS` times per physical Wiener increment. After every time step the
//! HS-averaged one-body density matrix is collapsed back to the single
//! determinant of its highest-occupied natural orbitals.
//!
//! Atomic units throughout: `hbar = 1`, masses in `m_e`, lengths in `a_0`,
//! energies in `E_h`, times in `hbar/E_h`.

pub mod cli;
pub mod grid;
pub mod operators;
pub mod propagate;
pub mod reference;
pub mod state;
#[cfg(test)]
pub(crate) mod testutil;
pub mod unravel;

pub use grid::{Grid, Orbital};
pub use operators::{EigenBasis, LindbladChannel, Potential};

