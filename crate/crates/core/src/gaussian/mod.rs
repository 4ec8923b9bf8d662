//! Fermionic Gaussian states in pairing form, quadratic Hamiltonians and the
//! Gaussian operations used to contract Gaussian PEPS.
//!
//! A pairing state on modes `a_1 .. a_M` is
//! `|T> = exp(1/2 sum_pq T_pq a_p^+ a_q^+) |vac>` with `T` antisymmetric.

mod covariance;
mod hamiltonian;
mod projection;
mod state;

pub use covariance::{Correlations, CovarianceMatrix};
pub use hamiltonian::{BdgSpectrum, QuadraticHamiltonian, DEFAULT_GAP_TOL};
pub use projection::{project_bonds, Projection};
pub use state::{bcs_overlap, fidelity, log_norm, transform_modes, PairingState};
