//! Fermionic Gaussian projected entangled pair states for lattice fermions.
//!
//! The crate builds pairing states for free lattice fermions, exact ground
//! states of their quadratic Hamiltonians, the rotation and charge
//! symmetries of the lattice, and Gaussian PEPS whose contraction reproduces
//! those ground states.

pub mod dense;
pub mod error;
pub mod fock;
pub mod gaussian;
pub mod hamiltonians;
pub mod lattice;
pub mod par;
pub mod peps;
pub mod pfaffian;
pub mod random;
pub mod statefile;
pub mod symmetry;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
