use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("mode sets do not match: {0}")]
    ModeMismatch(String),

    #[error("hamiltonian is gapless: smallest excitation energy {min_energy:.3e} is below {tol:.3e}")]
    Gapless { min_energy: f64, tol: f64 },

    #[error("ground state has no pairing representation relative to the vacuum: {0}")]
    Representation(String),

    #[error("singular contraction: {0}")]
    Contraction(String),

    #[error("fock oracle limited to {max} modes, requested {got}")]
    OracleSize { got: usize, max: usize },

    #[error("symmetry violation: {0}")]
    Symmetry(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("covariance matrix does not map back to a pairing state: {0}")]
    SingularRecovery(String),

    #[error("malformed state file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
