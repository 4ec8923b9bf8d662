//! Failure classes and their exit codes.

use std::fmt;

#[derive(Debug)]
pub enum Failure {
    /// A check ran and missed its tolerance.
    Check(String),
    /// The configuration or a command-line argument is invalid.
    Config(String),
    /// A computation failed.
    Numerical(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Check(_) => 1,
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Check(m) => write!(f, "check failed: {m}"),
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Numerical(m) => write!(f, "numerical error: {m}"),
        }
    }
}

impl From<gpeps::Error> for Failure {
    fn from(e: gpeps::Error) -> Self {
        match e {
            gpeps::Error::Geometry(_) | gpeps::Error::Validation(_) | gpeps::Error::Precondition(_) => {
                Failure::Config(e.to_string())
            }
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Numerical(format!("i/o: {e}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_errors_map_to_exit_codes() {
        let pre: Failure = gpeps::Error::Precondition("eps".into()).into();
        assert_eq!(pre.exit_code(), 2);
        let sing: Failure = gpeps::Error::Contraction("pivot".into()).into();
        assert_eq!(sing.exit_code(), 3);
        assert_eq!(Failure::Check("x".into()).exit_code(), 1);
    }
}
