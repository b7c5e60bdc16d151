use thiserror::Error;

use crate::config::ConfigError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] pdbsde_core::Error),
    #[error("{0}")]
    Usage(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 1 for anything the user can fix in the input, 2 when the numerics
    /// broke an invariant.
    pub fn exit_code(&self) -> i32 {
        use pdbsde_core::Error as E;
        match self {
            CliError::Core(E::Invariant(_) | E::NoConvergence { .. } | E::OutsideDomain { .. }) => {
                2
            }
            _ => 1,
        }
    }
}
