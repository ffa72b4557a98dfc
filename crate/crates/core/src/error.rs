use std::path::PathBuf;

use thiserror::Error;

/// Which unknown of the cascade an error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    U,
    V,
    W,
}

impl std::fmt::Display for Component {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Component::U => "u",
            Component::V => "v",
            Component::W => "w",
        })
    }
}

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, lengths or other structural contracts do not line up.
    #[error("structural error: {0}")]
    Structural(String),

    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("positivity violation in {component} at cell {index}: {value:e}")]
    Positivity {
        component: Component,
        index: usize,
        value: f64,
    },

    #[error("linear solve for {component} did not converge: relative residual {residual:e} after {iterations} iterations")]
    SolverDiverged {
        component: Component,
        iterations: usize,
        residual: f64,
    },

    #[error("blow-up watchdog tripped at t={t}: {reason}")]
    BlowUp { t: f64, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
