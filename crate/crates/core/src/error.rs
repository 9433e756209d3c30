use std::path::PathBuf;

use thiserror::Error;

use crate::optimizer::Optimized;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid code spec: {0}")]
    InvalidSpec(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// No phase triangle closes for the 3x3 perfect code.
    #[error("rate {rate} exceeds the 3x3 perfect-code limit of {max:.4} b/s/Hz (~8.33)")]
    RateTooHigh { rate: f64, max: f64 },

    #[error("kappa {kappa} outside [1, {blocks}]")]
    KappaOutOfRange { kappa: f64, blocks: usize },

    #[error("power recursion produced a negative shortfall {delta:e} at block {block}, layer {layer}")]
    NegativeShortfall { block: usize, layer: usize, delta: f64 },

    /// The best restart still misses the target by more than 10x. The
    /// result is carried along so callers can still inspect or write it.
    #[error("optimizer did not converge: max shortfall {:.4}% (target {:.4}%)", .0.report.max_shortfall_pct, .0.target_pct)]
    NonConvergence(Box<Optimized>),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit status: 2 for validation, 3 when no code exists, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::RateTooHigh { .. } => 3,
            Error::Parse { .. } | Error::Io { .. } => 4,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
