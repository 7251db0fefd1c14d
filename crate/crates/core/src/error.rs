use thiserror::Error;

/// Errors produced by the estimator and its supporting routines.
#[derive(Debug, Error)]
pub enum MqlvError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("degenerate basis domain: samples span [{lo}, {hi}]")]
    DegenerateDomain { lo: f64, hi: f64 },

    #[error("linear solve failed at step {step} ({system}): condition estimate {condition:e}")]
    Solver {
        step: usize,
        system: &'static str,
        condition: f64,
    },

    #[error("strike {strike}: {source}")]
    AtStrike {
        strike: f64,
        #[source]
        source: Box<MqlvError>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}

impl MqlvError {
    /// True for failures that come from the numerics (calibration or solves)
    /// rather than from bad input or the filesystem.
    pub fn is_numerical(&self) -> bool {
        match self {
            MqlvError::Calibration(_) | MqlvError::Solver { .. } | MqlvError::DegenerateDomain { .. } => true,
            MqlvError::AtStrike { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub fn is_io(&self) -> bool {
        match self {
            MqlvError::Io { .. } => true,
            MqlvError::AtStrike { source, .. } => source.is_io(),
            _ => false,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        MqlvError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, MqlvError>;
