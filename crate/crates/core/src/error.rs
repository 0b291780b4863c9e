use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("raw cube size mismatch: expected {expected} bytes, found {actual}")]
    SizeMismatch { expected: u64, actual: u64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no target found: range map has no energy after clutter removal")]
    NoTarget,

    #[error("degenerate circle fit: {0}")]
    DegenerateFit(String),

    #[error("gradient descent did not converge after {iterations} iterations (objective {objective:e})")]
    NotConverged { iterations: usize, objective: f64 },

    #[error("zero-magnitude I/Q sample at index {0}")]
    ZeroSample(usize),

    #[error("signal too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("rank-deficient system: {0}")]
    RankDeficient(String),

    #[error("ill-conditioned system: {0}")]
    IllConditioned(String),

    #[error("no estimate: {0}")]
    NoEstimate(String),

    #[error("unstable filter design: pole magnitude {0}")]
    UnstableFilter(f64),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("stage {stage} failed in window {window}: {source}")]
    Stage {
        stage: &'static str,
        window: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_stage(self, stage: &'static str, window: usize) -> Self {
        Error::Stage {
            stage,
            window,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
