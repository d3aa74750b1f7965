use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("lattice mismatch: expected d={expected_d}, n={expected_n}, got d={got_d}, n={got_n}")]
    LatticeMismatch {
        expected_d: usize,
        expected_n: usize,
        got_d: usize,
        got_n: usize,
    },

    #[error("expected a {expected} field, got {got} components")]
    ComponentMismatch { expected: &'static str, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid noise specification: {0}")]
    InvalidNoise(String),

    #[error("quadrature level {level} too coarse, need at least {required} points per axis")]
    InsufficientQuadrature { level: usize, required: usize },

    #[error("field support reaches |j| = {support:.3}, but the identity needs |j| <= {limit:.3}")]
    SupportTooWide { support: f64, limit: f64 },

    #[error("model/scheme mismatch: {0}")]
    ModelMismatch(String),

    #[error("integration blew up at t = {t}: energy {energy:e} (last finite energy {last_finite:e}); reduce dt")]
    BlowUp {
        t: f64,
        energy: f64,
        last_finite: f64,
    },

    #[error("time grid error: {0}")]
    TimeGrid(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("study precondition failed: {0}")]
    Precondition(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
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
