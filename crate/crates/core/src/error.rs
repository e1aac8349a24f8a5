use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("p-value {0} is outside [0, 1]")]
    InvalidProbability(f64),
    #[error("invalid masking scheme: {0}")]
    InvalidScheme(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("scheme {scheme} can never reach level {alpha}")]
    Infeasible { scheme: String, alpha: f64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input length mismatch: {0}")]
    LengthMismatch(String),
    #[error("empty input")]
    EmptyInput,
    #[error("hypothesis {0} is not in the active candidate set")]
    NotActive(usize),
    #[error("invalid exclusion: {0}")]
    InvalidExclusion(String),
    #[error("session has already stopped")]
    Stopped,
    #[error("adjusted start unavailable: {0}")]
    AdjustedStart(String),
    #[error("journal error: {0}")]
    Journal(String),
    #[error("covariate error: {0}")]
    Covariates(String),
    #[error("tree error: {0}")]
    Tree(String),
    #[error("model fit error: {0}")]
    Fit(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
