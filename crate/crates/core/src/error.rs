use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("career file {0} contains no innings")]
    EmptyCareer(PathBuf),

    #[error("career has no innings")]
    NoInnings,

    #[error("batting average undefined: no dismissals in {innings} innings")]
    UndefinedAverage { innings: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cholesky factorisation failed (ell={ell}, alpha={alpha}, sigma={sigma}) after jitter {jitter:e}")]
    Factorisation { ell: f64, alpha: f64, sigma: f64, jitter: f64 },

    #[error("nested sampling stagnated at iteration {iteration}: {reason}")]
    Stagnation { iteration: usize, reason: String },

    #[error("no posterior samples with positive weight")]
    NoPosteriorMass,

    #[error("no eligible players: {0}")]
    NoEligiblePlayers(String),

    #[error("config {path}: line {line}: {message}")]
    Config { path: PathBuf, line: usize, message: String },

    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn file(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::File { path: path.to_path_buf(), source }
    }

    /// Short machine-readable tag used in the CLI's error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::EmptyCareer(_) | Error::NoInnings => "empty_career",
            Error::UndefinedAverage { .. } => "undefined_average",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Factorisation { .. } => "factorisation",
            Error::Stagnation { .. } => "stagnation",
            Error::NoPosteriorMass => "no_posterior_mass",
            Error::NoEligiblePlayers(_) => "no_eligible_players",
            Error::Config { .. } => "config",
            Error::Io(_) | Error::File { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
