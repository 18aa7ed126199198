use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the kernel test library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: {left} vs {right}")]
    DimensionMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient sample size: {0}")]
    SampleSize(String),

    #[error("sample size mismatch: {left} vs {right} realisations")]
    SampleSizeMismatch { left: usize, right: usize },

    #[error("degenerate bandwidth: median pairwise distance is zero")]
    DegenerateBandwidth,

    #[error("degenerate null distribution: {0}")]
    DegenerateNull(String),

    #[error("degenerate statistic: {0}")]
    DegenerateStatistic(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("bandwidth search failed: {0}")]
    Search(String),

    #[error("train/test split failed: {0}")]
    Split(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("conflicting duplicate entry: {0}")]
    Conflict(String),

    #[error("cannot impute {indicator} for {entity} in {year}: no donor has an observed value")]
    Unimputable {
        entity: String,
        year: i64,
        indicator: String,
    },

    #[error("metadata error: {0}")]
    Metadata(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Trial {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("toml output: {0}")]
    TomlSer(#[from] toml::ser::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config file: {0}")]
    Toml(#[from] toml::de::Error),
}

/// Coarse classification used to pick process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad files, malformed data, or invalid parameters supplied by the user.
    Input,
    /// Degenerate numerics (zero bandwidth, degenerate null or statistic).
    Numerical,
    /// Filesystem failures.
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::DegenerateBandwidth
            | Error::DegenerateNull(_)
            | Error::DegenerateStatistic(_)
            | Error::Search(_) => ErrorClass::Numerical,
            Error::Io { .. } => ErrorClass::Io,
            Error::Trial { source, .. } => source.class(),
            _ => ErrorClass::Input,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
