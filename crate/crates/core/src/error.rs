use thiserror::Error;

/// Errors raised by the library.
///
/// The variants are grouped so the command-line front end can map them onto
/// exit codes: configuration and input problems versus numeric guards.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("invalid mutation model: {0}")]
    InvalidModel(String),

    #[error("rate matrix is reducible: no power up to {cap} of |Q| is strictly positive")]
    Reducible { cap: usize },

    #[error("model is not reversible with respect to its root distribution")]
    NotReversible,

    #[error("unknown allele {0:?}")]
    UnknownAllele(String),

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("canonicalization mode {mode} does not apply to {kind} trees")]
    IncompatibleMode { mode: &'static str, kind: &'static str },

    #[error("trees are not nested: {0}")]
    NotNested(String),

    #[error("site matrix has no event log")]
    MissingEventLog,

    #[error("enumeration guard exceeded: {terms} terms > limit {limit}")]
    EnumerationGuard { terms: f64, limit: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by a numeric guard rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::EnumerationGuard { .. } | Error::Numeric(_) | Error::Reducible { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
