use thiserror::Error;

/// Errors raised by the transport model, solver, and fitting routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("infeasible geometry: {0}")]
    InfeasibleGeometry(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("singular linear system (pivot {0})")]
    Singular(usize),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short stable identifier, used for machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::InfeasibleGeometry(_) => "infeasible_geometry",
            Error::Argument(_) => "argument",
            Error::Data(_) => "data",
            Error::Fit(_) => "fit",
            Error::Singular(_) => "internal",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
