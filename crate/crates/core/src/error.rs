use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("amplitude solver failed: {0}")]
    SolverFailure(String),
    #[error("insufficient cutoff: omitted probability bound {bound:e} exceeds {limit:e}")]
    InsufficientCutoff { bound: f64, limit: f64 },
    #[error("oracle out of range: mean photon number {nbar} exceeds the brute-force guard of {limit}")]
    OracleOutOfRange { nbar: f64, limit: f64 },
    #[error("undefined FWHM: {0}")]
    UndefinedFwhm(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by user-supplied configuration rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidState(_) | Error::InvalidConfig(_) | Error::OracleOutOfRange { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
