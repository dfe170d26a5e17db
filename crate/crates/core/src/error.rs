use thiserror::Error;

/// Errors surfaced by the estimation and testing routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient local data: needed {needed}, found {found}")]
    InsufficientLocalData { needed: usize, found: usize },

    #[error("singular design matrix in local polynomial fit")]
    SingularDesign,

    #[error("degenerate sample: zero dispersion")]
    DegenerateSample,

    #[error("variance estimate is not strictly positive")]
    DegenerateVariance,

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
