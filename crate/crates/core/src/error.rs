use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("matrix is not positive semidefinite (eigenvalue {min_eigenvalue:e} below tolerance)")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    #[error("degenerate projection: quadratic form {index} is {value:e}")]
    DegenerateProjection { index: usize, value: f64 },

    #[error("sensitivity matrix is singular")]
    SingularSensitivity,

    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    #[error("parse error at line {line}, field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            field: field.into(),
            message: message.into(),
        }
    }
}
