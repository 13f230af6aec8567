use thiserror::Error;

/// Errors raised by the test engine and the model backends.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("matrix is numerically singular (smallest eigenvalue {smallest_eigenvalue:e}, condition number {condition:e})")]
    Singular {
        smallest_eigenvalue: f64,
        condition: f64,
    },

    #[error("collinear columns: {0}")]
    Collinear(String),

    #[error("observation {index} has leverage {leverage} (>= 1 - 1e-8); leave-one-out fit is undefined")]
    Leverage { index: usize, leverage: f64 },

    #[error("ill-conditioned system: {0}")]
    Conditioning(String),

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("missing value at row {row}, column '{column}'")]
    MissingData { row: usize, column: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Whether the error comes from the input data rather than from the numerics.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Schema(_)
                | Error::Parse { .. }
                | Error::MissingData { .. }
                | Error::Io(_)
                | Error::Csv(_)
                | Error::Input(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
