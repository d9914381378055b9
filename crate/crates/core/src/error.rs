use thiserror::Error;

/// Errors raised anywhere in the laboratory.
///
/// The split between `Validation` and `Numeric` mirrors the CLI exit codes:
/// bad inputs map to 2, numerical failures to 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("argument error: {0}")]
    Argument(String),

    #[error("quadrature did not converge: residual {residual:.3e} at truncation {truncation:.3e}")]
    Quadrature { residual: f64, truncation: f64 },

    #[error("non-finite value at step {step}")]
    BlowUp { step: usize },

    #[error("Picard iteration is not contracting: distances {distances:?}")]
    NonContraction { distances: Vec<f64> },

    #[error("gradient check failed: max relative error {max_rel_err:.3e}")]
    GradientCheck { max_rel_err: f64 },

    #[error("optimizer stalled: no decrease over {window} iterations (last value {last:.6e})")]
    Stalled { window: usize, last: f64 },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by invalid user input.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Validation(_) | Error::Argument(_) | Error::Json(_))
    }

    /// True for errors raised by a numerical routine.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Quadrature { .. }
                | Error::BlowUp { .. }
                | Error::NonContraction { .. }
                | Error::GradientCheck { .. }
                | Error::Stalled { .. }
                | Error::Numeric(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
