use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A scenario field failed validation; the message names the field.
    #[error("{field} {message}")]
    Config { field: &'static str, message: String },

    /// An operation was called with arguments outside its domain.
    #[error("{0}")]
    InvalidInput(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("scenario parse error: {0}")]
    Parse(#[from] serde_json::Error),

    /// The stationary solve could not reach the required accuracy.
    #[error("stationary solve is numerically defective: residual {residual:.3e} exceeds limit {limit:.3e}")]
    SingularSystem { residual: f64, limit: f64 },

    /// More than one recurrent class reachable; the limit depends on the start state.
    #[error("{recurrent_classes} recurrent classes; stationary distribution is not unique, solve from an explicit start state")]
    NonUniqueStationary { recurrent_classes: usize },

    /// A sweep cell failed; carries the grid coordinate it failed at.
    #[error("sweep cell n={n}, t_target={t_target:?}: {source}")]
    SweepCell {
        n: u32,
        t_target: Option<u32>,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn config(field: &'static str, message: impl Into<String>) -> Self {
        Error::Config {
            field,
            message: message.into(),
        }
    }

    pub(crate) fn at_cell(self, n: u32, t_target: Option<u32>) -> Self {
        Error::SweepCell {
            n,
            t_target,
            source: Box::new(self),
        }
    }
}
