use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid distribution parameter: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// A value or gradient became NaN or infinite.
    #[error("numeric failure in {location}: {detail}")]
    Numeric { location: String, detail: String },

    #[error("training failed at step {step} (last finite objective {last_objective:?}): {source}")]
    Training {
        step: usize,
        last_objective: Option<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn numeric(location: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numeric {
            location: location.into(),
            detail: detail.into(),
        }
    }
}
