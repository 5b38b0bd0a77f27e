use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate direction: ||xi|| = 0 at psi = ({psi_x}, {psi_y})")]
    DegenerateDirection { psi_x: f64, psi_y: f64 },

    #[error("non-finite value at iteration {iteration}: {what} (objective trace: {trace:?})")]
    NonFinite {
        iteration: usize,
        what: &'static str,
        trace: Vec<f64>,
    },

    #[error("ill-posed least squares: training matrix is rank deficient")]
    IllPosed,

    #[error("covariance is not positive semidefinite: {0}")]
    Generation(String),

    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("trial {trial} at sweep point {sweep_index} failed: {source}")]
    Trial {
        sweep_index: usize,
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Format(String),
}

pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        message: message.into(),
    }
}
