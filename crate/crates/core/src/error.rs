use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parameter {value} lies outside the parametric interval [0, 1]")]
    Domain { value: f64 },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("singular Jacobian (det = {det:e}) at parametric point ({}, {})", point[0], point[1])]
    SingularJacobian { point: [f64; 2], det: f64 },

    #[error("non-finite value {value} at physical point ({}, {}, t = {})", point[0], point[1], point[2])]
    NonFinite { point: [f64; 3], value: f64 },

    #[error("problem of size {size} exceeds the dense limit of {limit}")]
    TooLarge { size: usize, limit: usize },

    #[error("solver did not converge in {iterations} iterations (best relative residual {best_residual:e})")]
    NoConvergence { iterations: usize, best_residual: f64 },

    #[error("singular or degenerate system: {0}")]
    Singular(String),

    #[error("degenerate problem: exact-solution norm {norm:e} in the `{measure}` denominator")]
    DegenerateNorm { measure: &'static str, norm: f64 },

    #[error("configuration error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
