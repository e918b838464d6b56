use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported kernel: {0}")]
    UnsupportedKernel(String),

    /// The Fattorini criterion fails (or an observation value vanishes) at
    /// the listed eigen-indices.
    #[error("system is not controllable at time L: criterion fails at k = {indices:?}")]
    NotControllable { indices: Vec<i64> },

    #[error("degenerate spectrum: {0}")]
    Degenerate(String),

    #[error("singular transformation: sigma_min = {sigma_min:e} <= tol = {tol:e}")]
    SingularTransform { sigma_min: f64, tol: f64 },

    #[error("horizon too short: T = {horizon} but at least {required} is needed")]
    HorizonTooShort { horizon: f64, required: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Process exit status used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NotControllable { .. } => 2,
            Error::Degenerate(_) => 3,
            Error::SingularTransform { .. } => 4,
            _ => 1,
        }
    }
}
