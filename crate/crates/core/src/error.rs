use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("representation mismatch: wavefunction is already in {0} space")]
    Representation(&'static str),

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error("invalid potential: {0}")]
    Potential(String),

    #[error("stability guard violated: {reason}; try dt <= {suggested_dt:.3e}")]
    Stability { reason: String, suggested_dt: f64 },

    #[error("ground state did not converge within {steps} steps (best residual {best_residual:.3e})")]
    NonConvergence { steps: usize, best_residual: f64 },

    #[error("not a tunneling configuration: E = {e} >= V0 = {v0}")]
    NotTunneling { v0: f64, e: f64 },

    #[error("invalid measurement: {0}")]
    Measurement(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("analysis failed: {0}")]
    Analysis(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
