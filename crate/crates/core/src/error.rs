use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A particle left the finite range during time stepping.
    #[error("propagation diverged on level {level} at t = {time}")]
    Divergence { level: usize, time: f64 },

    /// Every importance weight vanished.
    #[error("importance weights degenerate at t = {time}")]
    Degeneracy { time: f64 },

    #[error("transport solver failed: {0}")]
    Solver(String),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
