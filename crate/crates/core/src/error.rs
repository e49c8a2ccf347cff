use thiserror::Error;

use crate::vector::Vector;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The requested combination of geometry, set and parameters is not supported.
    #[error("configuration error: {0}")]
    Config(String),

    /// The doubling search for the local smoothness constant ran out of trials.
    ///
    /// This almost always means the oracle is not relatively smooth with the
    /// declared inexactness, or returns non-finite values.
    #[error("line search exceeded {trials} trials at iteration {iteration} (last L = {last_l:e})")]
    LineSearch {
        iteration: usize,
        trials: usize,
        last_l: f64,
        w: Vector,
        z_next: Vector,
    },

    #[error("restart stage {stage}: {source}")]
    Stage {
        stage: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
