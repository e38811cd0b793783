use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid forcing: {0}")]
    InvalidForcing(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid mismatch: {0}")]
    Shape(String),

    #[error("non-finite value after step at t = {time}")]
    BlowUp { time: f64 },

    #[error("snapshot format error: {0}")]
    Format(String),

    #[error("path mismatch: {0}")]
    Path(String),

    #[error("matrix is not positive semidefinite: min eigenvalue {min_eig:e}, trace {trace:e}")]
    NotPsd { min_eig: f64, trace: f64 },

    #[error("norm iteration did not converge in {iterations} iterations (last change {change:e})")]
    NoConvergence { iterations: usize, change: f64 },

    #[error("window too short: {0}")]
    Window(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}
