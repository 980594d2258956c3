use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rotation is not proper orthogonal (|R Rt - I| = {orthogonality:.3e}, det = {det})")]
    NonOrthogonal { orthogonality: f64, det: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("singular system in {0}")]
    Singular(&'static str),

    #[error("tensor is not transversely isotropic about axis 1 (residual {0:.3e})")]
    NotTransverselyIsotropic(f64),

    #[error("simulation failed at step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid load program: {0}")]
    Program(String),

    #[error("training diverged at epoch {epoch} (cost {cost})")]
    Diverged { epoch: usize, cost: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error("format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
