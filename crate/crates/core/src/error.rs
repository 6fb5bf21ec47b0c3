use std::io;

use thiserror::Error;

use crate::protocol::ProtocolError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("diffusion step {step} outside 0..={max}")]
    StepOutOfRange { step: usize, max: usize },

    #[error("noise estimation failed: {0}")]
    Estimation(String),

    #[error("singular precision: spectral coefficient {value:.3e} at frequency {index} is below the floor {floor:.0e}")]
    Singular { index: usize, value: f64, floor: f64 },

    #[error("conjugate gradients did not reach tolerance {tolerance:.0e} within {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64, tolerance: f64 },

    #[error("denoiser contract violated: {0}")]
    Contract(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error(transparent)]
    Protocol(#[from] ProtocolError),

    #[error("npy format error: {0}")]
    Npy(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// Strips any iteration wrappers and returns the underlying error.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtIteration { source, .. } => source.root(),
            other => other,
        }
    }

    /// True when the failure came from the external denoiser transport.
    pub fn is_protocol(&self) -> bool {
        matches!(self.root(), Error::Protocol(_))
    }
}
