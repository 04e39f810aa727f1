use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("equilibrium solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("equilibrium angle difference on line {from}-{to} is {difference:.6} rad, outside (-pi/2, pi/2)")]
    AngleBound {
        from: usize,
        to: usize,
        difference: f64,
    },

    #[error("integration blew up at step {step} (t = {time:.4} s)")]
    BlowUp { step: usize, time: f64 },

    #[error("non-finite adjoint at step {step}")]
    NonFiniteGradient { step: usize },

    #[error("training diverged at epoch {epoch}; last good parameters kept")]
    Divergence {
        epoch: usize,
        last_good: Box<crate::controllers::Controller>,
    },

    #[error("horizon too short: {0}")]
    Horizon(String),

    #[error("certification refused: {0}")]
    CertificationRefused(String),

    #[error("certificate failed: {0}")]
    CertificateFailed(String),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Divergence { .. } | Error::NonFiniteGradient { .. } => 3,
            Error::CertificationRefused(_) | Error::CertificateFailed(_) => 4,
            Error::BlowUp { .. } => 1,
            _ => 2,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
