use thiserror::Error;

/// Errors raised by the filters, models, simulator and diagnostics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("covariance square root failed after jitter escalation (smallest eigenvalue {min_eigenvalue:e})")]
    SquareRoot { min_eigenvalue: f64 },

    #[error(
        "innovation covariance is singular to working precision at step {step}; R may be too small"
    )]
    SingularInnovation { step: usize },

    #[error("filter diverged at step {step}: {reason}")]
    Divergence { step: usize, reason: String },

    #[error("simulation blew up at sample {sample} (t = {time} s)")]
    SimulationBlowUp { sample: usize, time: f64 },

    #[error("invalid model: {0}")]
    Model(String),

    #[error("{0}")]
    Analysis(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            actual,
        })
    }
}
