use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input violates an operation's precondition.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// Hidden weight vector is zero where the smoothed activation needs a direction.
    #[error("neuron {neuron}: hidden weight vector is zero")]
    ZeroNeuron { neuron: usize },

    /// Sphere ascent ran out of steps before meeting its stationarity tolerance.
    #[error("sphere ascent did not converge in {steps} steps (projected gradient norm {grad_norm:.3e})")]
    NoConvergence {
        steps: usize,
        grad_norm: f64,
        last: Vec<f64>,
    },

    #[error("dataset generation failed: {0}")]
    Generation(String),

    #[error("non-finite loss at epoch {epoch} (first offending neuron: {neuron:?})")]
    NonFinite { epoch: u64, neuron: Option<usize> },

    #[error("inconsistent embedding: {0}")]
    Consistency(String),

    #[error("no prominent neurons found")]
    NoProminentNeurons,

    #[error("perturbation sample {sample} changes the activation pattern; radius {radius:e} is too large")]
    RadiusTooLarge { sample: usize, radius: f64 },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed CSV")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
