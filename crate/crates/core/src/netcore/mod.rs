//! Dense networks in double precision: batched forward, manual reverse-mode gradients,
//! a diagonal Gaussian head and an adaptive-moment optimizer.

mod adam;
mod checkpoint;
pub mod gaussian;
mod mlp;

use std::path::Path;

use thiserror::Error;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, CheckpointHeader, Precision, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use gaussian::{GaussianPolicyOutput, SampledAction};
pub use mlp::{Dense, ForwardCache, ParamSet};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("input has {got} features, network expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("flat vector has {got} entries, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("gradient entry {index} is not finite")]
    NonFiniteGradient { index: usize },
    #[error("parameters contain non-finite values")]
    NonFiniteParameter,
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed checkpoint: {0}")]
    Format(String),
}

impl NetError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), source }
    }
}

/// Policy network output for one observation.
pub fn forward_policy(params: &ParamSet, obs: &[f64]) -> Result<GaussianPolicyOutput, NetError> {
    let x = ndarray::ArrayView2::from_shape((1, obs.len()), obs).expect("row view");
    let mean = params.forward(x)?.row(0).to_vec();
    let log_std = params
        .effective_log_std()
        .map(|s| s.to_vec())
        .unwrap_or_else(|| vec![gaussian::LOG_STD_INIT; mean.len()]);
    Ok(GaussianPolicyOutput { mean, log_std })
}

/// Scalar value-head output for one observation.
pub fn forward_value(params: &ParamSet, obs: &[f64]) -> Result<f64, NetError> {
    let x = ndarray::ArrayView2::from_shape((1, obs.len()), obs).expect("row view");
    Ok(params.forward(x)?[[0, 0]])
}
