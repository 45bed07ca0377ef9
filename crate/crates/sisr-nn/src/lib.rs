//! Noise-augmented state predictor (NASP) for the stochastic FHN neuron
//! and its physics-informed training pipeline.
//!
//! The network is a dense tanh stack mapping the current state and the
//! realized noise increment `(v, w, sigma eta)` to the next state
//! `(v_hat, w_hat)` — a learned one-step stochastic integrator. Training
//! composes four loss terms: supervised one-step error, an
//! initial-condition pin, the discrete residual of the governing SDE, and
//! a barrier-matching penalty that anchors predicted escape ordinates to
//! the Kramers timescale-matching condition.
//!
//! - [`mlp`]: the network itself — deterministic init, forward with a
//!   gradient tape, exact reverse-mode backward, Adam, checkpoints.
//! - [`pinn`]: loss terms with analytic output-cotangents, escape-event
//!   extraction, dynamic loss weighting, the training loop, NRMSE, and
//!   the loss-ablation harness.
//! - [`surrogate`]: free-running rollouts, predicted coherence curves,
//!   and simulation-vs-surrogate comparison reports.

pub mod mlp;
pub mod pinn;
pub mod surrogate;

pub use mlp::{AdamState, Gradients, NetworkParams, Tape};
pub use pinn::{
    LossMask, LossWeights, Normalizer, StatePredictor, TrainConfig, TrainReport,
};
pub use surrogate::{CurveComparison, RolloutResult};

/// Errors from the network and training layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("non-finite values in {context}{}", epoch.map(|e| format!(" at epoch {e}")).unwrap_or_default())]
    NonFinite { context: &'static str, epoch: Option<u64> },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("reference sequence has zero variance")]
    DegenerateReference,

    #[error("sigma grids differ between the two curves")]
    GridMismatch,

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Core(#[from] sisr_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
