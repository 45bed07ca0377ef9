//! Core dynamics of the stochastic FitzHugh-Nagumo (FHN) neuron in the
//! excitable, slow-fast regime:
//!
//! ```text
//! dv/dt = v(a - v)(v - 1) - w + sigma * eta(t)      (fast membrane potential)
//! dw/dt = eps * (b*v - c*w)                         (slow recovery current)
//! ```
//!
//! The crate covers the full dynamical-systems pipeline behind self-induced
//! stochastic resonance (SISR):
//!
//! - [`fhn`]: parameter set, vector field, Jacobian, fixed points, and
//!   excitable-regime classification via the cubic discriminant.
//! - [`potential`]: the frozen-`w` double-well potential, closed-form
//!   nullcline roots, barrier heights, Kramers escape rates, and the
//!   timescale-matching escape-point solver.
//! - [`sde`]: seeded Euler-Maruyama integration with recorded noise
//!   increments, frozen-`w` Monte-Carlo escape times, and training-dataset
//!   packaging.
//! - [`spikes`]: threshold-crossing spike detection, interspike-interval
//!   statistics (CV), and coherence sweeps over noise and parameters.
//!
//! All stochastic entry points take an explicit [`rng::StreamSeed`]; equal
//! seeds give bit-identical results regardless of thread count.

pub mod fhn;
pub mod potential;
pub mod rng;
pub mod sde;
pub mod spikes;

pub use fhn::{ModelParams, StabilityReport, State};
pub use potential::{BarrierPair, Branch, EscapePoints, NullclineExtrema, NullclineRoots};
pub use rng::StreamSeed;
pub use sde::{Dataset, Trajectory};
pub use spikes::{CvCurve, CvMinGrid, SpikeStatistics};

/// Errors shared by the dynamics layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// The cubic nullcline has a single real root at this `w`; the requested
    /// quantity only exists inside the fold interval.
    #[error("w = {w} lies outside the fold interval [{w_min}, {w_max}] for a = {a}")]
    OutOfRange { w: f64, a: f64, w_min: f64, w_max: f64 },

    /// The timescale-matching target misses the range of the barrier
    /// function on the requested branch.
    #[error("no {branch} escape point: target {target:e} outside barrier range [{lo:e}, {hi:e}]")]
    NoMatch { branch: Branch, target: f64, lo: f64, hi: f64 },

    /// State magnitude blew past the divergence guard; the step size is
    /// unstable for these parameters.
    #[error("trajectory diverged at step {step} (|state| > {limit:e})")]
    Diverged { step: usize, limit: f64 },

    /// A Monte-Carlo escape sample ran past its step budget.
    #[error("escape sample {sample} exceeded the {max_steps}-step budget")]
    Timeout { sample: usize, max_steps: usize },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),
}

pub type Result<T> = std::result::Result<T, Error>;
