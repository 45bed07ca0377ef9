//! Run configuration: a TOML file with one section per subsystem, every
//! key optional, command-line flags layered on top. The fully resolved
//! config is embedded in each run's manifest so any output can be
//! regenerated exactly.

use serde::{Deserialize, Serialize};
use sisr_core::fhn::{ModelParams, State};
use sisr_core::spikes::SweepOptions;
use sisr_nn::pinn::{HeadMode, LossMask, LossWeights, TrainConfig, WeightAdapt};

use crate::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub model: ModelSection,
    pub simulate: SimulateSection,
    pub landscape: LandscapeSection,
    pub sweep: SweepSection,
    pub train: TrainSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub eps: f64,
    pub sigma: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        // Desk-scale SISR regime; the reference-scale timescale
        // separation (eps = 0.00025) stays a config choice.
        Self { a: 0.05, b: 1.0, c: 2.0, eps: 0.005, sigma: 0.024 }
    }
}

impl ModelSection {
    pub fn params(&self) -> Result<ModelParams, CliError> {
        ModelParams::new(self.a, self.b, self.c, self.eps, self.sigma)
            .map_err(|e| CliError::new(format!("model: {e}")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub dt: f64,
    pub n_steps: usize,
    pub init_v: f64,
    pub init_w: f64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { dt: 0.05, n_steps: 200_000, init_v: 0.0, init_w: 0.0 }
    }
}

impl SimulateSection {
    pub fn init(&self) -> State {
        State::new(self.init_v, self.init_w)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct LandscapeSection {
    /// Number of w samples across the fold interval.
    pub n_w: usize,
    /// Number of v samples for the potential grid.
    pub n_v: usize,
    /// w values at which a potential profile is dumped.
    pub profile_w: Vec<f64>,
}

impl Default for LandscapeSection {
    fn default() -> Self {
        Self { n_w: 400, n_v: 241, profile_w: vec![-0.02, 0.0, 0.02] }
    }
}

/// Log-spaced grid description.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    pub log: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { min: 0.005, max: 0.3, count: 9, log: true }
    }
}

impl GridSpec {
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        if self.count == 0 || self.min >= self.max && self.count > 1 {
            return Err(CliError::new(format!(
                "grid: need min < max and count >= 1, got [{}, {}] x {}",
                self.min, self.max, self.count
            )));
        }
        if self.count == 1 {
            return Ok(vec![self.min]);
        }
        let n = self.count as f64 - 1.0;
        Ok((0..self.count)
            .map(|k| {
                let frac = k as f64 / n;
                if self.log {
                    (self.min.ln() + (self.max.ln() - self.min.ln()) * frac).exp()
                } else {
                    self.min + (self.max - self.min) * frac
                }
            })
            .collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub sigma: GridSpec,
    /// More than one entry in either grid switches to the (a, eps) map.
    pub a_values: Vec<f64>,
    pub eps_values: Vec<f64>,
    pub dt: f64,
    pub v_th: f64,
    pub t_horizon: f64,
    pub min_spikes: usize,
    pub max_doublings: u32,
}

impl Default for SweepSection {
    fn default() -> Self {
        let d = SweepOptions::default();
        Self {
            sigma: GridSpec::default(),
            a_values: vec![],
            eps_values: vec![],
            dt: d.dt,
            v_th: d.v_th,
            t_horizon: d.t_horizon,
            min_spikes: d.min_spikes,
            max_doublings: d.max_doublings,
        }
    }
}

impl SweepSection {
    pub fn options(&self, init: State) -> SweepOptions {
        SweepOptions {
            dt: self.dt,
            init,
            v_th: self.v_th,
            t_horizon: self.t_horizon,
            min_spikes: self.min_spikes,
            max_doublings: self.max_doublings,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    // dataset
    pub n_points: usize,
    pub split_fraction: f64,
    pub burn_in: usize,
    /// Also write the packaged one-step corpus next to the checkpoint.
    pub emit_dataset: bool,
    // optimizer loop
    pub epochs: u64,
    pub batch_total: usize,
    pub window_len: usize,
    pub lr: f64,
    pub dt: f64,
    pub loss_data: bool,
    pub loss_ic: bool,
    pub loss_phy1: bool,
    pub loss_phy2: bool,
    pub phy2_rollout_len: usize,
    pub phy2_every: u64,
    pub weight_adapt: WeightAdapt,
    pub lambda_data: f64,
    pub lambda_ic: f64,
    pub lambda_phy1: f64,
    pub lambda_phy2: f64,
    pub eval_every: u64,
    pub layer_sizes: Vec<usize>,
    pub normalize: bool,
    pub head: HeadMode,
    pub prominence_frac: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::desk();
        Self {
            n_points: 50_000,
            split_fraction: 0.8,
            burn_in: 2_000,
            emit_dataset: false,
            epochs: t.epochs,
            batch_total: t.batch_total,
            window_len: t.window_len,
            lr: t.lr,
            dt: t.dt,
            loss_data: true,
            loss_ic: true,
            loss_phy1: true,
            loss_phy2: true,
            phy2_rollout_len: t.phy2_rollout_len,
            phy2_every: t.phy2_every,
            weight_adapt: t.weight_adapt,
            lambda_data: 1.0,
            lambda_ic: 1.0,
            lambda_phy1: 1.0,
            lambda_phy2: 1.0,
            eval_every: t.eval_every,
            layer_sizes: t.layer_sizes,
            normalize: true,
            head: HeadMode::Delta,
            prominence_frac: t.prominence_frac,
        }
    }
}

impl TrainSection {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_total: self.batch_total,
            window_len: self.window_len,
            lr: self.lr,
            dt: self.dt,
            seed,
            loss_mask: LossMask {
                data: self.loss_data,
                ic: self.loss_ic,
                phy1: self.loss_phy1,
                phy2: self.loss_phy2,
            },
            phy2_rollout_len: self.phy2_rollout_len,
            phy2_every: self.phy2_every,
            weight_adapt: self.weight_adapt,
            init_weights: LossWeights {
                data: self.lambda_data,
                ic: self.lambda_ic,
                phy1: self.lambda_phy1,
                phy2: self.lambda_phy2,
            },
            eval_every: self.eval_every,
            layer_sizes: self.layer_sizes.clone(),
            normalize: self.normalize,
            head: self.head,
            prominence_frac: self.prominence_frac,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub checkpoint: String,
    pub n_steps: usize,
    pub v_th: f64,
    /// Noise grid for `predict-cv`; simulation side reuses the sweep knobs.
    pub sigma: GridSpec,
    pub min_spikes: usize,
    pub horizon_steps: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            checkpoint: "checkpoint_full.ckpt".into(),
            n_steps: 250_000,
            v_th: 0.4,
            sigma: GridSpec { min: 0.01, max: 0.08, count: 7, log: true },
            min_spikes: 100,
            horizon_steps: 2_000_000,
        }
    }
}

impl Config {
    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::new(format!("config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| {
            // toml errors carry the offending key and line/column span.
            CliError::new(format!("config {}: {}", path.display(), first_line(&e.to_string())))
        })
    }
}

fn first_line(s: &str) -> String {
    s.lines().filter(|l| !l.trim().is_empty()).take(3).collect::<Vec<_>>().join("; ")
}
