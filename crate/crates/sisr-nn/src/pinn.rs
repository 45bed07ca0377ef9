//! Physics-informed training of the noise-augmented state predictor.
//!
//! The composite objective is
//!
//! ```text
//! L = lambda_data L_data + lambda_ic L_ic + lambda_phy1 L_phy1 + lambda_phy2 L_phy2
//! ```
//!
//! - `L_data`: mean squared one-step prediction error over the batch.
//! - `L_ic`: squared error of the prediction at the dataset's initial
//!   condition (a single sample).
//! - `L_phy1`: discrete residual of the stochastic dynamics. The predicted
//!   time derivative is the step quotient `(y_hat[k+1] - y[k]) / dt` — the
//!   network is a one-step integrator, so its derivative only exists
//!   through the step — and the vector field is evaluated at the predicted
//!   state.
//! - `L_phy2`: barrier matching. Escape ordinates extracted from a
//!   free-running rollout are re-predicted each epoch and pulled toward
//!   the timescale-matching condition `dU(w) = sigma^2 ln(1/eps) / 2`,
//!   differentiable through the closed-form barrier slope.
//!
//! Every loss exposes its exact cotangent with respect to the network
//! outputs; one shared reverse sweep per term turns those into parameter
//! gradients, which keeps the terms individually measurable for dynamic
//! weight balancing.

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use sisr_core::fhn::{ModelParams, State};
use sisr_core::potential::{barrier_slopes, barriers, fold_interval, matching_target, nullcline_roots};
use sisr_core::rng::{self, StreamSeed};
use sisr_core::sde::Dataset;

use crate::mlp::{AdamState, Gradients, NetworkParams, Tape};
use crate::{Error, Result};

/// Per-variable affine scaling of network inputs and outputs.
///
/// The state variables are O(1) but far from unit variance; with the
/// toggle on, the network sees z-scored inputs and produces z-scored
/// outputs, and every loss converts through the scale. The identity
/// scaling reproduces the raw network exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean_in: [f64; 3],
    pub std_in: [f64; 3],
    pub mean_out: [f64; 2],
    pub std_out: [f64; 2],
}

impl Normalizer {
    pub fn identity() -> Self {
        Self { mean_in: [0.0; 3], std_in: [1.0; 3], mean_out: [0.0; 2], std_out: [1.0; 2] }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }

    /// Column statistics of the training split; degenerate columns keep
    /// unit scale.
    pub fn fit(inputs: &[[f64; 3]], targets: &[[f64; 2]]) -> Self {
        fn stats<const K: usize>(rows: &[[f64; K]]) -> ([f64; K], [f64; K]) {
            let n = rows.len().max(1) as f64;
            let mut mean = [0.0; K];
            let mut var = [0.0; K];
            for r in rows {
                for k in 0..K {
                    mean[k] += r[k];
                }
            }
            for m in &mut mean {
                *m /= n;
            }
            for r in rows {
                for k in 0..K {
                    var[k] += (r[k] - mean[k]) * (r[k] - mean[k]);
                }
            }
            let mut std = [1.0; K];
            for k in 0..K {
                let s = (var[k] / n).sqrt();
                if s > 1e-12 {
                    std[k] = s;
                }
            }
            (mean, std)
        }
        let (mean_in, std_in) = stats(inputs);
        let (mean_out, std_out) = stats(targets);
        Self { mean_in, std_in, mean_out, std_out }
    }

    /// Fit for a head mode: absolute heads scale against the targets,
    /// delta heads against the per-step state changes.
    pub fn fit_for(head: HeadMode, inputs: &[[f64; 3]], targets: &[[f64; 2]]) -> Self {
        match head {
            HeadMode::Absolute => Self::fit(inputs, targets),
            HeadMode::Delta => {
                let deltas: Vec<[f64; 2]> = inputs
                    .iter()
                    .zip(targets)
                    .map(|(x, y)| [y[0] - x[0], y[1] - x[1]])
                    .collect();
                Self::fit(inputs, &deltas)
            }
        }
    }

    fn norm_inputs(&self, raw: ArrayView2<f64>) -> Array2<f64> {
        let mut z = raw.to_owned();
        for mut row in z.axis_iter_mut(Axis(0)) {
            for k in 0..3 {
                row[k] = (row[k] - self.mean_in[k]) / self.std_in[k];
            }
        }
        z
    }

    fn denorm_outputs(&self, z: &mut Array2<f64>) {
        for mut row in z.axis_iter_mut(Axis(0)) {
            for k in 0..2 {
                row[k] = self.mean_out[k] + self.std_out[k] * row[k];
            }
        }
    }

    /// Chain a raw-space output cotangent through the descaling.
    fn cotangent_to_net(&self, raw: &mut Array2<f64>) {
        for mut row in raw.axis_iter_mut(Axis(0)) {
            for k in 0..2 {
                row[k] *= self.std_out[k];
            }
        }
    }
}

/// What the network head represents.
///
/// `Absolute` reads the outputs as the next state directly. `Delta` reads
/// them as the state change over one step, so the next state is the input
/// state plus the outputs; the slow variable's tiny per-step increments
/// then live at the network's full output resolution instead of 40 dB
/// below the state magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum HeadMode {
    #[default]
    Absolute,
    Delta,
}

/// The NASP model: network plus its input/output scaling and head
/// convention.
#[derive(Debug, Clone)]
pub struct StatePredictor {
    pub net: NetworkParams,
    pub norm: Normalizer,
    pub head: HeadMode,
}

impl StatePredictor {
    pub fn new(net: NetworkParams) -> Self {
        Self { net, norm: Normalizer::identity(), head: HeadMode::Absolute }
    }

    /// Restore a predictor (network, scaling, head convention) from a
    /// checkpoint file.
    pub fn from_checkpoint(path: &std::path::Path) -> Result<Self> {
        let (net, header) = crate::mlp::load_checkpoint(path)?;
        Ok(Self {
            net,
            norm: header.normalizer.unwrap_or_else(Normalizer::identity),
            head: header.head,
        })
    }

    fn finish(&self, raw_inputs: ArrayView2<f64>, out: &mut Array2<f64>) {
        self.norm.denorm_outputs(out);
        if self.head == HeadMode::Delta {
            for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
                row[0] += raw_inputs[[i, 0]];
                row[1] += raw_inputs[[i, 1]];
            }
        }
    }

    /// One-step predictions in raw state units, with the gradient tape.
    pub fn predict(&self, raw_inputs: ArrayView2<f64>) -> Result<(Array2<f64>, Tape)> {
        if self.norm.is_identity() && self.head == HeadMode::Absolute {
            return self.net.forward(raw_inputs);
        }
        let z = self.norm.norm_inputs(raw_inputs);
        let (mut out, tape) = self.net.forward(z.view())?;
        self.finish(raw_inputs, &mut out);
        Ok((out, tape))
    }

    /// Predictions without tape bookkeeping.
    pub fn predict_only(&self, raw_inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        if self.norm.is_identity() && self.head == HeadMode::Absolute {
            return self.net.infer(raw_inputs);
        }
        let z = self.norm.norm_inputs(raw_inputs);
        let mut out = self.net.infer(z.view())?;
        self.finish(raw_inputs, &mut out);
        Ok(out)
    }

    /// Parameter gradients from a cotangent expressed in raw state units.
    pub fn backward(&self, tape: &Tape, mut raw_cotangent: Array2<f64>) -> Result<Gradients> {
        if !self.norm.is_identity() {
            self.norm.cotangent_to_net(&mut raw_cotangent);
        }
        self.net.backward(tape, raw_cotangent.view())
    }

    /// Free-running rollout: feed predictions back as inputs with fresh
    /// noise increments `sigma sqrt(dt) xi`. Returns the state series
    /// (length `n_steps + 1`), the input rows that produced each step, and
    /// whether every step stayed finite. A non-finite prediction halts the
    /// rollout early.
    pub fn rollout_states(
        &self,
        init: State,
        sigma: f64,
        dt: f64,
        n_steps: usize,
        seed: StreamSeed,
    ) -> (Vec<f64>, Vec<f64>, Vec<[f64; 3]>, bool) {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = seed.rng();
        let sqrt_dt = dt.sqrt();
        let mut v = Vec::with_capacity(n_steps + 1);
        let mut w = Vec::with_capacity(n_steps + 1);
        let mut inputs = Vec::with_capacity(n_steps);
        v.push(init.v);
        w.push(init.w);
        let mut row = Array2::zeros((1, 3));
        let (mut cv, mut cw) = (init.v, init.w);
        for _ in 0..n_steps {
            let xi: f64 = StandardNormal.sample(&mut rng);
            let input = [cv, cw, sigma * sqrt_dt * xi];
            row[[0, 0]] = input[0];
            row[[0, 1]] = input[1];
            row[[0, 2]] = input[2];
            let out = match self.predict_only(row.view()) {
                Ok(o) => o,
                Err(_) => return (v, w, inputs, false),
            };
            inputs.push(input);
            cv = out[[0, 0]];
            cw = out[[0, 1]];
            v.push(cv);
            w.push(cw);
        }
        (v, w, inputs, true)
    }
}

/// Supervised one-step loss: `mean((v_hat - v)^2 + (w_hat - w)^2)`.
/// Returns the value and its cotangent with respect to the predictions.
pub fn loss_data(preds: ArrayView2<f64>, targets: &[[f64; 2]]) -> (f64, Array2<f64>) {
    let n = targets.len() as f64;
    let mut cot = Array2::zeros((targets.len(), 2));
    let mut value = 0.0;
    for (i, t) in targets.iter().enumerate() {
        let dv = preds[[i, 0]] - t[0];
        let dw = preds[[i, 1]] - t[1];
        value += dv * dv + dw * dw;
        cot[[i, 0]] = 2.0 * dv / n;
        cot[[i, 1]] = 2.0 * dw / n;
    }
    (value / n, cot)
}

/// Initial-condition loss for the single prescribed state.
pub fn loss_ic(pred0: [f64; 2], ic: [f64; 2]) -> (f64, [f64; 2]) {
    let dv = pred0[0] - ic[0];
    let dw = pred0[1] - ic[1];
    (dv * dv + dw * dw, [2.0 * dv, 2.0 * dw])
}

/// Dynamical-residual loss.
///
/// With `Dv = (v_hat - v)/dt`, `Dw = (w_hat - w)/dt` and the vector field
/// at the predicted state, the residuals are `Dv - f(v_hat, w_hat) - eta/dt`
/// and `Dw - g(v_hat, w_hat)` where `eta` is the stored realized increment.
pub fn loss_phy1(
    inputs: &[[f64; 3]],
    preds: ArrayView2<f64>,
    p: &ModelParams,
    dt: f64,
) -> (f64, Array2<f64>) {
    let n = inputs.len() as f64;
    let mut cot = Array2::zeros((inputs.len(), 2));
    let mut value = 0.0;
    for (i, x) in inputs.iter().enumerate() {
        let (vh, wh) = (preds[[i, 0]], preds[[i, 1]]);
        let f = vh * (p.a - vh) * (vh - 1.0) - wh;
        let g = p.eps * (p.b * vh - p.c * wh);
        let r1 = (vh - x[0]) / dt - f - x[2] / dt;
        let r2 = (wh - x[1]) / dt - g;
        value += r1 * r1 + r2 * r2;
        let df_dv = -3.0 * vh * vh + 2.0 * (p.a + 1.0) * vh - p.a;
        // d r1 / d v_hat = 1/dt - df/dv ; d r1 / d w_hat = -df/dw = 1
        // d r2 / d v_hat = -dg/dv      ; d r2 / d w_hat = 1/dt + eps c
        cot[[i, 0]] = 2.0 / n * (r1 * (1.0 / dt - df_dv) + r2 * (-p.eps * p.b));
        cot[[i, 1]] = 2.0 / n * (r1 + r2 * (1.0 / dt + p.eps * p.c));
    }
    (value / n, cot)
}

/// Barrier-matching loss over predicted escape ordinates.
///
/// Each side is averaged over its own event count; `None` when both sides
/// are empty (the term is skipped, not zero). Ordinates are clamped just
/// inside the fold interval before evaluating the barrier, with zero slope
/// in the clamped region. Returns the value and `d value / d w` for each
/// left and right ordinate in order.
pub fn loss_phy2(
    w_left: &[f64],
    w_right: &[f64],
    a: f64,
    sigma: f64,
    eps: f64,
) -> Option<(f64, Vec<f64>, Vec<f64>)> {
    if w_left.is_empty() && w_right.is_empty() {
        return None;
    }
    let target = matching_target(sigma, eps);
    let (w_min, w_max) = fold_interval(a);
    let (lo, hi) = (w_min + 1e-9, w_max - 1e-9);
    let mut value = 0.0;
    let mut side = |ws: &[f64], left: bool| -> Vec<f64> {
        if ws.is_empty() {
            return Vec::new();
        }
        let n = ws.len() as f64;
        let mut grads = Vec::with_capacity(ws.len());
        let mut sum = 0.0;
        for &w in ws {
            let clamped = w.clamp(lo, hi);
            let b = barriers(clamped, a, 0.0).expect("clamped inside fold interval");
            let (sl, sr) = barrier_slopes(clamped, a).expect("clamped inside fold interval");
            let (du, slope) = if left { (b.du_left, sl) } else { (b.du_right, sr) };
            let miss = target - du;
            sum += miss * miss;
            let g = if w == clamped { 2.0 * miss * (-slope) / n } else { 0.0 };
            grads.push(g);
        }
        value += sum / n;
        grads
    };
    let grads_left = side(w_left, true);
    let grads_right = side(w_right, false);
    Some((value, grads_left, grads_right))
}

/// A detected escape event in a predicted trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapeEvent {
    /// Index into the series the event was extracted from.
    pub step: usize,
    pub w: f64,
}

/// Escape-point extraction from a predicted series.
///
/// Left events are local minima of `w` with at least the given prominence
/// whose `v` sits on the left of the saddle branch `v_s*(w, a)`; right
/// events are prominent local maxima with `v` right of the saddle.
pub fn extract_escape_points(
    w_series: &[f64],
    v_series: &[f64],
    a: f64,
    prominence: f64,
) -> (Vec<EscapeEvent>, Vec<EscapeEvent>) {
    assert_eq!(w_series.len(), v_series.len(), "series must be aligned");
    assert!(prominence > 0.0, "prominence must be positive");
    let (w_min, w_max) = fold_interval(a);
    let (lo, hi) = (w_min + 1e-9, w_max - 1e-9);
    let saddle_at = |w: f64| {
        nullcline_roots(w.clamp(lo, hi), a).expect("clamped inside fold interval").v_saddle
    };
    let n = w_series.len();
    let mut lefts = Vec::new();
    let mut rights = Vec::new();
    for i in 1..n.saturating_sub(1) {
        let w = w_series[i];
        // Local minimum: prominence is the smaller of the rises to either
        // side before a lower value appears.
        if w < w_series[i - 1] && w <= w_series[i + 1] {
            if min_prominence(w_series, i) >= prominence && v_series[i] < saddle_at(w) {
                lefts.push(EscapeEvent { step: i, w });
            }
        } else if w > w_series[i - 1] && w >= w_series[i + 1] {
            if max_prominence(w_series, i) >= prominence && v_series[i] > saddle_at(w) {
                rights.push(EscapeEvent { step: i, w });
            }
        }
    }
    (lefts, rights)
}

fn min_prominence(w: &[f64], i: usize) -> f64 {
    let base = w[i];
    let mut left_peak = f64::NEG_INFINITY;
    for j in (0..i).rev() {
        if w[j] < base {
            break;
        }
        left_peak = left_peak.max(w[j]);
    }
    let mut right_peak = f64::NEG_INFINITY;
    for &x in &w[i + 1..] {
        if x < base {
            break;
        }
        right_peak = right_peak.max(x);
    }
    left_peak.min(right_peak) - base
}

fn max_prominence(w: &[f64], i: usize) -> f64 {
    let base = w[i];
    let mut left_dip = f64::INFINITY;
    for j in (0..i).rev() {
        if w[j] > base {
            break;
        }
        left_dip = left_dip.min(w[j]);
    }
    let mut right_dip = f64::INFINITY;
    for &x in &w[i + 1..] {
        if x > base {
            break;
        }
        right_dip = right_dip.min(x);
    }
    base - left_dip.max(right_dip)
}

/// Relative weights of the loss components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub data: f64,
    pub ic: f64,
    pub phy1: f64,
    pub phy2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { data: 1.0, ic: 1.0, phy1: 1.0, phy2: 1.0 }
    }
}

/// Which components participate in training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossMask {
    pub data: bool,
    pub ic: bool,
    pub phy1: bool,
    pub phy2: bool,
}

impl LossMask {
    pub const DATA_ONLY: Self = Self { data: true, ic: false, phy1: false, phy2: false };
    pub const DATA_IC_PHY1: Self = Self { data: true, ic: true, phy1: true, phy2: false };
    pub const DATA_PHY2: Self = Self { data: true, ic: false, phy1: false, phy2: true };
    pub const FULL: Self = Self { data: true, ic: true, phy1: true, phy2: true };

    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.data {
            parts.push("data");
        }
        if self.ic {
            parts.push("ic");
        }
        if self.phy1 {
            parts.push("phy1");
        }
        if self.phy2 {
            parts.push("phy2");
        }
        parts.join("+")
    }
}

/// Dynamic loss-weight policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightAdapt {
    Off,
    GradNorm,
}

/// Gradient-norm balancing: each weight relaxes toward the ratio of the
/// data-gradient norm to its own component's gradient norm (exponential
/// smoothing 0.9, clamped to `[1e-3, 1e3]`); the data weight stays pinned
/// at 1 and zero-norm components keep their current weight.
pub fn update_weights_dynamic(
    norms: &ComponentValues,
    current: &LossWeights,
) -> LossWeights {
    let data_norm = norms.data.unwrap_or(0.0);
    let mut next = *current;
    next.data = 1.0;
    if data_norm <= 0.0 {
        return next;
    }
    let relax = |lambda: &mut f64, norm: Option<f64>| {
        if let Some(n) = norm {
            if n > 0.0 {
                *lambda = (0.9 * *lambda + 0.1 * (data_norm / n)).clamp(1e-3, 1e3);
            }
        }
    };
    relax(&mut next.ic, norms.ic);
    relax(&mut next.phy1, norms.phy1);
    relax(&mut next.phy2, norms.phy2);
    next
}

/// One value per loss component; `None` when masked off or skipped.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ComponentValues {
    pub data: Option<f64>,
    pub ic: Option<f64>,
    pub phy1: Option<f64>,
    pub phy2: Option<f64>,
}

/// Training hyperparameters. Reference scale by default;
/// [`TrainConfig::desk`] is the minutes-not-hours preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: u64,
    /// Samples per optimizer step, factored as windows x window length.
    pub batch_total: usize,
    pub window_len: usize,
    pub lr: f64,
    pub dt: f64,
    pub seed: u64,
    pub loss_mask: LossMask,
    pub phy2_rollout_len: usize,
    /// Refresh the escape-event cache every this many epochs.
    pub phy2_every: u64,
    pub weight_adapt: WeightAdapt,
    pub init_weights: LossWeights,
    pub eval_every: u64,
    pub layer_sizes: Vec<usize>,
    /// z-score inputs and targets from the training split.
    pub normalize: bool,
    /// Head convention of the trained predictor.
    pub head: HeadMode,
    /// Escape-event prominence as a fraction of the fold interval width.
    pub prominence_frac: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10_000,
            batch_total: 512,
            window_len: 32,
            lr: 1e-3,
            dt: 0.05,
            seed: 42,
            loss_mask: LossMask::FULL,
            phy2_rollout_len: 20_000,
            phy2_every: 50,
            weight_adapt: WeightAdapt::Off,
            init_weights: LossWeights::default(),
            eval_every: 25,
            layer_sizes: crate::mlp::NASP_LAYERS.to_vec(),
            normalize: false,
            head: HeadMode::Absolute,
            prominence_frac: 0.1,
        }
    }
}

impl TrainConfig {
    /// Desk-scale preset: 2000 epochs over a 5e4-point corpus.
    pub fn desk() -> Self {
        Self { epochs: 2000, ..Self::default() }
    }
}

/// Loss components and weights recorded at one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u64,
    pub total: f64,
    pub values: ComponentValues,
    pub weights: LossWeights,
    pub n_escape_events: (usize, usize),
}

/// NRMSE measured on the evaluation schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub epoch: u64,
    pub train_nrmse: f64,
    pub test_nrmse: f64,
}

/// Everything the training loop observed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub losses: Vec<EpochRecord>,
    pub evals: Vec<EvalRecord>,
    pub best_epoch: u64,
    pub best_test_nrmse: f64,
    /// Not serialized: report files must be byte-reproducible; the run
    /// manifest carries the wall time.
    #[serde(skip)]
    pub wall_secs: f64,
    pub config: TrainConfig,
}

/// Normalized root-mean-square error, per variable then averaged.
///
/// Each column's RMSE is divided by that column's population standard
/// deviation in the reference.
pub fn nrmse(reference: ArrayView2<f64>, predicted: ArrayView2<f64>) -> Result<f64> {
    if reference.raw_dim() != predicted.raw_dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", reference.raw_dim()),
            got: format!("{:?}", predicted.raw_dim()),
        });
    }
    if reference.nrows() < 2 {
        return Err(Error::InvalidConfig("nrmse needs at least 2 samples".into()));
    }
    let n = reference.nrows() as f64;
    let mut acc = 0.0;
    for col in 0..reference.ncols() {
        let r = reference.column(col);
        let p = predicted.column(col);
        let mean = r.sum() / n;
        let var = r.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        if var <= 0.0 {
            return Err(Error::DegenerateReference);
        }
        let mse = r
            .iter()
            .zip(p.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n;
        acc += (mse / var).sqrt();
    }
    Ok(acc / reference.ncols() as f64)
}

/// Teacher-forced NRMSE of a predictor over a split, in bounded-memory
/// chunks.
pub fn evaluate_nrmse(
    sp: &StatePredictor,
    inputs: &[[f64; 3]],
    targets: &[[f64; 2]],
) -> Result<f64> {
    const CHUNK: usize = 8192;
    let mut preds = Array2::zeros((targets.len(), 2));
    for (start, chunk) in inputs.chunks(CHUNK).enumerate().map(|(i, c)| (i * CHUNK, c)) {
        let x = Array2::from_shape_fn((chunk.len(), 3), |(i, j)| chunk[i][j]);
        let out = sp.predict_only(x.view())?;
        preds.slice_mut(ndarray::s![start..start + chunk.len(), ..]).assign(&out);
    }
    let refs = Array2::from_shape_fn((targets.len(), 2), |(i, j)| targets[i][j]);
    nrmse(refs.view(), preds.view())
}

struct EscapeCache {
    left_inputs: Vec<[f64; 3]>,
    right_inputs: Vec<[f64; 3]>,
}

/// Train a predictor on a one-step corpus; returns the parameters at the
/// best-test-NRMSE epoch and the full report.
pub fn train(cfg: &TrainConfig, ds: &Dataset) -> Result<(StatePredictor, TrainReport)> {
    let t_start = std::time::Instant::now();
    if cfg.batch_total % cfg.window_len != 0 {
        return Err(Error::InvalidConfig(format!(
            "batch_total {} not divisible by window_len {}",
            cfg.batch_total, cfg.window_len
        )));
    }
    if cfg.epochs == 0 {
        return Err(Error::InvalidConfig("epochs must be >= 1".into()));
    }
    let (train_x, train_y) = ds.train();
    let (test_x, test_y) = ds.test();
    if train_x.len() < cfg.batch_total + cfg.window_len {
        return Err(Error::InvalidConfig(format!(
            "train split of {} is smaller than batch_total + window_len = {}",
            train_x.len(),
            cfg.batch_total + cfg.window_len
        )));
    }
    let p = ds.params;
    let master = StreamSeed::new(cfg.seed, 0);
    let mut sp = StatePredictor {
        net: NetworkParams::init(&cfg.layer_sizes, master.derive(rng::tag::TRAIN_INIT, &[])),
        norm: if cfg.normalize {
            Normalizer::fit_for(cfg.head, train_x, train_y)
        } else {
            Normalizer::identity()
        },
        head: cfg.head,
    };
    let mut adam = AdamState::new(&sp.net, cfg.lr);
    let mut weights = cfg.init_weights;
    let mask = cfg.loss_mask;
    let n_windows = cfg.batch_total / cfg.window_len;
    let (w_lo, w_hi) = fold_interval(p.a);
    let prominence = cfg.prominence_frac * (w_hi - w_lo);
    let ic = train_x[0];
    let ic_state = [ic[0], ic[1]];

    let mut cache = EscapeCache { left_inputs: Vec::new(), right_inputs: Vec::new() };
    let mut report = TrainReport {
        losses: Vec::with_capacity(cfg.epochs as usize),
        evals: Vec::new(),
        best_epoch: 0,
        best_test_nrmse: f64::INFINITY,
        wall_secs: 0.0,
        config: cfg.clone(),
    };
    let mut best = sp.clone();

    let mut batch_x = Array2::zeros((cfg.batch_total, 3));
    let mut batch_targets: Vec<[f64; 2]> = vec![[0.0; 2]; cfg.batch_total];
    let mut batch_inputs: Vec<[f64; 3]> = vec![[0.0; 3]; cfg.batch_total];

    for epoch in 1..=cfg.epochs {
        if mask.phy2 && (epoch - 1) % cfg.phy2_every == 0 {
            let seed = master.derive(rng::tag::TRAIN_ROLLOUT, &[epoch]);
            let (v, w, inputs, _finite) = sp.rollout_states(
                State::new(ic[0], ic[1]),
                p.sigma,
                cfg.dt,
                cfg.phy2_rollout_len,
                seed,
            );
            // Event at series index i (past the initial state) was
            // produced by input row i - 1.
            let (lefts, rights) = extract_escape_points(&w[1..], &v[1..], p.a, prominence);
            cache.left_inputs = lefts.iter().map(|e| inputs[e.step]).collect();
            cache.right_inputs = rights.iter().map(|e| inputs[e.step]).collect();
        }

        // B consecutive windows of T one-step samples.
        let mut batch_rng = master.derive(rng::tag::TRAIN_BATCH, &[epoch]).rng();
        for wi in 0..n_windows {
            let start = batch_rng.random_range(0..train_x.len() - cfg.window_len + 1);
            for k in 0..cfg.window_len {
                let row = wi * cfg.window_len + k;
                batch_inputs[row] = train_x[start + k];
                batch_targets[row] = train_y[start + k];
                for j in 0..3 {
                    batch_x[[row, j]] = train_x[start + k][j];
                }
            }
        }

        let (preds, tape) = sp
            .predict(batch_x.view())
            .map_err(|e| at_epoch(e, epoch))?;

        let mut values = ComponentValues::default();
        let mut norms = ComponentValues::default();
        let mut total_grad = Gradients::zeros_like(&sp.net);
        let mut total_value = 0.0;

        let accumulate = |g: Gradients,
                              lambda: f64,
                              value: f64,
                              slot_v: &mut Option<f64>,
                              slot_n: &mut Option<f64>,
                              total_grad: &mut Gradients,
                              total_value: &mut f64| {
            *slot_v = Some(value);
            *slot_n = Some(g.norm());
            total_grad.scaled_add(lambda, &g);
            *total_value += lambda * value;
        };

        if mask.data {
            let (value, cot) = loss_data(preds.view(), &batch_targets);
            let g = sp.backward(&tape, cot)?;
            accumulate(g, weights.data, value, &mut values.data, &mut norms.data, &mut total_grad, &mut total_value);
        }
        if mask.ic {
            let x0 = Array2::from_shape_fn((1, 3), |(_, j)| ic[j]);
            let (out0, tape0) = sp.predict(x0.view()).map_err(|e| at_epoch(e, epoch))?;
            let (value, cot) = loss_ic([out0[[0, 0]], out0[[0, 1]]], ic_state);
            let g = sp.backward(&tape0, Array2::from_shape_vec((1, 2), cot.to_vec()).unwrap())?;
            accumulate(g, weights.ic, value, &mut values.ic, &mut norms.ic, &mut total_grad, &mut total_value);
        }
        if mask.phy1 {
            let (value, cot) = loss_phy1(&batch_inputs, preds.view(), &p, cfg.dt);
            let g = sp.backward(&tape, cot)?;
            accumulate(g, weights.phy1, value, &mut values.phy1, &mut norms.phy1, &mut total_grad, &mut total_value);
        }
        let mut n_events = (0, 0);
        if mask.phy2 {
            n_events = (cache.left_inputs.len(), cache.right_inputs.len());
            let all: Vec<[f64; 3]> =
                cache.left_inputs.iter().chain(&cache.right_inputs).copied().collect();
            if !all.is_empty() {
                let xe = Array2::from_shape_fn((all.len(), 3), |(i, j)| all[i][j]);
                let (out, tape_e) = sp.predict(xe.view()).map_err(|e| at_epoch(e, epoch))?;
                let n_left = cache.left_inputs.len();
                let wl: Vec<f64> = (0..n_left).map(|i| out[[i, 1]]).collect();
                let wr: Vec<f64> = (n_left..all.len()).map(|i| out[[i, 1]]).collect();
                if let Some((value, gl, gr)) = loss_phy2(&wl, &wr, p.a, p.sigma, p.eps) {
                    let mut cot = Array2::zeros((all.len(), 2));
                    for (i, g) in gl.iter().chain(&gr).enumerate() {
                        cot[[i, 1]] = *g;
                    }
                    let g = sp.backward(&tape_e, cot)?;
                    accumulate(g, weights.phy2, value, &mut values.phy2, &mut norms.phy2, &mut total_grad, &mut total_value);
                }
            }
        }

        if !total_value.is_finite() {
            return Err(Error::NonFinite { context: "composite loss", epoch: Some(epoch) });
        }
        if cfg.weight_adapt == WeightAdapt::GradNorm {
            weights = update_weights_dynamic(&norms, &weights);
        }
        adam.step(&mut sp.net, &total_grad)?;

        report.losses.push(EpochRecord {
            epoch,
            total: total_value,
            values,
            weights,
            n_escape_events: n_events,
        });

        if epoch % cfg.eval_every == 0 || epoch == cfg.epochs {
            let train_nrmse = evaluate_nrmse(&sp, train_x, train_y).map_err(|e| at_epoch(e, epoch))?;
            let test_nrmse = evaluate_nrmse(&sp, test_x, test_y).map_err(|e| at_epoch(e, epoch))?;
            report.evals.push(EvalRecord { epoch, train_nrmse, test_nrmse });
            if test_nrmse < report.best_test_nrmse {
                report.best_test_nrmse = test_nrmse;
                report.best_epoch = epoch;
                best = sp.clone();
            }
        }
    }
    report.wall_secs = t_start.elapsed().as_secs_f64();
    Ok((best, report))
}

fn at_epoch(e: Error, epoch: u64) -> Error {
    match e {
        Error::NonFinite { context, .. } => Error::NonFinite { context, epoch: Some(epoch) },
        other => other,
    }
}

/// One row of the loss-ablation table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub mask: LossMask,
    pub train_nrmse: Option<f64>,
    pub test_nrmse: Option<f64>,
    pub best_epoch: Option<u64>,
    pub error: Option<String>,
}

/// Trained variants plus the table; failed variants keep their error and
/// do not stop the others.
pub struct AblationOutcome {
    pub rows: Vec<AblationRow>,
    pub reports: Vec<Option<TrainReport>>,
    pub predictors: Vec<Option<StatePredictor>>,
}

/// The four benchmark loss combinations.
pub const ABLATION_MASKS: [LossMask; 4] =
    [LossMask::DATA_ONLY, LossMask::DATA_IC_PHY1, LossMask::DATA_PHY2, LossMask::FULL];

/// Train the four ablation variants with identical seed and data.
pub fn run_ablation(base_cfg: &TrainConfig, ds: &Dataset) -> AblationOutcome {
    let results: Vec<_> = ABLATION_MASKS
        .par_iter()
        .map(|&mask| {
            let cfg = TrainConfig { loss_mask: mask, ..base_cfg.clone() };
            (mask, train(&cfg, ds))
        })
        .collect();
    let mut out = AblationOutcome { rows: Vec::new(), reports: Vec::new(), predictors: Vec::new() };
    for (mask, res) in results {
        match res {
            Ok((sp, rep)) => {
                let train_nrmse = rep
                    .evals
                    .iter()
                    .find(|e| e.epoch == rep.best_epoch)
                    .map(|e| e.train_nrmse);
                out.rows.push(AblationRow {
                    label: mask.label(),
                    mask,
                    train_nrmse,
                    test_nrmse: Some(rep.best_test_nrmse),
                    best_epoch: Some(rep.best_epoch),
                    error: None,
                });
                out.reports.push(Some(rep));
                out.predictors.push(Some(sp));
            }
            Err(e) => {
                out.rows.push(AblationRow {
                    label: mask.label(),
                    mask,
                    train_nrmse: None,
                    test_nrmse: None,
                    best_epoch: None,
                    error: Some(e.to_string()),
                });
                out.reports.push(None);
                out.predictors.push(None);
            }
        }
    }
    out
}
