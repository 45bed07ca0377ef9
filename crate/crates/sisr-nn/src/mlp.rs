//! Dense tanh network with define-by-run reverse-mode gradients.
//!
//! The stack is `affine -> tanh` on hidden layers and a bare affine head.
//! [`NetworkParams::forward`] records post-activation values on a
//! [`Tape`]; [`NetworkParams::backward`] turns an output cotangent into
//! exact parameter gradients of `<cotangent, outputs>`. Losses supply
//! their own cotangents, so any composition of scalar losses of the
//! outputs backpropagates through the same two routines.
//!
//! # Checkpoint format
//!
//! Little-endian binary, stable across versions:
//!
//! ```text
//! offset  size  field
//! 0       8     magic b"SISRCKPT"
//! 8       4     format version (u32, currently 1)
//! 12      8     header length H (u64)
//! 20      H     header: UTF-8 JSON (layer_sizes, seed, epoch, metrics,
//!               normalizer)
//! 20+H    8*P   parameters: f64 array, layers in order, each as
//!               row-major weight matrix (in x out) then bias vector
//! ```

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sisr_core::rng::StreamSeed;

use crate::pinn::{HeadMode, Normalizer};
use crate::{Error, Result};

/// NASP architecture: `(v, w, sigma eta)` in, three 128-unit tanh blocks,
/// linear head out to `(v_hat, w_hat)`.
pub const NASP_LAYERS: [usize; 5] = [3, 128, 128, 128, 2];

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `fan_in x fan_out`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Network weights and biases.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub layer_sizes: Vec<usize>,
    pub layers: Vec<Layer>,
}

/// Post-activation values of one forward pass, enough for an exact
/// reverse sweep.
#[derive(Debug, Clone)]
pub struct Tape {
    /// Batch inputs, then hidden activations per tanh layer.
    activations: Vec<Array2<f64>>,
}

impl Tape {
    pub fn batch_len(&self) -> usize {
        self.activations[0].nrows()
    }
}

/// Parameter-shaped gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(net: &NetworkParams) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| Layer { w: Array2::zeros(l.w.raw_dim()), b: Array1::zeros(l.b.raw_dim()) })
                .collect(),
        }
    }

    pub fn scaled_add(&mut self, lambda: f64, other: &Gradients) {
        for (dst, src) in self.layers.iter_mut().zip(&other.layers) {
            dst.w.scaled_add(lambda, &src.w);
            dst.b.scaled_add(lambda, &src.b);
        }
    }

    /// Euclidean norm over all entries.
    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.w.iter().map(|x| x * x).sum::<f64>() + l.b.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }
}

impl NetworkParams {
    /// Glorot-uniform weights, zero biases; bit-reproducible per seed.
    pub fn init(layer_sizes: &[usize], seed: StreamSeed) -> Self {
        assert!(layer_sizes.len() >= 2, "need at least input and output layers");
        let mut rng = seed.rng();
        let layers = layer_sizes
            .windows(2)
            .map(|io| {
                let (fan_in, fan_out) = (io[0], io[1]);
                let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let w = Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-s..s));
                Layer { w, b: Array1::zeros(fan_out) }
            })
            .collect();
        Self { layer_sizes: layer_sizes.to_vec(), layers }
    }

    /// The full-size NASP network.
    pub fn nasp(seed: StreamSeed) -> Self {
        Self::init(&NASP_LAYERS, seed)
    }

    pub fn n_inputs(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    fn check_inputs(&self, inputs: &ArrayView2<f64>) -> Result<()> {
        if inputs.ncols() != self.n_inputs() || inputs.nrows() == 0 {
            return Err(Error::ShapeMismatch {
                expected: format!("nonempty batch x {}", self.n_inputs()),
                got: format!("{} x {}", inputs.nrows(), inputs.ncols()),
            });
        }
        Ok(())
    }

    /// Forward pass over a batch, recording the tape.
    pub fn forward(&self, inputs: ArrayView2<f64>) -> Result<(Array2<f64>, Tape)> {
        self.check_inputs(&inputs)?;
        let mut activations = vec![inputs.to_owned()];
        let mut h = inputs.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.w) + &layer.b;
            if i + 1 < self.layers.len() {
                z.mapv_inplace(f64::tanh);
                activations.push(z.clone());
            }
            h = z;
        }
        if !h.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite { context: "forward activations", epoch: None });
        }
        Ok((h, Tape { activations }))
    }

    /// Forward pass without tape bookkeeping, for inference and rollouts.
    pub fn infer(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_inputs(&inputs)?;
        let mut h = inputs.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            h = h.dot(&layer.w) + &layer.b;
            if i + 1 < self.layers.len() {
                h.mapv_inplace(f64::tanh);
            }
        }
        if !h.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite { context: "forward activations", epoch: None });
        }
        Ok(h)
    }

    /// Exact gradients of `<cotangent, outputs>` with respect to every
    /// parameter, from a completed forward tape.
    pub fn backward(&self, tape: &Tape, cotangent: ArrayView2<f64>) -> Result<Gradients> {
        if cotangent.nrows() != tape.batch_len() || cotangent.ncols() != self.n_outputs() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} x {}", tape.batch_len(), self.n_outputs()),
                got: format!("{} x {}", cotangent.nrows(), cotangent.ncols()),
            });
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = cotangent.to_owned();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let a_in = &tape.activations[i];
            let gw = a_in.t().dot(&g);
            let gb = g.sum_axis(Axis(0));
            if i > 0 {
                // d tanh = 1 - tanh^2, from the recorded post-activation.
                g = g.dot(&layer.w.t()) * tape.activations[i].mapv(|t| 1.0 - t * t);
            }
            grads.push(Layer { w: gw, b: gb });
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }
}

/// Adam moments and hyperparameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
    pub step_count: u64,
    first_moment: Gradients,
    second_moment: Gradients,
}

impl AdamState {
    pub fn new(net: &NetworkParams, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
            step_count: 0,
            first_moment: Gradients::zeros_like(net),
            second_moment: Gradients::zeros_like(net),
        }
    }

    /// Standard bias-corrected Adam update.
    pub fn step(&mut self, net: &mut NetworkParams, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != net.layers.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} layers", net.layers.len()),
                got: format!("{} layers", grads.layers.len()),
            });
        }
        self.step_count += 1;
        let h = Hyper {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps_hat: self.eps_hat,
            c1: 1.0 - self.beta1.powi(self.step_count as i32),
            c2: 1.0 - self.beta2.powi(self.step_count as i32),
        };
        for ((p, g), (m, v)) in net
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(self.first_moment.layers.iter_mut().zip(&mut self.second_moment.layers))
        {
            if p.w.raw_dim() != g.w.raw_dim() || p.b.raw_dim() != g.b.raw_dim() {
                return Err(Error::ShapeMismatch {
                    expected: format!("{:?}", p.w.raw_dim()),
                    got: format!("{:?}", g.w.raw_dim()),
                });
            }
            azip_update(&mut m.w, &mut v.w, &g.w, &mut p.w, h);
            azip_update_1d(&mut m.b, &mut v.b, &g.b, &mut p.b, h);
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
struct Hyper {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps_hat: f64,
    c1: f64,
    c2: f64,
}

fn azip_update(m: &mut Array2<f64>, v: &mut Array2<f64>, g: &Array2<f64>, p: &mut Array2<f64>, h: Hyper) {
    ndarray::azip!((m in m, v in v, &g in g, p in p) {
        *m = h.beta1 * *m + (1.0 - h.beta1) * g;
        *v = h.beta2 * *v + (1.0 - h.beta2) * g * g;
        *p -= h.lr * (*m / h.c1) / ((*v / h.c2).sqrt() + h.eps_hat);
    });
}

fn azip_update_1d(m: &mut Array1<f64>, v: &mut Array1<f64>, g: &Array1<f64>, p: &mut Array1<f64>, h: Hyper) {
    ndarray::azip!((m in m, v in v, &g in g, p in p) {
        *m = h.beta1 * *m + (1.0 - h.beta1) * g;
        *v = h.beta2 * *v + (1.0 - h.beta2) * g * g;
        *p -= h.lr * (*m / h.c1) / ((*v / h.c2).sqrt() + h.eps_hat);
    });
}

const CKPT_MAGIC: &[u8; 8] = b"SISRCKPT";
const CKPT_VERSION: u32 = 1;

/// Checkpoint header; see the module docs for the byte layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub layer_sizes: Vec<usize>,
    pub seed: StreamSeed,
    pub epoch: u64,
    #[serde(default)]
    pub metrics: serde_json::Value,
    #[serde(default)]
    pub normalizer: Option<Normalizer>,
    #[serde(default)]
    pub head: HeadMode,
}

/// Serialize header plus flat parameter array.
pub fn save_checkpoint(path: &std::path::Path, net: &NetworkParams, header: &CheckpointHeader) -> Result<()> {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(CKPT_MAGIC);
    bytes.extend_from_slice(&CKPT_VERSION.to_le_bytes());
    let header_json =
        serde_json::to_vec(header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    bytes.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&header_json);
    for layer in &net.layers {
        for &x in layer.w.iter() {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        for &x in layer.b.iter() {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &std::path::Path) -> Result<(NetworkParams, CheckpointHeader)> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 20 || &bytes[..8] != CKPT_MAGIC {
        return Err(Error::Checkpoint(format!("{}: not a checkpoint file", path.display())));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CKPT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let header: CheckpointHeader = serde_json::from_slice(
        bytes.get(20..20 + hlen).ok_or_else(|| Error::Checkpoint("truncated header".into()))?,
    )
    .map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut net = NetworkParams::init(&header.layer_sizes, StreamSeed::new(0, 0));
    let expected = net.param_count();
    let body = &bytes[20 + hlen..];
    if body.len() != expected * 8 {
        return Err(Error::Checkpoint(format!(
            "parameter block holds {} bytes, expected {}",
            body.len(),
            expected * 8
        )));
    }
    let mut it = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    for layer in &mut net.layers {
        for x in layer.w.iter_mut() {
            *x = it.next().unwrap();
        }
        for x in layer.b.iter_mut() {
            *x = it.next().unwrap();
        }
    }
    Ok((net, header))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn seed(s: u64) -> StreamSeed {
        StreamSeed::new(42, s)
    }

    #[test]
    fn init_is_deterministic() {
        let a = NetworkParams::nasp(seed(0));
        let b = NetworkParams::nasp(seed(0));
        assert_eq!(a, b);
        let c = NetworkParams::nasp(seed(1));
        assert_ne!(a, c);
    }

    #[test]
    fn nasp_parameter_count() {
        let net = NetworkParams::nasp(seed(0));
        // (3*128 + 128) + 2*(128*128 + 128) + (128*2 + 2)
        assert_eq!(net.param_count(), 33_794);
    }

    #[test]
    fn init_respects_glorot_bounds() {
        let net = NetworkParams::nasp(seed(0));
        for layer in &net.layers {
            let (fan_in, fan_out) = (layer.w.nrows(), layer.w.ncols());
            let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
            assert!(layer.w.iter().all(|x| x.abs() <= s));
            assert!(layer.b.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut net = NetworkParams::init(&[3, 8, 2], seed(0));
        for l in &mut net.layers {
            l.w.fill(0.0);
        }
        let (out, _) = net.forward(array![[0.3, -0.2, 0.05]].view()).unwrap();
        assert_eq!(out, array![[0.0, 0.0]]);
    }

    #[test]
    fn forward_matches_independent_reimplementation() {
        let net = NetworkParams::init(&[3, 5, 4, 2], seed(3));
        let x = [0.1, 0.0, 0.01];
        // Plain nested-loop forward, no ndarray.
        let mut h: Vec<f64> = x.to_vec();
        for (i, layer) in net.layers.iter().enumerate() {
            let mut z = vec![0.0; layer.b.len()];
            for (j, zj) in z.iter_mut().enumerate() {
                *zj = layer.b[j];
                for (k, &hk) in h.iter().enumerate() {
                    *zj += hk * layer.w[[k, j]];
                }
                if i + 1 < net.layers.len() {
                    *zj = zj.tanh();
                }
            }
            h = z;
        }
        let (out, _) = net.forward(array![[x[0], x[1], x[2]]].view()).unwrap();
        assert!((out[[0, 0]] - h[0]).abs() < 1e-12);
        assert!((out[[0, 1]] - h[1]).abs() < 1e-12);
    }

    #[test]
    fn batch_row_equals_single_row() {
        let net = NetworkParams::init(&[3, 16, 2], seed(5));
        let batch = array![[0.1, 0.2, 0.0], [-0.4, 0.05, 0.02], [1.0, -1.0, 0.5]];
        let (out, _) = net.forward(batch.view()).unwrap();
        for (i, row) in batch.axis_iter(Axis(0)).enumerate() {
            let single = row.insert_axis(Axis(0));
            let (o1, _) = net.forward(single).unwrap();
            assert_eq!(o1.row(0), out.row(i));
        }
    }

    #[test]
    fn infer_equals_forward() {
        let net = NetworkParams::init(&[3, 16, 8, 2], seed(6));
        let batch = array![[0.1, 0.2, 0.0], [-0.4, 0.05, 0.02]];
        let (out, _) = net.forward(batch.view()).unwrap();
        assert_eq!(net.infer(batch.view()).unwrap(), out);
    }

    #[test]
    fn gradcheck_against_central_differences() {
        let net = NetworkParams::init(&[3, 8, 8, 2], seed(7));
        let x = array![[0.3, -0.1, 0.02], [0.05, 0.02, -0.01]];
        let cot = array![[0.7, -0.3], [1.1, 0.4]];
        let (_, tape) = net.forward(x.view()).unwrap();
        let grads = net.backward(&tape, cot.view()).unwrap();

        let scalar = |n: &NetworkParams| -> f64 {
            let (o, _) = n.forward(x.view()).unwrap();
            (o * &cot).sum()
        };
        let h = 1e-6;
        let mut rng = seed(8).rng();
        let mut checked = 0;
        while checked < 100 {
            let li = rng.random_range(0..net.layers.len());
            let (rows, cols) = (net.layers[li].w.nrows(), net.layers[li].w.ncols());
            let idx = (rng.random_range(0..rows), rng.random_range(0..cols));
            let mut plus = net.clone();
            plus.layers[li].w[idx] += h;
            let mut minus = net.clone();
            minus.layers[li].w[idx] -= h;
            let fd = (scalar(&plus) - scalar(&minus)) / (2.0 * h);
            let an = grads.layers[li].w[idx];
            let rel = (fd - an).abs() / an.abs().max(1e-8);
            assert!(rel < 1e-5, "layer {li} idx {idx:?}: fd {fd} vs {an}");
            checked += 1;
        }
        // And the biases, layer by layer.
        for li in 0..net.layers.len() {
            for j in 0..net.layers[li].b.len() {
                let mut plus = net.clone();
                plus.layers[li].b[j] += h;
                let mut minus = net.clone();
                minus.layers[li].b[j] -= h;
                let fd = (scalar(&plus) - scalar(&minus)) / (2.0 * h);
                let an = grads.layers[li].b[j];
                assert!((fd - an).abs() / an.abs().max(1e-8) < 1e-5);
            }
        }
    }

    #[test]
    fn zero_cotangent_zero_gradients_and_linearity() {
        let net = NetworkParams::init(&[3, 8, 2], seed(9));
        let x = array![[0.3, -0.1, 0.02]];
        let (_, tape) = net.forward(x.view()).unwrap();
        let zero = net.backward(&tape, array![[0.0, 0.0]].view()).unwrap();
        assert!(zero.layers.iter().all(|l| l.w.iter().all(|&g| g == 0.0)));

        let g1 = net.backward(&tape, array![[0.5, -0.2]].view()).unwrap();
        let g3 = net.backward(&tape, array![[1.5, -0.6]].view()).unwrap();
        for (a, b) in g1.layers.iter().zip(&g3.layers) {
            for (x, y) in a.w.iter().zip(b.w.iter()) {
                assert!((3.0 * x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_mismatches_rejected() {
        let net = NetworkParams::init(&[3, 8, 2], seed(10));
        assert!(net.forward(array![[0.1, 0.2]].view()).is_err());
        let (_, tape) = net.forward(array![[0.1, 0.2, 0.3]].view()).unwrap();
        assert!(net.backward(&tape, array![[0.1, 0.2, 0.3]].view()).is_err());
        let wrong = NetworkParams::init(&[3, 4, 2], seed(10));
        let grads = Gradients::zeros_like(&wrong);
        let mut net = net;
        let mut adam = AdamState::new(&net, 1e-3);
        assert!(adam.step(&mut net, &grads).is_err());
    }

    #[test]
    fn adam_zero_grad_keeps_params() {
        let mut net = NetworkParams::init(&[3, 8, 2], seed(11));
        let before = net.clone();
        let zeros = Gradients::zeros_like(&net);
        let mut adam = AdamState::new(&net, 1e-3);
        adam.step(&mut net, &zeros).unwrap();
        assert_eq!(net, before);
        assert_eq!(adam.step_count, 1);
    }

    #[test]
    fn adam_first_step_closed_form() {
        let mut net = NetworkParams::init(&[2, 2], seed(12));
        net.layers[0].w.fill(0.0);
        let mut grads = Gradients::zeros_like(&net);
        grads.layers[0].w.fill(0.25);
        let mut adam = AdamState::new(&net, 1e-3);
        adam.step(&mut net, &grads).unwrap();
        // After bias correction the first update is -lr * g / (|g| + eps).
        let expected = -1e-3 * 0.25 / (0.25 + 1e-8);
        for &x in net.layers[0].w.iter() {
            assert!((x - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_minimizes_quadratic_bowl() {
        // Minimize ||W - T||^2 for a fixed target using adam_step only.
        let mut net = NetworkParams::init(&[4, 3], seed(13));
        let target = NetworkParams::init(&[4, 3], seed(14));
        let mut adam = AdamState::new(&net, 1e-2);
        for _ in 0..2000 {
            let mut grads = Gradients::zeros_like(&net);
            grads.layers[0].w = 2.0 * (&net.layers[0].w - &target.layers[0].w);
            grads.layers[0].b = 2.0 * (&net.layers[0].b - &target.layers[0].b);
            adam.step(&mut net, &grads).unwrap();
        }
        let loss: f64 = (&net.layers[0].w - &target.layers[0].w).iter().map(|x| x * x).sum();
        assert!(loss < 1e-6, "loss = {loss}");
    }

    #[test]
    fn checkpoint_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let net = NetworkParams::init(&[3, 16, 8, 2], seed(15));
        let header = CheckpointHeader {
            layer_sizes: net.layer_sizes.clone(),
            seed: seed(15),
            epoch: 123,
            metrics: serde_json::json!({"test_nrmse": 0.05}),
            normalizer: None,
            head: HeadMode::Delta,
        };
        save_checkpoint(&path, &net, &header).unwrap();
        let (loaded, h2) = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, net);
        assert_eq!(h2.epoch, 123);
        assert_eq!(h2.layer_sizes, net.layer_sizes);
        assert_eq!(h2.head, HeadMode::Delta);
    }

    #[test]
    fn checkpoint_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"definitely not a checkpoint").unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
