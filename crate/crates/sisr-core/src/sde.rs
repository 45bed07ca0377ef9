//! Euler-Maruyama integration of the stochastic FHN system and of the
//! frozen-`w` Langevin equation, plus training-dataset packaging.
//!
//! The discretization of the full system is
//!
//! ```text
//! v[k+1] = v[k] + f(v[k], w[k]) dt + sigma sqrt(dt) xi[k],  xi ~ N(0,1)
//! w[k+1] = w[k] + g(v[k], w[k]) dt
//! ```
//!
//! Every trajectory records the unit-variance draws `xi[k]`, so replaying
//! the stored noise through [`em_step`] reconstructs the path bit-exactly;
//! the physics-informed training losses consume the same realization that
//! produced the data.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fhn::{vector_field, ModelParams, State};
use crate::potential::{nullcline_roots, Branch};
use crate::rng::{self, StreamSeed};
use crate::{Error, Result};

/// Divergence guard: the cubic nonlinearity blows up under too-large `dt`.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// One Euler-Maruyama step; the single definition of the update rule used
/// by the integrator, the replay check, and the dataset consumers.
#[inline]
pub fn em_step(p: &ModelParams, s: State, xi: f64, dt: f64, sqrt_dt: f64) -> State {
    let (f, g) = vector_field(s, p);
    State { v: s.v + f * dt + p.sigma * sqrt_dt * xi, w: s.w + g * dt }
}

/// A discretized sample path with its realized noise draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub t0: f64,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    /// Unit-variance draws; `noise[k]` steps sample `k` to `k + 1`. Same
    /// length as `v`/`w` with a zero pad in the last slot.
    pub noise: Vec<f64>,
    pub seed: StreamSeed,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn time_at(&self, k: usize) -> f64 {
        self.t0 + self.dt * k as f64
    }
}

/// Resumable Euler-Maruyama integrator owning its noise stream.
pub struct Integrator {
    pub params: ModelParams,
    pub dt: f64,
    pub state: State,
    pub steps_done: u64,
    sqrt_dt: f64,
    rng: rand_chacha::ChaCha8Rng,
}

impl Integrator {
    pub fn new(params: ModelParams, init: State, dt: f64, seed: StreamSeed) -> Self {
        Self { params, dt, state: init, steps_done: 0, sqrt_dt: dt.sqrt(), rng: seed.rng() }
    }

    /// Advance one step; returns the new state and the draw that produced it.
    pub fn step(&mut self) -> Result<(State, f64)> {
        let xi: f64 = StandardNormal.sample(&mut self.rng);
        let next = em_step(&self.params, self.state, xi, self.dt, self.sqrt_dt);
        self.steps_done += 1;
        if !(next.v.abs() <= DIVERGENCE_LIMIT && next.w.abs() <= DIVERGENCE_LIMIT) {
            return Err(Error::Diverged {
                step: self.steps_done as usize,
                limit: DIVERGENCE_LIMIT,
            });
        }
        self.state = next;
        Ok((next, xi))
    }
}

/// Integrate `n_steps` of the full system. Identical `(params, init, dt,
/// n_steps, seed)` give bit-identical output.
pub fn integrate(
    p: &ModelParams,
    init: State,
    dt: f64,
    n_steps: usize,
    seed: StreamSeed,
) -> Result<Trajectory> {
    assert!(dt > 0.0, "dt must be positive");
    assert!(n_steps >= 1, "n_steps must be >= 1");
    let mut it = Integrator::new(*p, init, dt, seed);
    let mut v = Vec::with_capacity(n_steps + 1);
    let mut w = Vec::with_capacity(n_steps + 1);
    let mut noise = Vec::with_capacity(n_steps + 1);
    v.push(init.v);
    w.push(init.w);
    for _ in 0..n_steps {
        let (s, xi) = it.step()?;
        noise.push(xi);
        v.push(s.v);
        w.push(s.w);
    }
    noise.push(0.0);
    Ok(Trajectory { dt, t0: 0.0, v, w, noise, seed })
}

/// Monte-Carlo mean escape time of the frozen-`w` Langevin equation.
///
/// Each sample starts at the bottom of the chosen well and runs
/// `dv = (v(a - v)(v - 1) - w) dt + sigma sqrt(dt) xi` until it commits to
/// the opposite well (reaches the far well minimum, i.e. has crossed the
/// saddle and descended the other side). This is the brute-force oracle
/// for the Arrhenius time `tau = exp(2 dU / sigma^2) / c` of
/// [`crate::potential::barriers`]; absorbing at the far minimum rather
/// than at the saddle itself matches that rate (a path at the saddle still
/// recrosses half the time). Returns `(mean, standard error)`.
pub fn frozen_w_escape_time(
    w: f64,
    a: f64,
    sigma: f64,
    dt: f64,
    seed: StreamSeed,
    n_samples: usize,
    start: Branch,
    max_steps: usize,
) -> Result<(f64, f64)> {
    assert!(n_samples >= 1);
    let roots = nullcline_roots(w, a)?;
    let (v_start, v_absorb) = match start {
        Branch::Left => (roots.v_left, roots.v_right),
        Branch::Right => (roots.v_right, roots.v_left),
    };
    let sqrt_dt = dt.sqrt();
    let times: Vec<Result<f64>> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed.derive(rng::tag::ESCAPE, &[i as u64]).rng();
            let mut v = v_start;
            for k in 0..max_steps {
                let drift = v * (a - v) * (v - 1.0) - w;
                let xi: f64 = StandardNormal.sample(&mut rng);
                v += drift * dt + sigma * sqrt_dt * xi;
                let absorbed = match start {
                    Branch::Left => v >= v_absorb,
                    Branch::Right => v <= v_absorb,
                };
                if absorbed {
                    return Ok((k + 1) as f64 * dt);
                }
            }
            Err(Error::Timeout { sample: i, max_steps })
        })
        .collect();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for t in &times {
        match t {
            Ok(t) => {
                sum += t;
                sum_sq += t * t;
            }
            Err(_) => {
                return Err(Error::Timeout { sample: times.len(), max_steps });
            }
        }
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    let stderr = if n_samples > 1 { (var / (n - 1.0)).sqrt() } else { f64::INFINITY };
    Ok((mean, stderr))
}

/// One-step training corpus: `(v, w, noise-increment)` triplets mapped to
/// the next state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// `(v[k], w[k], sigma sqrt(dt) xi[k])` per sample.
    pub inputs: Vec<[f64; 3]>,
    /// `(v[k+1], w[k+1])` per sample.
    pub targets: Vec<[f64; 2]>,
    pub params: ModelParams,
    /// Chronological train/test boundary: `inputs[..split]` is training.
    pub split: usize,
    pub dt: f64,
    pub seed: StreamSeed,
    pub burn_in: usize,
    pub init: State,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn train(&self) -> (&[[f64; 3]], &[[f64; 2]]) {
        (&self.inputs[..self.split], &self.targets[..self.split])
    }

    pub fn test(&self) -> (&[[f64; 3]], &[[f64; 2]]) {
        (&self.inputs[self.split..], &self.targets[self.split..])
    }
}

/// Simulate and package `n_points` aligned one-step pairs.
///
/// The first `burn_in` steps are integrated and discarded so the corpus
/// starts past the initial transient. The split is chronological: the
/// first `split_fraction` of the samples train, the rest test.
pub fn make_dataset(
    p: &ModelParams,
    init: State,
    dt: f64,
    n_points: usize,
    seed: StreamSeed,
    split_fraction: f64,
    burn_in: usize,
) -> Result<Dataset> {
    if !(split_fraction > 0.0 && split_fraction < 1.0) {
        return Err(Error::InvalidParam(format!(
            "split_fraction must be in (0, 1), got {split_fraction}"
        )));
    }
    let traj = integrate(p, init, dt, burn_in + n_points, seed)?;
    let sqrt_dt = dt.sqrt();
    let mut inputs = Vec::with_capacity(n_points);
    let mut targets = Vec::with_capacity(n_points);
    for k in burn_in..burn_in + n_points {
        inputs.push([traj.v[k], traj.w[k], p.sigma * sqrt_dt * traj.noise[k]]);
        targets.push([traj.v[k + 1], traj.w[k + 1]]);
    }
    let split = (split_fraction * n_points as f64).round() as usize;
    Ok(Dataset { inputs, targets, params: *p, split, dt, seed, burn_in, init })
}
