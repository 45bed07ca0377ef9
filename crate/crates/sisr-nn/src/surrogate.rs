//! Open-loop evaluation of a trained predictor: free rollouts, predicted
//! coherence curves, and comparison against direct simulation.
//!
//! Rollouts feed the network its own predictions with fresh noise
//! increments, probing long-horizon stability rather than memorization.
//! The boundedness box `|v| <= 2, |w| <= 1` is a generous margin around
//! the physical excursion range (`v` in roughly [-0.4, 1.2], `w` inside
//! the fold interval).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use sisr_core::fhn::State;
use sisr_core::rng::{self, StreamSeed};
use sisr_core::spikes::{detect_spikes_in, isi_cv, CvCurve, PointStatus, SpikeStatistics};

use crate::pinn::StatePredictor;
use crate::{Error, Result};

/// Rollout boundedness box.
pub const V_BOUND: f64 = 2.0;
pub const W_BOUND: f64 = 1.0;

/// A free-running predicted trajectory with its spike statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolloutResult {
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub dt: f64,
    pub seed: StreamSeed,
    /// Stayed finite and inside the box for the whole horizon.
    pub bounded: bool,
    pub stats: SpikeStatistics,
}

/// Roll the predictor forward `n_steps` with fresh noise at intensity
/// `sigma`. A non-finite prediction halts the rollout and marks it
/// unbounded.
pub fn rollout(
    sp: &StatePredictor,
    init: State,
    sigma: f64,
    dt: f64,
    n_steps: usize,
    seed: StreamSeed,
    v_th: f64,
) -> RolloutResult {
    assert!(n_steps >= 1);
    let (v, w, _inputs, finite) = sp.rollout_states(init, sigma, dt, n_steps, seed);
    let in_box = v.iter().all(|x| x.abs() <= V_BOUND) && w.iter().all(|x| x.abs() <= W_BOUND);
    let bounded = finite && v.len() == n_steps + 1 && in_box;
    let stats = isi_cv(&detect_spikes_in(&v, dt, 0.0, v_th));
    RolloutResult { v, w, dt, seed, bounded, stats }
}

/// Surrogate CV-versus-noise curve from independent rollouts per grid
/// point, in the same container as the simulated sweeps.
pub fn predicted_cv_curve(
    sp: &StatePredictor,
    base: &sisr_core::ModelParams,
    sigma_grid: &[f64],
    init: State,
    dt: f64,
    n_steps: usize,
    min_spikes: usize,
    v_th: f64,
    seed: StreamSeed,
) -> Result<CvCurve> {
    if sigma_grid.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Error::InvalidConfig("sigma_grid must be strictly increasing".into()));
    }
    let points: Vec<(Option<f64>, usize, PointStatus)> = sigma_grid
        .par_iter()
        .map(|&sigma| {
            let point_seed = seed.derive(rng::tag::EVAL_ROLLOUT, &[rng::salt(sigma)]);
            let r = rollout(sp, init, sigma, dt, n_steps, point_seed, v_th);
            let status = if !r.bounded {
                PointStatus::Diverged
            } else if r.stats.n_spikes < min_spikes {
                PointStatus::BudgetExceeded
            } else {
                PointStatus::Converged
            };
            let cv = if status == PointStatus::Converged { r.stats.cv } else { None };
            (cv, r.stats.n_spikes, status)
        })
        .collect();
    let mut curve = CvCurve {
        sigma_grid: sigma_grid.to_vec(),
        cv_values: Vec::new(),
        n_spikes_per_point: Vec::new(),
        statuses: Vec::new(),
        params: *base,
    };
    for (cv, n, st) in points {
        curve.cv_values.push(cv);
        curve.n_spikes_per_point.push(n);
        curve.statuses.push(st);
    }
    Ok(curve)
}

/// Per-point comparison entry; `delta` is `None` when either side is a
/// sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub sigma: f64,
    pub simulated: Option<f64>,
    pub predicted: Option<f64>,
    pub delta: Option<f64>,
}

/// Simulation-versus-surrogate curve report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveComparison {
    pub points: Vec<CurvePoint>,
    /// Largest |CV difference| over points defined on both sides.
    pub max_abs_delta: Option<f64>,
    /// Surrogate argmin index minus simulated argmin index.
    pub argmin_shift: Option<i64>,
    pub simulated_argmin_sigma: Option<f64>,
    pub predicted_argmin_sigma: Option<f64>,
}

/// Compare two CV curves on an identical noise grid, skipping sentinel
/// points on either side.
pub fn compare_curves(simulated: &CvCurve, predicted: &CvCurve) -> Result<CurveComparison> {
    if simulated.sigma_grid != predicted.sigma_grid {
        return Err(Error::GridMismatch);
    }
    let mut points = Vec::with_capacity(simulated.sigma_grid.len());
    let mut max_abs_delta: Option<f64> = None;
    for (i, &sigma) in simulated.sigma_grid.iter().enumerate() {
        let s = simulated.cv_values[i];
        let p = predicted.cv_values[i];
        let delta = match (s, p) {
            (Some(a), Some(b)) => {
                let d = b - a;
                max_abs_delta = Some(max_abs_delta.map_or(d.abs(), |m: f64| m.max(d.abs())));
                Some(d)
            }
            _ => None,
        };
        points.push(CurvePoint { sigma, simulated: s, predicted: p, delta });
    }
    let sim_min = simulated.min_point();
    let pred_min = predicted.min_point();
    let argmin_shift = match (sim_min, pred_min) {
        (Some((i, _)), Some((j, _))) => Some(j as i64 - i as i64),
        _ => None,
    };
    Ok(CurveComparison {
        points,
        max_abs_delta,
        argmin_shift,
        simulated_argmin_sigma: sim_min.map(|(i, _)| simulated.sigma_grid[i]),
        predicted_argmin_sigma: pred_min.map(|(i, _)| predicted.sigma_grid[i]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::NetworkParams;
    use sisr_core::ModelParams;

    fn zero_predictor() -> StatePredictor {
        let mut net = NetworkParams::init(&[3, 8, 2], StreamSeed::new(1, 0));
        for l in &mut net.layers {
            l.w.fill(0.0);
        }
        StatePredictor::new(net)
    }

    #[test]
    fn zero_net_rolls_out_flat() {
        let r = rollout(&zero_predictor(), State::origin(), 0.05, 0.05, 500, StreamSeed::new(2, 0), 0.4);
        assert!(r.bounded);
        assert_eq!(r.stats.n_spikes, 0);
        assert!(r.v.iter().all(|&x| x == 0.0));
        assert_eq!(r.v.len(), 501);
    }

    #[test]
    fn rollout_is_deterministic() {
        let sp = StatePredictor::new(NetworkParams::init(&[3, 8, 2], StreamSeed::new(3, 0)));
        let s = StreamSeed::new(4, 9);
        let a = rollout(&sp, State::origin(), 0.05, 0.05, 300, s, 0.4);
        let b = rollout(&sp, State::origin(), 0.05, 0.05, 300, s, 0.4);
        assert_eq!(a.v, b.v);
        assert_eq!(a.w, b.w);
    }

    #[test]
    fn unbounded_rollout_flagged_and_monotone() {
        // A head bias beyond the box makes every prediction escape it.
        let mut net = NetworkParams::init(&[3, 4, 2], StreamSeed::new(5, 0));
        for l in &mut net.layers {
            l.w.fill(0.0);
        }
        net.layers.last_mut().unwrap().b[0] = 5.0;
        let sp = StatePredictor::new(net);
        let s = StreamSeed::new(6, 0);
        let short = rollout(&sp, State::origin(), 0.05, 0.05, 10, s, 0.4);
        assert!(!short.bounded);
        let long = rollout(&sp, State::origin(), 0.05, 0.05, 100, s, 0.4);
        assert!(!long.bounded);
    }

    #[test]
    fn comparison_rejects_grid_mismatch_and_masks_sentinels() {
        let p = ModelParams::new(0.05, 1.0, 2.0, 0.005, 0.0).unwrap();
        let mk = |cvs: Vec<Option<f64>>, grid: Vec<f64>| CvCurve {
            sigma_grid: grid,
            n_spikes_per_point: vec![0; cvs.len()],
            statuses: vec![PointStatus::Converged; cvs.len()],
            cv_values: cvs,
            params: p,
        };
        let a = mk(vec![Some(1.0), Some(0.5), Some(0.8)], vec![0.01, 0.02, 0.04]);
        let b = mk(vec![Some(1.1), None, Some(0.7)], vec![0.01, 0.02, 0.04]);
        let c = compare_curves(&a, &b).unwrap();
        assert!((c.max_abs_delta.unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(c.points[1].delta, None);
        // identical grids required
        let other = mk(vec![Some(1.0)], vec![0.5]);
        assert!(compare_curves(&a, &other).is_err());
        // identical curves compare clean
        let d = compare_curves(&a, &a).unwrap();
        assert_eq!(d.max_abs_delta, Some(0.0));
        assert_eq!(d.argmin_shift, Some(0));
    }
}
