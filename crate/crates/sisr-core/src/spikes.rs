//! Spike detection, interspike-interval statistics, and coherence sweeps.
//!
//! A spike is an upward crossing of the threshold `v_th` (0.4 by
//! convention); crossing times are linearly interpolated between samples
//! to cut `dt`-quantization bias out of the interval statistics. The
//! coherence measure is the coefficient of variation
//!
//! ```text
//! CV = sqrt(<ISI^2> - <ISI>^2) / <ISI>
//! ```
//!
//! using population moments. `CV -> 0` is clockwork spiking, `CV ~ 1` a
//! Poisson-like train. Sweeps over noise intensity and over `(a, eps)`
//! cells run in parallel on value-derived random streams, so results do
//! not depend on grid order or thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fhn::{ModelParams, State};
use crate::rng::{self, StreamSeed};
use crate::sde::{Integrator, Trajectory};
use crate::{Error, Result};

/// Streaming upward-crossing detector with interpolated crossing times.
#[derive(Debug, Clone)]
pub struct CrossingDetector {
    v_th: f64,
    prev: Option<(f64, f64)>,
    pub times: Vec<f64>,
}

impl CrossingDetector {
    pub fn new(v_th: f64) -> Self {
        Self { v_th, prev: None, times: Vec::new() }
    }

    pub fn push(&mut self, t: f64, v: f64) {
        if let Some((pt, pv)) = self.prev {
            if pv < self.v_th && v >= self.v_th {
                self.times.push(pt + (t - pt) * (self.v_th - pv) / (v - pv));
            }
        }
        self.prev = Some((t, v));
    }
}

/// Upward threshold crossings of a sampled series starting at `t0`.
pub fn detect_spikes_in(v: &[f64], dt: f64, t0: f64, v_th: f64) -> Vec<f64> {
    let mut det = CrossingDetector::new(v_th);
    for (k, &vk) in v.iter().enumerate() {
        det.push(t0 + dt * k as f64, vk);
    }
    det.times
}

/// Upward threshold crossings of a trajectory.
pub fn detect_spikes(traj: &Trajectory, v_th: f64) -> Vec<f64> {
    detect_spikes_in(&traj.v, traj.dt, traj.t0, v_th)
}

/// Variance convention for the CV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarianceMode {
    /// `<ISI^2> - <ISI>^2` (moment form; the default).
    Population,
    /// Bessel-corrected sample variance.
    Sample,
}

/// Interval statistics of one spike train.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeStatistics {
    pub spike_times: Vec<f64>,
    pub isis: Vec<f64>,
    /// `None` when fewer than 3 spikes (2 intervals) were seen.
    pub cv: Option<f64>,
    pub n_spikes: usize,
}

/// Minimum spikes for a defined CV: two intervals, never 0/0.
pub const MIN_SPIKES_FOR_CV: usize = 3;

/// CV of interspike intervals with population moments.
pub fn isi_cv(spike_times: &[f64]) -> SpikeStatistics {
    isi_cv_with(spike_times, VarianceMode::Population)
}

pub fn isi_cv_with(spike_times: &[f64], mode: VarianceMode) -> SpikeStatistics {
    let isis: Vec<f64> = spike_times.windows(2).map(|p| p[1] - p[0]).collect();
    let n_spikes = spike_times.len();
    let cv = if n_spikes < MIN_SPIKES_FOR_CV {
        None
    } else {
        let n = isis.len() as f64;
        let mean = isis.iter().sum::<f64>() / n;
        let mean_sq = isis.iter().map(|x| x * x).sum::<f64>() / n;
        let var = match mode {
            VarianceMode::Population => mean_sq - mean * mean,
            VarianceMode::Sample => (mean_sq - mean * mean) * n / (n - 1.0),
        };
        Some(var.max(0.0).sqrt() / mean)
    };
    SpikeStatistics { spike_times: spike_times.to_vec(), isis, cv, n_spikes }
}

/// Why a sweep point ended up with or without a CV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointStatus {
    Converged,
    /// Horizon budget exhausted below the spike floor.
    BudgetExceeded,
    Diverged,
}

/// Knobs for the CV sweeps. The horizon doubles until the spike floor is
/// met or `max_doublings` extensions are spent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub dt: f64,
    pub init: State,
    pub v_th: f64,
    pub t_horizon: f64,
    pub min_spikes: usize,
    pub max_doublings: u32,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            dt: 0.05,
            init: State::origin(),
            v_th: 0.4,
            t_horizon: 2e5,
            min_spikes: 400,
            max_doublings: 5,
        }
    }
}

/// CV versus noise intensity at fixed `(a, eps, b, c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCurve {
    pub sigma_grid: Vec<f64>,
    pub cv_values: Vec<Option<f64>>,
    pub n_spikes_per_point: Vec<usize>,
    pub statuses: Vec<PointStatus>,
    /// Base parameters; `sigma` is overridden per grid point.
    pub params: ModelParams,
}

impl CvCurve {
    /// Index and value of the smallest defined CV.
    pub fn min_point(&self) -> Option<(usize, f64)> {
        self.cv_values
            .iter()
            .enumerate()
            .filter_map(|(i, cv)| cv.map(|c| (i, c)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// First and last defined grid indices.
    pub fn defined_range(&self) -> Option<(usize, usize)> {
        let first = self.cv_values.iter().position(|c| c.is_some())?;
        let last = self.cv_values.iter().rposition(|c| c.is_some())?;
        Some((first, last))
    }
}

fn cv_at_sigma(p: &ModelParams, opts: &SweepOptions, seed: StreamSeed) -> (Option<f64>, usize, PointStatus) {
    let mut it = Integrator::new(*p, opts.init, opts.dt, seed);
    let mut det = CrossingDetector::new(opts.v_th);
    det.push(0.0, opts.init.v);
    let mut horizon_steps = (opts.t_horizon / opts.dt).round() as u64;
    for extension in 0..=opts.max_doublings {
        while it.steps_done < horizon_steps {
            match it.step() {
                Ok((s, _)) => det.push(it.steps_done as f64 * opts.dt, s.v),
                Err(_) => return (None, det.times.len(), PointStatus::Diverged),
            }
        }
        if det.times.len() >= opts.min_spikes {
            break;
        }
        if extension < opts.max_doublings {
            horizon_steps *= 2;
        }
    }
    let stats = isi_cv(&det.times);
    if det.times.len() >= opts.min_spikes {
        (stats.cv, stats.n_spikes, PointStatus::Converged)
    } else {
        // Below the spike floor the CV estimate is noise; report the
        // sentinel, keep the count.
        (None, stats.n_spikes, PointStatus::BudgetExceeded)
    }
}

fn point_seed(seed: StreamSeed, p: &ModelParams, sigma: f64) -> StreamSeed {
    seed.derive(rng::tag::SWEEP, &[rng::salt(p.a), rng::salt(p.eps), rng::salt(sigma)])
}

/// CV across a noise grid; points run in parallel on value-derived
/// streams. Per-point failures become sentinels, never aborts.
pub fn cv_curve(
    base: &ModelParams,
    sigma_grid: &[f64],
    opts: &SweepOptions,
    seed: StreamSeed,
) -> Result<CvCurve> {
    if sigma_grid.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Error::InvalidParam("sigma_grid must be strictly increasing".into()));
    }
    if sigma_grid.is_empty() {
        return Err(Error::InvalidParam("sigma_grid must be nonempty".into()));
    }
    let points: Vec<_> = sigma_grid
        .par_iter()
        .map(|&sigma| cv_at_sigma(&base.with_sigma(sigma), opts, point_seed(seed, base, sigma)))
        .collect();
    let mut curve = CvCurve {
        sigma_grid: sigma_grid.to_vec(),
        cv_values: Vec::with_capacity(points.len()),
        n_spikes_per_point: Vec::with_capacity(points.len()),
        statuses: Vec::with_capacity(points.len()),
        params: *base,
    };
    for (cv, n, status) in points {
        curve.cv_values.push(cv);
        curve.n_spikes_per_point.push(n);
        curve.statuses.push(status);
    }
    Ok(curve)
}

/// Minimum-CV landscape over `(a, eps)` cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvMinGrid {
    pub a_grid: Vec<f64>,
    pub eps_grid: Vec<f64>,
    /// `cv_min[i][j]` for `(a_grid[i], eps_grid[j])`; `None` when every
    /// noise level in the cell was a sentinel.
    pub cv_min: Vec<Vec<Option<f64>>>,
    pub argmin_sigma: Vec<Vec<Option<f64>>>,
}

/// Min-over-noise CV per `(a, eps)` cell, cells in parallel.
pub fn cv_min_grid(
    base: &ModelParams,
    a_grid: &[f64],
    eps_grid: &[f64],
    sigma_grid: &[f64],
    opts: &SweepOptions,
    seed: StreamSeed,
) -> Result<CvMinGrid> {
    if a_grid.is_empty() || eps_grid.is_empty() || sigma_grid.is_empty() {
        return Err(Error::InvalidParam("grids must be nonempty".into()));
    }
    let cells: Vec<(usize, usize)> = (0..a_grid.len())
        .flat_map(|i| (0..eps_grid.len()).map(move |j| (i, j)))
        .collect();
    let results: Vec<(usize, usize, Option<(f64, f64)>)> = cells
        .par_iter()
        .map(|&(i, j)| {
            let p = ModelParams { a: a_grid[i], eps: eps_grid[j], ..*base };
            let best = sigma_grid
                .par_iter()
                .map(|&sigma| {
                    let (cv, _, _) =
                        cv_at_sigma(&p.with_sigma(sigma), opts, point_seed(seed, &p, sigma));
                    cv.map(|c| (c, sigma))
                })
                .reduce(
                    || None,
                    |acc, item| match (acc, item) {
                        (None, x) => x,
                        (x, None) => x,
                        (Some(a), Some(b)) => Some(if b.0 < a.0 { b } else { a }),
                    },
                );
            (i, j, best)
        })
        .collect();
    let mut cv_min = vec![vec![None; eps_grid.len()]; a_grid.len()];
    let mut argmin_sigma = vec![vec![None; eps_grid.len()]; a_grid.len()];
    for (i, j, best) in results {
        if let Some((cv, sigma)) = best {
            cv_min[i][j] = Some(cv);
            argmin_sigma[i][j] = Some(sigma);
        }
    }
    Ok(CvMinGrid {
        a_grid: a_grid.to_vec(),
        eps_grid: eps_grid.to_vec(),
        cv_min,
        argmin_sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn constant_series_has_no_spikes() {
        assert!(detect_spikes_in(&[0.0; 100], 0.05, 0.0, 0.4).is_empty());
    }

    #[test]
    fn sawtooth_crossings_at_interpolated_times() {
        // v ramps 0 -> 0.8 over 8 samples then snaps back; 5 teeth.
        let mut v = Vec::new();
        for _ in 0..5 {
            for k in 0..8 {
                v.push(0.1 * k as f64);
            }
        }
        let dt = 0.5;
        let times = detect_spikes_in(&v, dt, 0.0, 0.4);
        assert_eq!(times.len(), 5);
        for (tooth, &t) in times.iter().enumerate() {
            // Crossing of 0.4 happens exactly at sample offset 4.
            let expected = dt * (tooth as f64 * 8.0 + 4.0);
            assert!((t - expected).abs() < 1e-12, "tooth {tooth}: {t} vs {expected}");
        }
    }

    #[test]
    fn interpolation_fraction() {
        let times = detect_spikes_in(&[0.3, 0.5], 1.0, 10.0, 0.4);
        assert_eq!(times, vec![10.5]);
    }

    #[test]
    fn count_matches_brute_force_excursion_scan() {
        let mut rng = StreamSeed::new(7, 0).rng();
        let v: Vec<f64> = (0..5000).map(|_| rng.random::<f64>() * 1.2 - 0.2).collect();
        let detected = detect_spikes_in(&v, 0.05, 0.0, 0.4).len();
        let brute = v.windows(2).filter(|p| p[0] < 0.4 && p[1] >= 0.4).count();
        assert_eq!(detected, brute);
    }

    #[test]
    fn cv_zero_for_periodic_train() {
        let times: Vec<f64> = (0..50).map(|k| k as f64 * 2.5).collect();
        let s = isi_cv(&times);
        assert_eq!(s.cv, Some(0.0));
        assert_eq!(s.n_spikes, 50);
    }

    #[test]
    fn cv_direct_formula() {
        let times = [0.0, 1.0, 2.0, 3.0, 6.0]; // ISIs 1,1,1,3
        let s = isi_cv(&times);
        let cv = s.cv.unwrap();
        assert!((cv - 0.75_f64.sqrt() / 1.5).abs() < 1e-12);
        assert_eq!(s.isis, vec![1.0, 1.0, 1.0, 3.0]);
    }

    #[test]
    fn cv_undefined_below_three_spikes() {
        assert_eq!(isi_cv(&[1.0, 2.0]).cv, None);
        assert_eq!(isi_cv(&[]).cv, None);
        assert!(isi_cv(&[1.0, 2.0, 3.0]).cv.is_some());
    }

    #[test]
    fn cv_scale_invariance() {
        let mut rng = StreamSeed::new(11, 0).rng();
        let mut t = 0.0;
        let times: Vec<f64> = (0..200)
            .map(|_| {
                t += rng.random::<f64>() + 0.1;
                t
            })
            .collect();
        let cv1 = isi_cv(&times).cv.unwrap();
        let scaled: Vec<f64> = times.iter().map(|x| x * 37.5).collect();
        let cv2 = isi_cv(&scaled).cv.unwrap();
        assert!((cv1 - cv2).abs() < 1e-12);
    }

    #[test]
    fn exponential_isis_give_poisson_cv() {
        let mut rng = StreamSeed::new(13, 0).rng();
        let mut t = 0.0;
        let times: Vec<f64> = (0..100_000)
            .map(|_| {
                let u: f64 = rng.random();
                t += -(1.0 - u).ln();
                t
            })
            .collect();
        let cv = isi_cv(&times).cv.unwrap();
        assert!((cv - 1.0).abs() < 0.02, "cv = {cv}");
    }

    #[test]
    fn sample_variance_mode_applies_bessel() {
        let times = [0.0, 1.0, 2.0, 3.0, 6.0];
        let pop = isi_cv_with(&times, VarianceMode::Population).cv.unwrap();
        let samp = isi_cv_with(&times, VarianceMode::Sample).cv.unwrap();
        assert!((samp / pop - (4.0_f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn curve_rejects_unsorted_grid() {
        let p = ModelParams::new(0.05, 1.0, 2.0, 0.005, 0.0).unwrap();
        let err = cv_curve(&p, &[0.1, 0.05], &SweepOptions::default(), StreamSeed::new(1, 0));
        assert!(err.is_err());
    }

    #[test]
    fn subthreshold_point_is_sentinel() {
        let p = ModelParams::new(0.5, 1.0, 2.0, 0.005, 0.0).unwrap();
        let opts = SweepOptions { t_horizon: 100.0, min_spikes: 3, max_doublings: 1, ..SweepOptions::default() };
        let curve = cv_curve(&p, &[0.001], &opts, StreamSeed::new(1, 0)).unwrap();
        assert_eq!(curve.cv_values, vec![None]);
        assert_eq!(curve.statuses, vec![PointStatus::BudgetExceeded]);
    }

    #[test]
    fn curve_is_deterministic() {
        let p = ModelParams::new(0.05, 1.0, 2.0, 0.005, 0.0).unwrap();
        let opts = SweepOptions { t_horizon: 2e4, min_spikes: 20, max_doublings: 2, ..SweepOptions::default() };
        let grid = [0.02, 0.05, 0.1];
        let s = StreamSeed::new(42, 0);
        let a = cv_curve(&p, &grid, &opts, s).unwrap();
        let b = cv_curve(&p, &grid, &opts, s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_cell_grid_reduces_to_curve_min() {
        let p = ModelParams::new(0.05, 1.0, 2.0, 0.005, 0.0).unwrap();
        let opts = SweepOptions { t_horizon: 2e4, min_spikes: 20, max_doublings: 2, ..SweepOptions::default() };
        let grid = [0.02, 0.05, 0.1];
        let s = StreamSeed::new(42, 0);
        let curve = cv_curve(&p, &grid, &opts, s).unwrap();
        let cell = cv_min_grid(&p, &[0.05], &[0.005], &grid, &opts, s).unwrap();
        let (idx, cv) = curve.min_point().unwrap();
        assert_eq!(cell.cv_min[0][0], Some(cv));
        assert_eq!(cell.argmin_sigma[0][0], Some(grid[idx]));
    }

    #[test]
    fn sigma_order_does_not_change_cell_results() {
        let p = ModelParams::new(0.05, 1.0, 2.0, 0.005, 0.0).unwrap();
        let opts = SweepOptions { t_horizon: 2e4, min_spikes: 20, max_doublings: 2, ..SweepOptions::default() };
        let s = StreamSeed::new(42, 0);
        let sorted = cv_min_grid(&p, &[0.05], &[0.005], &[0.02, 0.05, 0.1], &opts, s).unwrap();
        let shuffled = cv_min_grid(&p, &[0.05], &[0.005], &[0.1, 0.02, 0.05], &opts, s).unwrap();
        assert_eq!(sorted.cv_min, shuffled.cv_min);
        assert_eq!(sorted.argmin_sigma, shuffled.argmin_sigma);
    }
}
