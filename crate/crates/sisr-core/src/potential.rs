//! Frozen-`w` double-well potential, barrier heights, and Kramers escape
//! theory.
//!
//! On the fast timescale the recovery current is quasi-static and the
//! membrane potential diffuses in
//!
//! ```text
//! U(v, w, a) = v^4/4 - (a+1) v^3/3 + a v^2/2 + v w,
//! ```
//!
//! a double well whose critical points are the three real roots of the
//! cubic nullcline `v(a - v)(v - 1) = w`, ordered
//! `v_left < v_saddle < v_right`. The left/right barrier heights
//!
//! ```text
//! dU_left(w)  = U(v_saddle) - U(v_left)      (increasing in w)
//! dU_right(w) = U(v_saddle) - U(v_right)     (decreasing in w)
//! ```
//!
//! control the Arrhenius escape rates `k = c * exp(-2 dU / sigma^2)` with
//! curvature prefactor `c = sqrt(U''(v_well) |U''(v_saddle)|) / 2 pi`.
//! Coherent noise-induced spiking requires the matching condition
//! `dU(w_escape) = sigma^2 ln(1/eps) / 2`, solved here by bisection on the
//! monotone barrier functions.

use serde::{Deserialize, Serialize};

use crate::fhn::ModelParams;
use crate::{Error, Result};

/// Stable branch of the cubic v-nullcline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Left,
    Right,
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Branch::Left => write!(f, "left"),
            Branch::Right => write!(f, "right"),
        }
    }
}

/// The three real roots of the cubic nullcline at a given `(w, a)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullclineRoots {
    pub v_left: f64,
    pub v_saddle: f64,
    pub v_right: f64,
}

/// Fold points of the v-nullcline: the local extrema bounding the
/// three-real-root interval `w in [w_min, w_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullclineExtrema {
    pub v_min: f64,
    pub v_max: f64,
    pub w_min: f64,
    pub w_max: f64,
}

/// Barrier heights, Kramers prefactors, and mean escape times at one `w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierPair {
    pub du_left: f64,
    pub du_right: f64,
    pub c_left: f64,
    pub c_right: f64,
    /// `exp(2 dU / sigma^2) / c`; `None` when `sigma = 0`.
    pub tau_left: Option<f64>,
    pub tau_right: Option<f64>,
}

/// Escape ordinates solving the timescale-matching condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapePoints {
    pub w_left: f64,
    pub w_right: f64,
    /// Matching value `sigma^2 ln(1/eps) / 2`.
    pub target: f64,
}

/// Effective potential `U(v, w, a)`.
pub fn potential(v: f64, w: f64, a: f64) -> f64 {
    v * v * v * v / 4.0 - (a + 1.0) * v * v * v / 3.0 + a * v * v / 2.0 + v * w
}

/// Curvature `U''(v) = 3v^2 - 2(a+1)v + a` (independent of `w`).
pub fn curvature(v: f64, a: f64) -> f64 {
    3.0 * v * v - 2.0 * (a + 1.0) * v + a
}

/// Fold points of the v-nullcline for 0 < a < 1.
pub fn nullcline_extrema(a: f64) -> NullclineExtrema {
    let q = (a * a - a + 1.0).sqrt();
    let v_min = (a + 1.0 - q) / 3.0;
    let v_max = (a + 1.0 + q) / 3.0;
    let on_nullcline = |v: f64| v * (a - v) * (v - 1.0);
    NullclineExtrema { v_min, v_max, w_min: on_nullcline(v_min), w_max: on_nullcline(v_max) }
}

/// Three-real-root interval `[w_min, w_max]` of the cubic at this `a`.
pub fn fold_interval(a: f64) -> (f64, f64) {
    let e = nullcline_extrema(a);
    (e.w_min, e.w_max)
}

// Slack for floating-point drift of the arccos argument at the folds.
const ARG_SLACK: f64 = 1e-12;

/// Closed-form roots of `v(a - v)(v - 1) - w = 0`, valid inside the fold
/// interval. Errors with [`Error::OutOfRange`] when only one real root
/// exists.
pub fn nullcline_roots(w: f64, a: f64) -> Result<NullclineRoots> {
    let q = a * a - a + 1.0;
    let arg = ((a + 1.0).powi(3) - 4.5 * a * (a + 1.0) - 13.5 * w) / q.powf(1.5);
    if arg.abs() > 1.0 + ARG_SLACK {
        let (w_min, w_max) = fold_interval(a);
        return Err(Error::OutOfRange { w, a, w_min, w_max });
    }
    let theta = arg.clamp(-1.0, 1.0).acos() / 3.0;
    let center = (a + 1.0) / 3.0;
    let radius = 2.0 / 3.0 * q.sqrt();
    let third = 2.0 * std::f64::consts::PI / 3.0;
    Ok(NullclineRoots {
        v_left: center + radius * (theta + third).cos(),
        v_saddle: center + radius * (theta - third).cos(),
        v_right: center + radius * theta.cos(),
    })
}

/// Barrier heights, prefactors, and Arrhenius escape times at `(w, a)`.
pub fn barriers(w: f64, a: f64, sigma: f64) -> Result<BarrierPair> {
    let r = nullcline_roots(w, a)?;
    let u_saddle = potential(r.v_saddle, w, a);
    let du_left = u_saddle - potential(r.v_left, w, a);
    let du_right = u_saddle - potential(r.v_right, w, a);
    let saddle_curv = curvature(r.v_saddle, a).abs();
    let two_pi = 2.0 * std::f64::consts::PI;
    let c_left = (curvature(r.v_left, a) * saddle_curv).sqrt() / two_pi;
    let c_right = (curvature(r.v_right, a) * saddle_curv).sqrt() / two_pi;
    let tau = |du: f64, c: f64| {
        (sigma > 0.0).then(|| (2.0 * du / (sigma * sigma)).exp() / c)
    };
    Ok(BarrierPair {
        du_left,
        du_right,
        c_left,
        c_right,
        tau_left: tau(du_left, c_left),
        tau_right: tau(du_right, c_right),
    })
}

/// Left barrier height `dU_left(w, a)`.
pub fn barrier_left(w: f64, a: f64) -> Result<f64> {
    let r = nullcline_roots(w, a)?;
    Ok(potential(r.v_saddle, w, a) - potential(r.v_left, w, a))
}

/// Right barrier height `dU_right(w, a)`.
pub fn barrier_right(w: f64, a: f64) -> Result<f64> {
    let r = nullcline_roots(w, a)?;
    Ok(potential(r.v_saddle, w, a) - potential(r.v_right, w, a))
}

/// Derivatives `(d dU_left/dw, d dU_right/dw)`.
///
/// `U_v` vanishes at the critical points, so by the envelope theorem the
/// total derivative of `U(v*(w), w)` in `w` is just `v*(w)`; the barrier
/// slopes reduce to saddle-minus-well root differences.
pub fn barrier_slopes(w: f64, a: f64) -> Result<(f64, f64)> {
    let r = nullcline_roots(w, a)?;
    Ok((r.v_saddle - r.v_left, r.v_saddle - r.v_right))
}

/// Timescale-matching target `sigma^2 ln(1/eps) / 2`.
pub fn matching_target(sigma: f64, eps: f64) -> f64 {
    0.5 * sigma * sigma * (1.0 / eps).ln()
}

// Guard distance from the fold points, where the saddle-node degeneracy
// sends prefactors to zero and root formulas lose accuracy.
const FOLD_GUARD: f64 = 1e-9;

fn bisect_barrier(
    f: impl Fn(f64) -> f64,
    target: f64,
    mut lo: f64,
    mut hi: f64,
    branch: Branch,
) -> Result<f64> {
    let (f_lo, f_hi) = (f(lo) - target, f(hi) - target);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        let (mut a, mut b) = (f_lo + target, f_hi + target);
        if a > b {
            std::mem::swap(&mut a, &mut b);
        }
        return Err(Error::NoMatch { branch, target, lo: a, hi: b });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let fm = f(mid) - target;
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == f_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Solve the matching condition `dU(w, a) = sigma^2 ln(1/eps) / 2` on both
/// branches by bisection; monotonicity of the barriers makes the solutions
/// unique. Errors with [`Error::NoMatch`] when the target misses the
/// barrier range.
pub fn solve_escape_points(a: f64, sigma: f64, eps: f64) -> Result<EscapePoints> {
    let target = matching_target(sigma, eps);
    let (w_min, w_max) = fold_interval(a);
    let (lo, hi) = (w_min + FOLD_GUARD, w_max - FOLD_GUARD);
    let w_left = bisect_barrier(
        |w| barrier_left(w, a).expect("interior w"),
        target,
        lo,
        hi,
        Branch::Left,
    )?;
    let w_right = bisect_barrier(
        |w| barrier_right(w, a).expect("interior w"),
        target,
        lo,
        hi,
        Branch::Right,
    )?;
    Ok(EscapePoints { w_left, w_right, target })
}

/// Slow drift `eps (b v*(w) - c w)` of the recovery current along a stable
/// nullcline branch.
pub fn slow_drift(w: f64, a: f64, branch: Branch, p: &ModelParams) -> Result<f64> {
    let r = nullcline_roots(w, a)?;
    let v = match branch {
        Branch::Left => r.v_left,
        Branch::Right => r.v_right,
    };
    Ok(p.eps * (p.b * v - p.c * w))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn potential_examples() {
        assert_eq!(potential(0.0, 0.3, 0.7), 0.0);
        assert!((potential(1.0, 0.0, 0.5)).abs() < 1e-15);
        assert!((potential(0.5, 0.0, 0.5) - 0.015625).abs() < 1e-15);
    }

    #[test]
    fn roots_factorize_at_w_zero() {
        for a in [0.5, 0.05] {
            let r = nullcline_roots(0.0, a).unwrap();
            assert!(r.v_left.abs() < 1e-12);
            assert!((r.v_saddle - a).abs() < 1e-12);
            assert!((r.v_right - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_range_beyond_fold() {
        let (_, w_max) = fold_interval(0.5);
        let err = nullcline_roots(w_max + 0.01, 0.5).unwrap_err();
        assert!(matches!(err, Error::OutOfRange { .. }));
    }

    #[test]
    fn extrema_at_half() {
        let e = nullcline_extrema(0.5);
        assert!((e.v_min - 0.2113248654051871).abs() < 1e-12);
        assert!((e.v_max - 0.7886751345948129).abs() < 1e-12);
        // Cubic is odd-symmetric about v = 1/2 at a = 1/2.
        assert!((e.w_max + e.w_min).abs() < 1e-12);
        assert!((e.w_max - 0.04811252243246881).abs() < 1e-10);
        assert!(e.w_min < 0.0 && e.w_max > 0.0);
    }

    #[test]
    fn barrier_examples_at_symmetric_point() {
        let b = barriers(0.0, 0.5, 0.1).unwrap();
        assert!((b.du_left - 0.015625).abs() < 1e-12);
        assert!((b.du_right - 0.015625).abs() < 1e-12);
        let c_expected = (0.5_f64 * 0.25).sqrt() / (2.0 * std::f64::consts::PI);
        assert!((b.c_left - c_expected).abs() < 1e-12);
        assert!((b.c_right - c_expected).abs() < 1e-12);
        let tau = b.tau_left.unwrap();
        assert!((tau - 404.0).abs() < 1.0, "tau = {tau}");
    }

    #[test]
    fn tau_omitted_without_noise() {
        let b = barriers(0.01, 0.5, 0.0).unwrap();
        assert!(b.tau_left.is_none() && b.tau_right.is_none());
        assert!(b.du_left > 0.0 && b.du_right > 0.0);
    }

    #[test]
    fn matching_target_examples() {
        let t = matching_target(0.03061, 0.00025);
        assert!((t - 0.003885646).abs() < 1e-6);
        assert_eq!(matching_target(0.0, 0.1), 0.0);
        assert_eq!(matching_target(0.5, 1.0), 0.0);
    }

    #[test]
    fn barrier_monotonicity_scan() {
        for a in [0.05, 0.5, 1.0] {
            let (w_min, w_max) = fold_interval(a);
            let (lo, hi) = (w_min + 1e-9, w_max - 1e-9);
            let mut prev = barriers(lo, a, 0.0).unwrap();
            for k in 1..1000 {
                let w = lo + (hi - lo) * k as f64 / 999.0;
                let b = barriers(w, a, 0.0).unwrap();
                assert!(b.du_left > prev.du_left, "dU_left not increasing at a={a}, w={w}");
                assert!(b.du_right < prev.du_right, "dU_right not decreasing at a={a}, w={w}");
                assert!(b.du_left >= 0.0 && b.du_right >= 0.0);
                prev = b;
            }
        }
    }

    #[test]
    fn prefactor_matches_finite_difference_curvature() {
        // h ~ eps_machine^(1/4): balances truncation against cancellation
        // in the second difference.
        let h = 2e-4;
        for (w, a) in [(0.0, 0.5), (0.02, 0.3), (-0.0003, 0.05)] {
            let r = nullcline_roots(w, a).unwrap();
            for v in [r.v_left, r.v_saddle, r.v_right] {
                let fd = (potential(v + h, w, a) - 2.0 * potential(v, w, a)
                    + potential(v - h, w, a))
                    / (h * h);
                let an = curvature(v, a);
                assert!((fd - an).abs() / an.abs().max(1e-30) < 1e-6);
            }
        }
    }

    #[test]
    fn barrier_slopes_match_finite_differences() {
        let h = 1e-7;
        for (w, a) in [(0.0, 0.5), (0.03, 0.5), (0.01, 0.3), (0.05, 0.05)] {
            let (sl, sr) = barrier_slopes(w, a).unwrap();
            let fd_l = (barrier_left(w + h, a).unwrap() - barrier_left(w - h, a).unwrap())
                / (2.0 * h);
            let fd_r = (barrier_right(w + h, a).unwrap() - barrier_right(w - h, a).unwrap())
                / (2.0 * h);
            assert!((sl - fd_l).abs() < 1e-6, "left slope at w={w}, a={a}");
            assert!((sr - fd_r).abs() < 1e-6, "right slope at w={w}, a={a}");
            assert!(sl > 0.0 && sr < 0.0);
        }
    }

    #[test]
    fn escape_points_solve_the_matching_condition() {
        let ep = solve_escape_points(0.05, 0.03061, 0.00025).unwrap();
        let (w_min, w_max) = fold_interval(0.05);
        assert!(ep.w_left > w_min && ep.w_left < w_max);
        assert!(ep.w_right > w_min && ep.w_right < w_max);
        assert!((barrier_left(ep.w_left, 0.05).unwrap() - ep.target).abs() < 1e-10);
        assert!((barrier_right(ep.w_right, 0.05).unwrap() - ep.target).abs() < 1e-10);
    }

    #[test]
    fn escape_points_symmetric_case() {
        // At a = 1/2 the barriers are equal at w = 0; pick sigma so the
        // target equals that common value.
        let du0 = barrier_left(0.0, 0.5).unwrap();
        let eps = 0.00025_f64;
        let sigma = (2.0 * du0 / (1.0 / eps).ln()).sqrt();
        let ep = solve_escape_points(0.5, sigma, eps).unwrap();
        assert!(ep.w_left.abs() < 1e-10);
        assert!(ep.w_right.abs() < 1e-10);
    }

    #[test]
    fn no_match_when_target_exceeds_barrier_range() {
        let (_, w_max) = fold_interval(0.5);
        let max_left = barrier_left(w_max - 1e-9, 0.5).unwrap();
        let eps = 0.00025_f64;
        let sigma = (2.0 * (max_left * 1.5) / (1.0 / eps).ln()).sqrt();
        let err = solve_escape_points(0.5, sigma, eps).unwrap_err();
        assert!(matches!(err, Error::NoMatch { branch: Branch::Left, .. }));
    }

    #[test]
    fn slow_drift_examples() {
        let p = ModelParams::new(0.5, 1.0, 2.0, 0.00025, 0.0).unwrap();
        let left = slow_drift(0.0, 0.5, Branch::Left, &p).unwrap();
        assert!(left.abs() < 1e-12);
        let right = slow_drift(0.0, 0.5, Branch::Right, &p).unwrap();
        assert!((right - 2.5e-4).abs() < 1e-12);

        let adiabatic = ModelParams::new(0.5, 1.0, 2.0, 0.0, 0.0).unwrap();
        assert_eq!(slow_drift(0.01, 0.5, Branch::Left, &adiabatic).unwrap(), 0.0);
        assert_eq!(slow_drift(0.01, 0.5, Branch::Right, &adiabatic).unwrap(), 0.0);
    }
}
