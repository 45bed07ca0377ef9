//! FitzHugh-Nagumo parameter space, vector field, and excitable-regime
//! classification.
//!
//! The deterministic vector field is
//!
//! ```text
//! f(v, w) = v(a - v)(v - 1) - w
//! g(v, w) = eps * (b*v - c*w)
//! ```
//!
//! Fixed points sit on the intersection of the cubic v-nullcline
//! `w = v(a - v)(v - 1)` and the linear w-nullcline `w = (b/c) v`. The
//! origin is always one of them; the other two exist iff the discriminant
//!
//! ```text
//! Delta = (a + 1)^2 - 4 (a + b/c)
//! ```
//!
//! is nonnegative. The excitable regime is the `Delta < 0` case with the
//! origin linearly stable: a unique rest state and no deterministic
//! oscillations, which is the backdrop for purely noise-induced spiking.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// FHN parameter set `(a, b, c, eps, sigma)`.
///
/// `a` is the excitability threshold, `b`/`c` the recovery coupling and
/// decay, `eps` the slow/fast timescale ratio, and `sigma` the noise
/// intensity on the fast variable. `eps = 0` is accepted as the adiabatic
/// limit; `sigma = 0` is the deterministic system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub eps: f64,
    pub sigma: f64,
}

impl ModelParams {
    pub fn new(a: f64, b: f64, c: f64, eps: f64, sigma: f64) -> Result<Self> {
        if !(b > 0.0) {
            return Err(Error::InvalidParam(format!("b must be > 0, got {b}")));
        }
        if !(c > 0.0) {
            return Err(Error::InvalidParam(format!("c must be > 0, got {c}")));
        }
        if !(eps >= 0.0) {
            return Err(Error::InvalidParam(format!("eps must be >= 0, got {eps}")));
        }
        if !(sigma >= 0.0) {
            return Err(Error::InvalidParam(format!("sigma must be >= 0, got {sigma}")));
        }
        if !a.is_finite() {
            return Err(Error::InvalidParam(format!("a must be finite, got {a}")));
        }
        Ok(Self { a, b, c, eps, sigma })
    }

    /// Same parameters with a different noise intensity.
    pub fn with_sigma(&self, sigma: f64) -> Self {
        Self { sigma, ..*self }
    }
}

/// Phase-space point `(v, w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub v: f64,
    pub w: f64,
}

impl State {
    pub fn new(v: f64, w: f64) -> Self {
        Self { v, w }
    }

    pub fn origin() -> Self {
        Self { v: 0.0, w: 0.0 }
    }
}

/// Outcome of the linear stability analysis at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// Discriminant `(a+1)^2 - 4(a + b/c)` of the nonzero fixed-point pair.
    pub discriminant: f64,
    /// Trace of the Jacobian at the origin, `-(a + eps*c)`.
    pub trace: f64,
    /// Determinant of the Jacobian at the origin, `eps*(a*c + b)`.
    pub det: f64,
    /// All equilibria, sorted by `v`.
    pub fixed_points: Vec<State>,
    /// Unique stable rest state: `discriminant < 0 && trace < 0 && det > 0`.
    pub excitable: bool,
    /// Saddle-node degeneracy: discriminant exactly zero (double root).
    pub degenerate: bool,
    /// Excitable interval of `a` for the current `(b, c)`.
    pub a_range: (f64, f64),
}

/// Deterministic vector field `(f, g)` at `s`.
pub fn vector_field(s: State, p: &ModelParams) -> (f64, f64) {
    let dv = s.v * (p.a - s.v) * (s.v - 1.0) - s.w;
    let dw = p.eps * (p.b * s.v - p.c * s.w);
    (dv, dw)
}

/// Jacobian `[[df/dv, df/dw], [dg/dv, dg/dw]]` at `s`.
pub fn jacobian_at(s: State, p: &ModelParams) -> [[f64; 2]; 2] {
    [
        [-3.0 * s.v * s.v + 2.0 * (p.a + 1.0) * s.v - p.a, -1.0],
        [p.eps * p.b, -p.eps * p.c],
    ]
}

/// Eigenvalues of a real 2x2 matrix as `(re, im)` pairs.
pub fn eigenvalues(j: &[[f64; 2]; 2]) -> [(f64, f64); 2] {
    let tr = j[0][0] + j[1][1];
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let disc = tr * tr / 4.0 - det;
    if disc >= 0.0 {
        let r = disc.sqrt();
        [(tr / 2.0 - r, 0.0), (tr / 2.0 + r, 0.0)]
    } else {
        let r = (-disc).sqrt();
        [(tr / 2.0, -r), (tr / 2.0, r)]
    }
}

/// Discriminant of the nonzero fixed-point quadratic.
pub fn discriminant(p: &ModelParams) -> f64 {
    (p.a + 1.0) * (p.a + 1.0) - 4.0 * (p.a + p.b / p.c)
}

/// All equilibria of the deterministic system, sorted by `v`.
///
/// `v = 0` factors out of the nullcline intersection; the remaining pair
/// solves `v^2 - (a+1)v + (a + b/c) = 0`. One Newton polish per nonzero
/// root pins the nullcline residuals below 1e-12.
pub fn fixed_points(p: &ModelParams) -> Vec<State> {
    let mut pts = vec![State::origin()];
    let disc = discriminant(p);
    if disc >= 0.0 {
        let r = disc.sqrt();
        let mut roots = vec![((p.a + 1.0) - r) / 2.0, ((p.a + 1.0) + r) / 2.0];
        if disc == 0.0 {
            roots.truncate(1);
        }
        for mut v in roots {
            // Newton on h(v) = (a - v)(v - 1) - b/c, h'(v) = -2v + a + 1.
            let h = (p.a - v) * (v - 1.0) - p.b / p.c;
            let hp = -2.0 * v + p.a + 1.0;
            if hp != 0.0 {
                v -= h / hp;
            }
            pts.push(State::new(v, p.b / p.c * v));
        }
    }
    pts.sort_by(|x, y| x.v.total_cmp(&y.v));
    pts
}

/// Classify the excitable regime from the discriminant sign and the linear
/// stability of the origin.
pub fn classify_regime(p: &ModelParams) -> StabilityReport {
    let disc = discriminant(p);
    let j = jacobian_at(State::origin(), p);
    let trace = j[0][0] + j[1][1];
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let degenerate = disc == 0.0;
    let excitable = disc < 0.0 && trace < 0.0 && det > 0.0;
    // Delta < 0  <=>  |a - 1| < 2 sqrt(b/c); intersect with a > 0.
    let half_width = 2.0 * (p.b / p.c).sqrt();
    let a_range = ((1.0 - half_width).max(0.0), 1.0 + half_width);
    StabilityReport {
        discriminant: disc,
        trace,
        det,
        fixed_points: fixed_points(p),
        excitable,
        degenerate,
        a_range,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(a: f64) -> ModelParams {
        ModelParams::new(a, 1.0, 2.0, 0.00025, 0.0).unwrap()
    }

    fn nullcline_residual(s: &State, p: &ModelParams) -> f64 {
        let r1 = (s.v * (p.a - s.v) * (s.v - 1.0) - s.w).abs();
        let r2 = (p.b * s.v - p.c * s.w).abs();
        r1.max(r2)
    }

    #[test]
    fn vector_field_fixed_point_and_cubic_roots() {
        let p = params(0.5);
        assert_eq!(vector_field(State::origin(), &p), (0.0, 0.0));
        let (dv, _) = vector_field(State::new(1.0, 0.0), &p);
        assert_eq!(dv, 0.0);
    }

    #[test]
    fn vector_field_direct_evaluation() {
        let p = ModelParams::new(0.05, 1.0, 2.0, 0.00025, 0.0).unwrap();
        let (dv, dw) = vector_field(State::new(0.5, 0.1), &p);
        assert!((dv - 0.0125).abs() < 1e-15);
        assert!((dw - 7.5e-5).abs() < 1e-18);
    }

    #[test]
    fn jacobian_at_origin() {
        let p = params(0.1);
        let j = jacobian_at(State::origin(), &p);
        assert_eq!(j, [[-0.1, -1.0], [0.00025, -0.0005]]);
        // trace = -(a + eps*c), det = eps*(a*c + b)
        assert!((j[0][0] + j[1][1] + (p.a + p.eps * p.c)).abs() < 1e-15);
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        assert!((det - p.eps * (p.a * p.c + p.b)).abs() < 1e-18);
    }

    #[test]
    fn regime_examples() {
        let r = classify_regime(&params(0.1));
        assert!((r.discriminant - (1.21 - 2.4)).abs() < 1e-12);
        assert!(r.excitable);

        let r = classify_regime(&ModelParams::new(0.05, 1.0, 2.0, 0.00025, 0.0).unwrap());
        assert!(r.excitable);
        assert_eq!(r.fixed_points, vec![State::origin()]);

        let upper = classify_regime(&params(0.3)).a_range.1;
        assert!((upper - (1.0 + 2.0_f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn excitable_flips_exactly_at_the_boundary() {
        let boundary = 1.0 + 2.0_f64.sqrt();
        for k in 0..200 {
            let a = 1e-3 + (boundary - 2e-3) * k as f64 / 199.0;
            assert!(classify_regime(&params(a)).excitable, "a = {a}");
        }
        assert!(!classify_regime(&params(boundary + 1e-3)).excitable);
        assert!(!classify_regime(&params(boundary + 1e-9)).excitable);
    }

    #[test]
    fn fixed_points_unique_in_excitable_regime() {
        let pts = fixed_points(&params(0.1));
        assert_eq!(pts, vec![State::origin()]);
    }

    #[test]
    fn fixed_points_triplet_beyond_boundary() {
        let p = params(2.6);
        assert!((discriminant(&p) - 0.56).abs() < 1e-12);
        let pts = fixed_points(&p);
        assert_eq!(pts.len(), 3);
        for win in pts.windows(2) {
            assert!(win[0].v < win[1].v);
        }
        for s in &pts {
            assert!(nullcline_residual(s, &p) < 1e-12, "residual at v = {}", s.v);
        }
    }

    #[test]
    fn origin_always_a_fixed_point_with_tiny_residual() {
        for a in [0.01, 0.3, 1.0, 2.0, 2.6, 3.2] {
            let p = params(a);
            let pts = fixed_points(&p);
            assert!(pts.contains(&State::origin()));
            for s in &pts {
                assert!(nullcline_residual(s, &p) < 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_double_root_not_excitable() {
        // Delta = 0 at a = 1 + 2 sqrt(b/c); construct b/c = 1/4 so a = 2.
        let p = ModelParams::new(2.0, 0.5, 2.0, 0.001, 0.0).unwrap();
        let r = classify_regime(&p);
        assert_eq!(r.discriminant, 0.0);
        assert!(r.degenerate);
        assert!(!r.excitable);
        assert_eq!(r.fixed_points.len(), 2);
    }

    #[test]
    fn stable_eigenvalues_whenever_excitable() {
        for a in [0.01, 0.05, 0.5, 1.0, 2.0, 2.4] {
            let p = params(a);
            let r = classify_regime(&p);
            if r.excitable {
                for (re, _) in eigenvalues(&jacobian_at(State::origin(), &p)) {
                    assert!(re < 0.0, "a = {a}, re = {re}");
                }
            }
        }
    }

    #[test]
    fn param_validation() {
        assert!(ModelParams::new(0.1, 0.0, 2.0, 0.1, 0.0).is_err());
        assert!(ModelParams::new(0.1, 1.0, -1.0, 0.1, 0.0).is_err());
        assert!(ModelParams::new(0.1, 1.0, 2.0, -0.1, 0.0).is_err());
        assert!(ModelParams::new(0.1, 1.0, 2.0, 0.1, -0.5).is_err());
        assert!(ModelParams::new(0.1, 1.0, 2.0, 0.0, 0.0).is_ok());
    }
}
