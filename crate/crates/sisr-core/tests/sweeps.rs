//! Longer-horizon sweep behavior: the coherence landscape over the
//! timescale separation, and grid/curve consistency at realistic budgets.

use sisr_core::fhn::ModelParams;
use sisr_core::rng::StreamSeed;
use sisr_core::spikes::{cv_min_grid, SweepOptions};

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| (lo.ln() + (hi.ln() - lo.ln()) * k as f64 / (n - 1) as f64).exp())
        .collect()
}

#[test]
fn stronger_timescale_separation_deepens_the_cv_minimum() {
    // Fixed excitability, two separations: the slower recovery gives the
    // more coherent optimum.
    let base = ModelParams::new(0.05, 1.0, 2.0, 0.005, 0.0).unwrap();
    let opts = SweepOptions { min_spikes: 300, max_doublings: 4, ..SweepOptions::default() };
    let sigma = log_grid(0.005, 0.1, 9);
    let grid = cv_min_grid(
        &base,
        &[0.05],
        &[0.002, 0.005],
        &sigma,
        &opts,
        StreamSeed::new(42, 0),
    )
    .unwrap();
    let tighter = grid.cv_min[0][0].expect("eps = 0.002 cell spiked nowhere");
    let looser = grid.cv_min[0][1].expect("eps = 0.005 cell spiked nowhere");
    assert!(
        tighter < looser,
        "CV_min at eps 0.002 ({tighter:.3}) should undercut eps 0.005 ({looser:.3})"
    );
    // The optimum also sits at weaker noise for the slower recovery.
    let s_tight = grid.argmin_sigma[0][0].unwrap();
    let s_loose = grid.argmin_sigma[0][1].unwrap();
    assert!(s_tight <= s_loose, "argmin sigma {s_tight} vs {s_loose}");
}
