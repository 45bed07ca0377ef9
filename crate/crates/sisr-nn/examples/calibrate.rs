//! Desk-scale calibration runs: ablation orderings, rollout fidelity, and
//! surrogate CV curves under different training settings.
//!
//! Usage: calibrate <sigma_train> <normalize:0|1> [epochs]

use ndarray::Array2;
use sisr_core::fhn::{ModelParams, State};
use sisr_core::rng::StreamSeed;
use sisr_core::sde::make_dataset;
use sisr_core::spikes::{cv_curve, SweepOptions};
use sisr_nn::pinn::{train, LossMask, TrainConfig};
use sisr_nn::surrogate::{compare_curves, predicted_cv_curve, rollout};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let sigma: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(0.05);
    let normalize = args.get(2).map(|s| s == "1").unwrap_or(false);
    let epochs: u64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(2000);
    let eps: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(0.005);
    let head = if args.get(5).map(|s| s == "delta").unwrap_or(false) {
        sisr_nn::pinn::HeadMode::Delta
    } else {
        sisr_nn::pinn::HeadMode::Absolute
    };

    let a_param: f64 = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(0.05);
    let p = ModelParams::new(a_param, 1.0, 2.0, eps, sigma).unwrap();
    let seed = StreamSeed::new(42, 0);
    let ds = make_dataset(&p, State::origin(), 0.05, 50_000, seed, 0.8, 2_000).unwrap();
    let spikes_in_data = ds
        .inputs
        .windows(2)
        .filter(|w| w[0][0] < 0.4 && w[1][0] >= 0.4)
        .count();
    println!("sigma_train={sigma} eps={eps} normalize={normalize} head={head:?} epochs={epochs} data spikes={spikes_in_data}");

    let base = TrainConfig {
        epochs,
        normalize,
        head,
        ..TrainConfig::desk()
    };

    let run_curve = args.get(7).map(|s| s == "curve").unwrap_or(false);
    let phy2_len: usize = args.get(8).map(|s| s.parse().unwrap()).unwrap_or(20_000);
    let train_seed: u64 = args.get(9).map(|s| s.parse().unwrap()).unwrap_or(42);
    let masks: Vec<LossMask> = match args.get(10).map(|s| s.as_str()) {
        Some("pair") => vec![LossMask::DATA_ONLY, LossMask::FULL],
        Some("full") => vec![LossMask::FULL],
        _ => vec![LossMask::DATA_ONLY, LossMask::DATA_IC_PHY1, LossMask::DATA_PHY2, LossMask::FULL],
    };
    let lambda_phy2: f64 = args.get(11).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let mut weights = sisr_nn::pinn::LossWeights::default();
    weights.phy2 = lambda_phy2;
    let mut results = Vec::new();
    for mask in masks {
        let cfg = TrainConfig { loss_mask: mask, phy2_rollout_len: phy2_len, seed: train_seed, init_weights: weights, ..base.clone() };
        let t0 = std::time::Instant::now();
        let (sp, rep) = train(&cfg, &ds).unwrap();
        print!(
            "{:<20} best_epoch={:<5} test_nrmse={:.5} [{:.0}s]",
            mask.label(),
            rep.best_epoch,
            rep.best_test_nrmse,
            t0.elapsed().as_secs_f64()
        );
        // one-step w bias on the test split
        let (tx, ty) = ds.test();
        let x = Array2::from_shape_fn((tx.len(), 3), |(i, j)| tx[i][j]);
        let preds = sp.predict_only(x.view()).unwrap();
        let wbias: f64 =
            (0..tx.len()).map(|i| preds[[i, 1]] - ty[i][1]).sum::<f64>() / tx.len() as f64;
        print!(" w_bias={wbias:+.2e}");
        // rollouts: 5x the training horizon (5e4 pts * 5 = 250k steps)
        let mut spikes = Vec::new();
        for s in 0..3u64 {
            let r = rollout(&sp, State::origin(), sigma, 0.05, 250_000, StreamSeed::new(100 + s, 1), 0.4);
            spikes.push((r.stats.n_spikes, r.bounded));
        }
        println!(" rollout(spikes,bounded)x3={spikes:?}");
        results.push((mask.label(), rep.best_test_nrmse, sp));
    }
    let improvement = (results[0].1 - results.last().unwrap().1) / results[0].1 * 100.0;
    println!("improvement full vs data-only: {improvement:.1}%");
    if !run_curve {
        return;
    }

    // surrogate CV curve vs simulation on a 7-point grid
    let grid: Vec<f64> = (0..7)
        .map(|k| (0.01_f64.ln() + (0.08_f64.ln() - 0.01_f64.ln()) * k as f64 / 6.0).exp())
        .collect();
    let opts = SweepOptions { min_spikes: 200, t_horizon: 1e5, max_doublings: 3, ..SweepOptions::default() };
    let sim = cv_curve(&p, &grid, &opts, StreamSeed::new(42, 7)).unwrap();
    let sp_full = &results.last().unwrap().2;
    let pred = predicted_cv_curve(
        sp_full,
        &p,
        &grid,
        State::origin(),
        0.05,
        2_000_000,
        100,
        0.4,
        StreamSeed::new(42, 8),
    )
    .unwrap();
    println!("sigma    sim_cv   pred_cv  (sim_n, pred_n)");
    for i in 0..grid.len() {
        println!(
            "{:.4}   {}   {}   ({}, {})",
            grid[i],
            sim.cv_values[i].map_or("  NA  ".into(), |c| format!("{c:.4}")),
            pred.cv_values[i].map_or("  NA  ".into(), |c| format!("{c:.4}")),
            sim.n_spikes_per_point[i],
            pred.n_spikes_per_point[i],
        );
    }
    if let Ok(cmp) = compare_curves(&sim, &pred) {
        println!(
            "max|dCV|={:?} argmin_shift={:?} sim_argmin={:?} pred_argmin={:?}",
            cmp.max_abs_delta, cmp.argmin_shift, cmp.simulated_argmin_sigma, cmp.predicted_argmin_sigma
        );
    }
}
