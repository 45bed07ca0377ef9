//! Subcommand implementations. Each command resolves its config, runs the
//! library call, writes CSV/JSON (plus optional SVG), and finalizes a
//! manifest from which `rerun` can regenerate everything byte for byte.

use std::path::Path;

use sisr_core::fhn::classify_regime;
use sisr_core::potential::{barriers, fold_interval, potential};
use sisr_core::rng::{self, StreamSeed};
use sisr_core::sde::{integrate, make_dataset};
use sisr_core::spikes::{cv_curve, cv_min_grid, CvCurve, PointStatus};
use sisr_nn::mlp::{save_checkpoint, CheckpointHeader};
use sisr_nn::pinn::{run_ablation, train, StatePredictor, TrainReport};
use sisr_nn::surrogate::{compare_curves, predicted_cv_curve, rollout};

use crate::config::Config;
use crate::csvio::{write_csv, Cell};
use crate::manifest::{OutputSink, RunManifest};
use crate::svg::{heatmap, line_plot, Series};
use crate::CliError;

pub struct Ctx {
    pub config: Config,
    pub seed: u64,
    pub svg: bool,
}

fn sink(ctx: &Ctx, command: &str, out_dir: &Path) -> Result<OutputSink, CliError> {
    OutputSink::new(out_dir, RunManifest::new(command, &ctx.config, ctx.seed, ctx.svg))
}

fn status_str(s: PointStatus) -> &'static str {
    match s {
        PointStatus::Converged => "ok",
        PointStatus::BudgetExceeded => "budget-exceeded",
        PointStatus::Diverged => "diverged",
    }
}

pub fn regime(ctx: &Ctx, out_dir: &Path) -> Result<(), CliError> {
    let p = ctx.config.model.params()?;
    let report = classify_regime(&p);
    let mut sink = sink(ctx, "regime", out_dir)?;
    sink.write_json("regime.json", &report)?;
    println!(
        "a={} discriminant={:.6} excitable={} fixed_points={}",
        p.a,
        report.discriminant,
        report.excitable,
        report.fixed_points.len()
    );
    sink.finish()?;
    Ok(())
}

pub fn landscape(ctx: &Ctx, out_dir: &Path) -> Result<(), CliError> {
    let p = ctx.config.model.params()?;
    let ls = &ctx.config.landscape;
    let (w_min, w_max) = fold_interval(p.a);
    let guard = 1e-9;
    let mut sink = sink(ctx, "landscape", out_dir)?;

    let mut rows = Vec::with_capacity(ls.n_w);
    for k in 0..ls.n_w {
        let w = w_min + guard + (w_max - w_min - 2.0 * guard) * k as f64 / (ls.n_w - 1).max(1) as f64;
        let b = barriers(w, p.a, p.sigma).map_err(CliError::from_lib)?;
        rows.push(vec![
            Cell::F(w),
            Cell::F(b.du_left),
            Cell::F(b.du_right),
            b.tau_left.into(),
            b.tau_right.into(),
        ]);
    }
    write_csv(
        &sink.path("barriers.csv"),
        &["w", "dU_left", "dU_right", "tau_left", "tau_right"],
        &rows,
    )?;

    let mut urows = Vec::new();
    for &w in &ls.profile_w {
        for k in 0..ls.n_v {
            let v = -0.6 + 2.0 * k as f64 / (ls.n_v - 1).max(1) as f64;
            urows.push(vec![Cell::F(v), Cell::F(w), Cell::F(potential(v, w, p.a))]);
        }
    }
    write_csv(&sink.path("potential.csv"), &["v", "w", "U"], &urows)?;

    if ctx.svg {
        let to_pts = |f: fn(&sisr_core::BarrierPair) -> f64| {
            rows.iter()
                .map(|r| match (&r[0], &r[1], &r[2]) {
                    (Cell::F(w), Cell::F(l), Cell::F(rr)) => (*w, *l, *rr),
                    _ => unreachable!(),
                })
                .map(move |(w, l, rr)| {
                    (w, Some(f(&sisr_core::BarrierPair {
                        du_left: l,
                        du_right: rr,
                        c_left: 0.0,
                        c_right: 0.0,
                        tau_left: None,
                        tau_right: None,
                    })))
                })
                .collect::<Vec<_>>()
        };
        let svg = line_plot(
            &format!("Barrier heights, a = {}", p.a),
            "w",
            "dU",
            false,
            &[
                Series { label: "dU_left", points: to_pts(|b| b.du_left), color: "#1f77b4" },
                Series { label: "dU_right", points: to_pts(|b| b.du_right), color: "#d62728" },
            ],
        );
        std::fs::write(sink.path("barriers.svg"), svg)
            .map_err(|e| CliError::new(format!("write barriers.svg: {e}")))?;
    }
    println!("landscape: {} w samples on [{w_min:.6}, {w_max:.6}]", ls.n_w);
    sink.finish()?;
    Ok(())
}

pub fn simulate(ctx: &Ctx, out_dir: &Path) -> Result<(), CliError> {
    let p = ctx.config.model.params()?;
    let sim = &ctx.config.simulate;
    let seed = StreamSeed::new(ctx.seed, rng::stream_id(rng::tag::SIMULATE, &[rng::salt(p.sigma)]));
    let traj =
        integrate(&p, sim.init(), sim.dt, sim.n_steps, seed).map_err(CliError::from_lib)?;
    let mut sink = sink(ctx, "simulate", out_dir)?;
    let rows: Vec<Vec<Cell>> = (0..traj.len())
        .map(|k| {
            vec![
                Cell::F(traj.time_at(k)),
                Cell::F(traj.v[k]),
                Cell::F(traj.w[k]),
                Cell::F(traj.noise[k]),
            ]
        })
        .collect();
    write_csv(&sink.path("trajectory.csv"), &["t", "v", "w", "noise"], &rows)?;
    sink.write_json(
        "trajectory_params.json",
        &serde_json::json!({
            "params": p,
            "dt": sim.dt,
            "n_steps": sim.n_steps,
            "init": sim.init(),
            "seed": seed,
        }),
    )?;
    if ctx.svg {
        let stride = (traj.len() / 2000).max(1);
        let pts = |xs: &[f64]| {
            xs.iter()
                .enumerate()
                .step_by(stride)
                .map(|(k, &x)| (traj.time_at(k), Some(x)))
                .collect::<Vec<_>>()
        };
        let svg = line_plot(
            &format!("Trajectory, a={} eps={} sigma={}", p.a, p.eps, p.sigma),
            "t",
            "state",
            false,
            &[
                Series { label: "v", points: pts(&traj.v), color: "#1f77b4" },
                Series { label: "w", points: pts(&traj.w), color: "#2ca02c" },
            ],
        );
        std::fs::write(sink.path("trajectory.svg"), svg)
            .map_err(|e| CliError::new(format!("write trajectory.svg: {e}")))?;
    }
    println!("simulate: {} steps, final state ({:.4}, {:.4})", sim.n_steps, traj.v.last().unwrap(), traj.w.last().unwrap());
    sink.finish()?;
    Ok(())
}

fn curve_rows(curve: &CvCurve) -> Vec<Vec<Cell>> {
    (0..curve.sigma_grid.len())
        .map(|i| {
            vec![
                Cell::F(curve.sigma_grid[i]),
                curve.cv_values[i].into(),
                Cell::I(curve.n_spikes_per_point[i] as i64),
                Cell::S(status_str(curve.statuses[i]).into()),
            ]
        })
        .collect()
}

const CURVE_SCHEMA: [&str; 4] = ["sigma", "cv", "n_spikes", "status"];

pub fn sweep(ctx: &Ctx, out_dir: &Path) -> Result<(), CliError> {
    let p = ctx.config.model.params()?;
    let sw = &ctx.config.sweep;
    let sigma_grid = sw.sigma.values()?;
    let opts = sw.options(ctx.config.simulate.init());
    let seed = StreamSeed::new(ctx.seed, 0);
    let mut sink = sink(ctx, "sweep", out_dir)?;

    let grid_mode = sw.a_values.len() > 1 || sw.eps_values.len() > 1;
    if grid_mode {
        let a_grid = if sw.a_values.is_empty() { vec![p.a] } else { sw.a_values.clone() };
        let eps_grid = if sw.eps_values.is_empty() { vec![p.eps] } else { sw.eps_values.clone() };
        let grid = cv_min_grid(&p, &a_grid, &eps_grid, &sigma_grid, &opts, seed)
            .map_err(CliError::from_lib)?;
        let mut rows = Vec::new();
        for (i, &a) in grid.a_grid.iter().enumerate() {
            for (j, &eps) in grid.eps_grid.iter().enumerate() {
                rows.push(vec![
                    Cell::F(a),
                    Cell::F(eps),
                    grid.cv_min[i][j].into(),
                    grid.argmin_sigma[i][j].into(),
                ]);
            }
        }
        write_csv(&sink.path("cv_min_grid.csv"), &["a", "eps", "cv_min", "argmin_sigma"], &rows)?;
        if ctx.svg {
            let svg = heatmap("Minimum CV over noise", &grid.a_grid, &grid.eps_grid, &grid.cv_min);
            std::fs::write(sink.path("cv_min_grid.svg"), svg)
                .map_err(|e| CliError::new(format!("write cv_min_grid.svg: {e}")))?;
        }
        println!("sweep: {} x {} cells over {} noise levels", a_grid.len(), eps_grid.len(), sigma_grid.len());
    } else {
        let a_override = sw.a_values.first().copied();
        let base = sisr_core::ModelParams { a: a_override.unwrap_or(p.a), ..p };
        let curve = cv_curve(&base, &sigma_grid, &opts, seed).map_err(CliError::from_lib)?;
        write_csv(&sink.path("cv_curve.csv"), &CURVE_SCHEMA, &curve_rows(&curve))?;
        if ctx.svg {
            let pts: Vec<(f64, Option<f64>)> =
                curve.sigma_grid.iter().zip(&curve.cv_values).map(|(&s, &c)| (s, c)).collect();
            let svg = line_plot(
                &format!("CV vs sigma, a={} eps={}", base.a, base.eps),
                "sigma",
                "CV",
                true,
                &[Series { label: "simulated", points: pts, color: "#1f77b4" }],
            );
            std::fs::write(sink.path("cv_curve.svg"), svg)
                .map_err(|e| CliError::new(format!("write cv_curve.svg: {e}")))?;
        }
        let defined = curve.cv_values.iter().filter(|c| c.is_some()).count();
        println!("sweep: {} / {} points defined", defined, sigma_grid.len());
    }
    sink.finish()?;
    Ok(())
}

fn nrmse_rows(report: &TrainReport) -> Vec<Vec<Cell>> {
    report
        .evals
        .iter()
        .map(|e| vec![Cell::I(e.epoch as i64), Cell::F(e.train_nrmse), Cell::F(e.test_nrmse)])
        .collect()
}

fn loss_rows(report: &TrainReport) -> Vec<Vec<Cell>> {
    report
        .losses
        .iter()
        .map(|r| {
            vec![
                Cell::I(r.epoch as i64),
                Cell::F(r.total),
                r.values.data.into(),
                r.values.ic.into(),
                r.values.phy1.into(),
                r.values.phy2.into(),
                Cell::F(r.weights.data),
                Cell::F(r.weights.ic),
                Cell::F(r.weights.phy1),
                Cell::F(r.weights.phy2),
                Cell::I(r.n_escape_events.0 as i64),
                Cell::I(r.n_escape_events.1 as i64),
            ]
        })
        .collect()
}

const LOSS_SCHEMA: [&str; 12] = [
    "epoch", "total", "data", "ic", "phy1", "phy2", "lambda_data", "lambda_ic", "lambda_phy1",
    "lambda_phy2", "n_escape_left", "n_escape_right",
];

fn build_dataset(ctx: &Ctx) -> Result<sisr_core::Dataset, CliError> {
    let p = ctx.config.model.params()?;
    let t = &ctx.config.train;
    let seed = StreamSeed::new(
        ctx.seed,
        rng::stream_id(rng::tag::SIMULATE, &[rng::salt(p.sigma), rng::salt(p.eps)]),
    );
    make_dataset(&p, ctx.config.simulate.init(), t.dt, t.n_points, seed, t.split_fraction, t.burn_in)
        .map_err(CliError::from_lib)
}

fn checkpoint_of<'a>(
    sp: &'a StatePredictor,
    report: &TrainReport,
    seed: u64,
) -> (CheckpointHeader, &'a sisr_nn::mlp::NetworkParams) {
    let header = CheckpointHeader {
        layer_sizes: sp.net.layer_sizes.clone(),
        seed: StreamSeed::new(seed, 0),
        epoch: report.best_epoch,
        metrics: serde_json::json!({
            "best_test_nrmse": report.best_test_nrmse,
            "label": report.config.loss_mask.label(),
        }),
        normalizer: Some(sp.norm),
        head: sp.head,
    };
    (header, &sp.net)
}

pub fn train_cmd(ctx: &Ctx, out_dir: &Path) -> Result<(), CliError> {
    let ds = build_dataset(ctx)?;
    let cfg = ctx.config.train.train_config(ctx.seed);
    let (sp, report) = train(&cfg, &ds).map_err(CliError::from_lib)?;
    let mut sink = sink(ctx, "train", out_dir)?;
    if ctx.config.train.emit_dataset {
        let rows: Vec<Vec<Cell>> = ds
            .inputs
            .iter()
            .zip(&ds.targets)
            .map(|(x, y)| {
                vec![Cell::F(x[0]), Cell::F(x[1]), Cell::F(x[2]), Cell::F(y[0]), Cell::F(y[1])]
            })
            .collect();
        write_csv(
            &sink.path("dataset.csv"),
            &["v", "w", "noise_increment", "v_next", "w_next"],
            &rows,
        )?;
        sink.write_json(
            "dataset_meta.json",
            &serde_json::json!({
                "dt": ds.dt,
                "params": ds.params,
                "seed": ds.seed,
                "split": ds.split,
                "burn_in": ds.burn_in,
                "init": ds.init,
                "n_points": ds.len(),
            }),
        )?;
    }
    let (header, net) = checkpoint_of(&sp, &report, ctx.seed);
    save_checkpoint(&sink.path("checkpoint.ckpt"), net, &header).map_err(CliError::from_lib)?;
    sink.write_json("train_report.json", &report)?;
    write_csv(&sink.path("nrmse_curve.csv"), &["epoch", "train_nrmse", "test_nrmse"], &nrmse_rows(&report))?;
    write_csv(&sink.path("losses.csv"), &LOSS_SCHEMA, &loss_rows(&report))?;
    println!(
        "train[{}]: best epoch {} test NRMSE {:.5} ({:.0}s)",
        cfg.loss_mask.label(),
        report.best_epoch,
        report.best_test_nrmse,
        report.wall_secs
    );
    sink.finish()?;
    Ok(())
}

pub fn ablate(ctx: &Ctx, out_dir: &Path) -> Result<(), CliError> {
    let ds = build_dataset(ctx)?;
    let cfg = ctx.config.train.train_config(ctx.seed);
    let outcome = run_ablation(&cfg, &ds);
    let mut sink = sink(ctx, "ablate", out_dir)?;
    let mut rows = Vec::new();
    for (i, row) in outcome.rows.iter().enumerate() {
        rows.push(vec![
            Cell::S(row.label.clone()),
            row.train_nrmse.into(),
            row.test_nrmse.into(),
            row.best_epoch.map_or(Cell::Na, |e| Cell::I(e as i64)),
            row.error.as_deref().map_or(Cell::S(String::new()), Cell::from),
        ]);
        let tag = row.label.replace('+', "_");
        if let Some(report) = &outcome.reports[i] {
            write_csv(
                &sink.path(&format!("nrmse_curve_{tag}.csv")),
                &["epoch", "train_nrmse", "test_nrmse"],
                &nrmse_rows(report),
            )?;
            if let Some(sp) = &outcome.predictors[i] {
                let (header, net) = checkpoint_of(sp, report, ctx.seed);
                save_checkpoint(&sink.path(&format!("checkpoint_{tag}.ckpt")), net, &header)
                    .map_err(CliError::from_lib)?;
            }
        }
        println!(
            "ablate[{}]: test NRMSE {}",
            row.label,
            row.test_nrmse.map_or("failed".into(), |v| format!("{v:.5}"))
        );
    }
    write_csv(
        &sink.path("ablation.csv"),
        &["label", "train_nrmse", "test_nrmse", "best_epoch", "error"],
        &rows,
    )?;
    sink.finish()?;
    Ok(())
}

fn load_predictor(ctx: &Ctx) -> Result<StatePredictor, CliError> {
    StatePredictor::from_checkpoint(Path::new(&ctx.config.eval.checkpoint))
        .map_err(CliError::from_lib)
}

pub fn eval(ctx: &Ctx, out_dir: &Path) -> Result<(), CliError> {
    let p = ctx.config.model.params()?;
    let ev = &ctx.config.eval;
    let sp = load_predictor(ctx)?;
    let seed = StreamSeed::new(ctx.seed, rng::stream_id(rng::tag::EVAL_ROLLOUT, &[]));
    let r = rollout(&sp, ctx.config.simulate.init(), p.sigma, ctx.config.simulate.dt, ev.n_steps, seed, ev.v_th);
    let mut sink = sink(ctx, "eval", out_dir)?;
    let rows: Vec<Vec<Cell>> = (0..r.v.len())
        .map(|k| vec![Cell::F(k as f64 * r.dt), Cell::F(r.v[k]), Cell::F(r.w[k])])
        .collect();
    write_csv(&sink.path("rollout.csv"), &["t", "v", "w"], &rows)?;
    sink.write_json(
        "rollout_summary.json",
        &serde_json::json!({
            "bounded": r.bounded,
            "n_spikes": r.stats.n_spikes,
            "cv": r.stats.cv,
            "n_steps": ev.n_steps,
            "sigma": p.sigma,
            "seed": seed,
        }),
    )?;
    if ctx.svg {
        let stride = (r.v.len() / 2000).max(1);
        let pts = |xs: &[f64]| {
            xs.iter()
                .enumerate()
                .step_by(stride)
                .map(|(k, &x)| (k as f64 * r.dt, Some(x)))
                .collect::<Vec<_>>()
        };
        let svg = line_plot(
            "Surrogate rollout",
            "t",
            "state",
            false,
            &[
                Series { label: "v", points: pts(&r.v), color: "#1f77b4" },
                Series { label: "w", points: pts(&r.w), color: "#2ca02c" },
            ],
        );
        std::fs::write(sink.path("rollout.svg"), svg)
            .map_err(|e| CliError::new(format!("write rollout.svg: {e}")))?;
    }
    println!("eval: bounded={} spikes={} cv={:?}", r.bounded, r.stats.n_spikes, r.stats.cv);
    sink.finish()?;
    Ok(())
}

pub fn predict_cv(ctx: &Ctx, out_dir: &Path) -> Result<(), CliError> {
    let p = ctx.config.model.params()?;
    let ev = &ctx.config.eval;
    let sp = load_predictor(ctx)?;
    let sigma_grid = ev.sigma.values()?;
    let opts = ctx.config.sweep.options(ctx.config.simulate.init());
    let seed = StreamSeed::new(ctx.seed, 0);
    let simulated = cv_curve(&p, &sigma_grid, &opts, seed).map_err(CliError::from_lib)?;
    let predicted = predicted_cv_curve(
        &sp,
        &p,
        &sigma_grid,
        ctx.config.simulate.init(),
        ctx.config.simulate.dt,
        ev.horizon_steps,
        ev.min_spikes,
        ev.v_th,
        seed,
    )
    .map_err(CliError::from_lib)?;
    let comparison = compare_curves(&simulated, &predicted).map_err(CliError::from_lib)?;
    let mut sink = sink(ctx, "predict-cv", out_dir)?;
    write_csv(&sink.path("simulated_cv.csv"), &CURVE_SCHEMA, &curve_rows(&simulated))?;
    write_csv(&sink.path("predicted_cv.csv"), &CURVE_SCHEMA, &curve_rows(&predicted))?;
    sink.write_json("comparison.json", &comparison)?;
    if ctx.svg {
        let as_pts = |c: &CvCurve| {
            c.sigma_grid.iter().zip(&c.cv_values).map(|(&s, &v)| (s, v)).collect::<Vec<_>>()
        };
        let svg = line_plot(
            "Simulated vs surrogate coherence",
            "sigma",
            "CV",
            true,
            &[
                Series { label: "simulated", points: as_pts(&simulated), color: "#1f77b4" },
                Series { label: "surrogate", points: as_pts(&predicted), color: "#d62728" },
            ],
        );
        std::fs::write(sink.path("cv_comparison.svg"), svg)
            .map_err(|e| CliError::new(format!("write cv_comparison.svg: {e}")))?;
    }
    println!(
        "predict-cv: max|dCV|={:?} argmin shift={:?}",
        comparison.max_abs_delta, comparison.argmin_shift
    );
    sink.finish()?;
    Ok(())
}

/// Replay a manifest: same command, config, and seed into a new directory.
pub fn rerun(manifest_path: &Path, out_dir: &Path, threads_set: bool) -> Result<(), CliError> {
    let manifest = RunManifest::load(manifest_path)?;
    let _ = threads_set;
    let ctx = Ctx { config: manifest.config.clone(), seed: manifest.master_seed, svg: manifest.svg };
    dispatch_command(&manifest.command, &ctx, out_dir)
}

pub fn dispatch_command(command: &str, ctx: &Ctx, out_dir: &Path) -> Result<(), CliError> {
    match command {
        "regime" => regime(ctx, out_dir),
        "landscape" => landscape(ctx, out_dir),
        "simulate" => simulate(ctx, out_dir),
        "sweep" => sweep(ctx, out_dir),
        "train" => train_cmd(ctx, out_dir),
        "ablate" => ablate(ctx, out_dir),
        "eval" => eval(ctx, out_dir),
        "predict-cv" => predict_cv(ctx, out_dir),
        other => Err(CliError::new(format!("unknown command in manifest: {other}"))),
    }
}
