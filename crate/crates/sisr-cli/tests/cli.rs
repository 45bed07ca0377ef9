//! Black-box checks of the binary's error behavior and output shapes.

use std::process::Command;

fn sisr(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_sisr")).args(args).output().expect("spawn sisr")
}

#[test]
fn missing_config_names_the_path() {
    let out = sisr(&["regime", "--config", "/no/such/config.toml"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.lines().count(), 1, "error must be a single line: {err:?}");
    assert!(err.contains("/no/such/config.toml"), "error should name the path: {err}");
    assert!(err.starts_with("error:"));
}

#[test]
fn bad_config_key_is_named_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[model]\na = 0.1\nbogus_key = 3\n").unwrap();
    let out = sisr(&["regime", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bogus_key"), "should name the key: {err}");
    assert!(err.contains("line 3") || err.contains("3,"), "should locate the key: {err}");
}

#[test]
fn one_point_sweep_writes_header_plus_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("one.toml");
    std::fs::write(
        &cfg,
        "[sweep]\nt_horizon = 5e3\nmin_spikes = 3\nmax_doublings = 1\n[sweep.sigma]\nmin = 0.05\nmax = 0.05\ncount = 1\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = sisr(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("cv_curve.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2, "header plus exactly one data row: {csv}");
    assert_eq!(lines[0], "sigma,cv,n_spikes,status");
}

#[test]
fn invalid_model_parameters_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("neg.toml");
    std::fs::write(&cfg, "[model]\nb = -1.0\n").unwrap();
    let out = sisr(&["regime", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("b must be > 0"));
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("t.toml");
    std::fs::write(
        &cfg,
        "[sweep]\nt_horizon = 2e4\nmin_spikes = 10\nmax_doublings = 1\n[sweep.sigma]\nmin = 0.02\nmax = 0.1\ncount = 4\n",
    )
    .unwrap();
    let run = |threads: &str, sub: &str| {
        let out_dir = dir.path().join(format!("out{threads}"));
        let out = sisr(&[
            "sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--threads",
            threads,
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(out_dir.join(sub)).unwrap()
    };
    assert_eq!(run("1", "cv_curve.csv"), run("2", "cv_curve.csv"));
}

#[test]
fn grid_mode_sweep_emits_min_cv_map() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("grid.toml");
    std::fs::write(
        &cfg,
        "[model]\na = 0.05\neps = 0.005\n[sweep]\nt_horizon = 2e4\nmin_spikes = 10\nmax_doublings = 1\na_values = [0.05, 0.1]\neps_values = [0.005, 0.01]\n[sweep.sigma]\nmin = 0.03\nmax = 0.1\ncount = 3\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = sisr(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--svg",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("cv_min_grid.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "a,eps,cv_min,argmin_sigma");
    assert_eq!(lines.len(), 5, "2x2 cells: {csv}");
    assert!(out_dir.join("cv_min_grid.svg").exists());
}
