//! End-to-end tests of the `stpp` binary: the simulate → train → evaluate
//! pipeline, determinism of outputs, exit codes, and help output.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn stpp() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stpp"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = stpp().args(args).output().expect("spawn stpp");
    assert!(
        out.status.success(),
        "stpp {args:?} failed with {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn run_code(args: &[&str]) -> (i32, String) {
    let out = stpp().args(args).output().expect("spawn stpp");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn temp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("stpp-cli-tests").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_writes_sequences_and_manifest() {
    let dir = temp_dir("simulate");
    run_ok(&[
        "simulate",
        "--sim.process",
        "sthp",
        "--sim.preset",
        "ds1",
        "--sim.horizon",
        "400",
        "--sim.seqs",
        "2",
        "--sim.seed",
        "5",
        "--out",
        path_str(&dir),
    ]);
    assert!(dir.join("seq_000.jsonl").exists());
    assert!(dir.join("seq_001.jsonl").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["model"]["params"]["alpha"], 0.5);
    assert_eq!(manifest["model"]["params"]["beta"], 1.0);
    assert_eq!(manifest["model"]["params"]["mu"], 0.2);
    assert_eq!(manifest["seed"], 5);
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let dir_a = temp_dir("determinism-a");
    let dir_b = temp_dir("determinism-b");
    for dir in [&dir_a, &dir_b] {
        run_ok(&[
            "simulate",
            "--sim.horizon",
            "300",
            "--sim.seed",
            "11",
            "--out",
            path_str(dir),
        ]);
    }
    let a = std::fs::read(dir_a.join("seq_000.jsonl")).unwrap();
    let b = std::fs::read(dir_b.join("seq_000.jsonl")).unwrap();
    assert_eq!(a, b, "same seed must produce byte-identical sequences");
    let ma = std::fs::read(dir_a.join("manifest.json")).unwrap();
    let mb = std::fs::read(dir_b.join("manifest.json")).unwrap();
    assert_eq!(ma, mb);
}

#[test]
fn zero_horizon_is_a_usage_error() {
    let (code, stderr) = run_code(&["simulate", "--sim.horizon", "0", "--out", "/tmp/unused"]);
    assert_eq!(code, 2, "stderr: {stderr}");
    assert!(stderr.contains("horizon"));
}

#[test]
fn unknown_keys_and_presets_are_rejected() {
    let (code, stderr) = run_code(&["simulate", "--sim.bogus", "1"]);
    assert_eq!(code, 2);
    assert!(stderr.contains("unknown config key"));

    let (code, stderr) = run_code(&["simulate", "--sim.preset", "ds9", "--out", "/tmp/unused"]);
    assert_eq!(code, 2);
    assert!(
        stderr.contains("valid presets: ds1, ds2, ds3"),
        "stderr: {stderr}"
    );
}

#[test]
fn help_lists_every_key_with_default() {
    for sub in [
        "simulate", "fit-mle", "train", "evaluate", "predict", "grid",
    ] {
        let out = run_ok(&[sub, "--help"]);
        let text = String::from_utf8_lossy(&out.stdout).into_owned();
        assert!(
            text.contains("--config"),
            "{sub} help misses --config note:\n{text}"
        );
        assert!(text.contains('['), "{sub} help shows defaults:\n{text}");
    }
    let out = run_ok(&["train", "--help"]);
    let text = String::from_utf8_lossy(&out.stdout).into_owned();
    for key in ["train.lr", "train.epochs", "train.j", "split.window-length"] {
        assert!(text.contains(key), "train help misses {key}");
    }
}

#[test]
fn pipeline_simulate_train_evaluate_smoke() {
    let dir = temp_dir("pipeline");
    run_ok(&[
        "simulate",
        "--sim.preset",
        "ds1",
        "--sim.horizon",
        "700",
        "--sim.seed",
        "3",
        "--out",
        path_str(&dir),
    ]);
    let data = dir.join("seq_000.jsonl");
    let ckpt = dir.join("model");
    run_ok(&[
        "train",
        "--data",
        path_str(&data),
        "--split.window-length",
        "20",
        "--train.d-model",
        "32",
        "--train.d-z",
        "16",
        "--train.d-hidden",
        "64",
        "--train.decoder-hidden",
        "64",
        "--train.j",
        "20",
        "--train.epochs",
        "50",
        "--train.batch",
        "64",
        "--out",
        path_str(&ckpt),
        "--trace-out",
        path_str(&dir.join("trace.csv")),
    ]);
    assert!(ckpt.with_extension("bin").exists());
    let trace = std::fs::read_to_string(dir.join("trace.csv")).unwrap();
    assert!(trace.lines().count() >= 51, "expected 50 epochs of trace");

    let metrics_path = dir.join("metrics.json");
    run_ok(&[
        "evaluate",
        "--data",
        path_str(&data),
        "--split.window-length",
        "20",
        "--model.checkpoint",
        path_str(&ckpt),
        "--truth.process",
        "sthp",
        "--truth.preset",
        "ds1",
        "--eval.grid.nx",
        "31",
        "--eval.grid.ny",
        "31",
        "--out",
        path_str(&metrics_path),
    ]);
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&metrics_path).unwrap()).unwrap();
    for key in ["ll_space", "ll_time", "hd", "mape"] {
        let v = metrics[key].as_f64().unwrap_or(f64::NAN);
        assert!(v.is_finite(), "{key} not finite in {metrics}");
    }
    let hd = metrics["hd"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&hd));
}

#[test]
fn evaluate_ground_truth_against_itself_has_zero_distance() {
    let dir = temp_dir("self-eval");
    run_ok(&[
        "simulate",
        "--sim.preset",
        "ds1",
        "--sim.horizon",
        "500",
        "--sim.seed",
        "9",
        "--out",
        path_str(&dir),
    ]);
    let data = dir.join("seq_000.jsonl");
    // The model is the DS1 parameter JSON; the truth is the same preset.
    let params = serde_json::json!({
        "mu": 0.2, "alpha": 0.5, "beta": 1.0,
        "s_mu": [0.0, 0.0],
        "cov_g0": [0.2, 0.0, 0.0, 0.2],
        "cov_g2": [0.5, 0.0, 0.0, 0.5],
    });
    let params_path = dir.join("truth_params.json");
    std::fs::write(&params_path, serde_json::to_string(&params).unwrap()).unwrap();
    let metrics_path = dir.join("metrics.json");
    run_ok(&[
        "evaluate",
        "--data",
        path_str(&data),
        "--split.window-length",
        "25",
        "--model.params",
        path_str(&params_path),
        "--truth.process",
        "sthp",
        "--truth.preset",
        "ds1",
        "--eval.grid.nx",
        "31",
        "--eval.grid.ny",
        "31",
        "--out",
        path_str(&metrics_path),
    ]);
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&metrics_path).unwrap()).unwrap();
    assert!(metrics["hd"].as_f64().unwrap() < 1e-9, "{metrics}");
    assert!(metrics["mape"].as_f64().unwrap() < 1e-9);
}

#[test]
fn fit_mle_recovers_ds3_parameters() {
    let dir = temp_dir("fit");
    run_ok(&[
        "simulate",
        "--sim.preset",
        "ds3",
        "--sim.horizon",
        "2000",
        "--sim.seed",
        "2",
        "--out",
        path_str(&dir),
    ]);
    let out = dir.join("fit.json");
    run_ok(&[
        "fit-mle",
        "--data",
        path_str(&dir.join("seq_000.jsonl")),
        "--out",
        path_str(&out),
        "--trace-out",
        path_str(&dir.join("fit_trace.csv")),
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let p = &report["params"];
    let rel = |got: f64, want: f64| (got - want).abs() / want;
    assert!(rel(p["mu"].as_f64().unwrap(), 1.0) < 0.15, "{p}");
    assert!(rel(p["alpha"].as_f64().unwrap(), 0.3) < 0.15, "{p}");
    assert!(rel(p["beta"].as_f64().unwrap(), 2.0) < 0.15, "{p}");
    let trace = std::fs::read_to_string(dir.join("fit_trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,neg_loglik"));
}

#[test]
fn predict_emits_future_times_with_neutral_model() {
    let dir = temp_dir("predict");
    run_ok(&[
        "simulate",
        "--sim.preset",
        "ds1",
        "--sim.horizon",
        "500",
        "--sim.seed",
        "4",
        "--out",
        path_str(&dir),
    ]);
    let data = dir.join("seq_000.jsonl");
    let ckpt = dir.join("model");
    // Zero learning rate keeps the initialization weights, whose neutral
    // decay rates give a proper (non-defective) predictive distribution.
    run_ok(&[
        "train",
        "--data",
        path_str(&data),
        "--split.window-length",
        "25",
        "--train.d-model",
        "32",
        "--train.d-z",
        "16",
        "--train.d-hidden",
        "64",
        "--train.decoder-hidden",
        "64",
        "--train.j",
        "20",
        "--train.epochs",
        "1",
        "--train.lr",
        "0",
        "--out",
        path_str(&ckpt),
        "--trace-out",
        path_str(&dir.join("trace.csv")),
    ]);
    let pred_path = dir.join("pred.jsonl");
    run_ok(&[
        "predict",
        "--data",
        path_str(&data),
        "--split.window-length",
        "25",
        "--model.checkpoint",
        path_str(&ckpt),
        "--out",
        path_str(&pred_path),
    ]);
    let text = std::fs::read_to_string(&pred_path).unwrap();
    assert!(!text.trim().is_empty());
    for line in text.lines() {
        let row: serde_json::Value = serde_json::from_str(line).unwrap();
        let t_n = row["t_n"].as_f64().unwrap();
        let t_hat = row["t_hat"].as_f64().unwrap();
        assert!(t_hat > t_n, "prediction must land after the window: {row}");
        assert!(row["x_hat"].as_f64().unwrap().is_finite());
        assert!(row["y_hat"].as_f64().unwrap().is_finite());
    }
}

#[test]
fn grid_exports_csv_surfaces() {
    let dir = temp_dir("grid");
    run_ok(&[
        "simulate",
        "--sim.preset",
        "ds1",
        "--sim.horizon",
        "400",
        "--sim.seed",
        "6",
        "--out",
        path_str(&dir),
    ]);
    let grids = dir.join("grids");
    run_ok(&[
        "grid",
        "--data",
        path_str(&dir.join("seq_000.jsonl")),
        "--split.window-length",
        "25",
        "--truth.preset",
        "ds1",
        "--grid.times",
        "0.5,1.0",
        "--grid.nx",
        "15",
        "--grid.ny",
        "15",
        "--out",
        path_str(&grids),
    ]);
    for name in ["grid_00.csv", "grid_01.csv"] {
        let text = std::fs::read_to_string(grids.join(name)).unwrap();
        assert!(text.starts_with("x,y,value"));
        assert_eq!(text.lines().count(), 1 + 15 * 15);
    }
}

#[test]
fn failed_commands_leave_no_partial_outputs() {
    let dir = temp_dir("partial");
    let missing = dir.join("does-not-exist.jsonl");
    let out = dir.join("fit.json");
    let (code, _) = run_code(&[
        "fit-mle",
        "--data",
        path_str(&missing),
        "--out",
        path_str(&out),
        "--trace-out",
        path_str(&dir.join("fit_trace.csv")),
    ]);
    assert_eq!(code, 2);
    assert!(!out.exists());
    assert!(!dir.join("fit_trace.csv").exists());
}

#[test]
fn config_file_with_cli_override() {
    let dir = temp_dir("config-file");
    let conf = dir.join("run.conf");
    std::fs::write(&conf, "sim.horizon = 200\nsim.seed = 8\n").unwrap();
    run_ok(&[
        "simulate",
        "--config",
        path_str(&conf),
        "--sim.seed",
        "9",
        "--out",
        path_str(&dir),
    ]);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    // CLI override beats the file; the file's horizon applies.
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["horizon"], 200.0);
}
