use std::path::Path;
use std::process::Command;

use csipred::cli::{self, gradcheck};
use csipred::config::ExperimentConfig;
use csipred::forecast::ModelOptions;

fn small_config(dir: &Path) -> String {
    let mut cfg = ExperimentConfig::desk_scale();
    cfg.channel.n_timestamps = 200;
    cfg.codec.hyper.epochs = 2;
    cfg.forecaster.hyper.max_epochs = 1;
    cfg.eval.seeds = vec![1];
    let path = dir.join("config.json");
    std::fs::write(&path, cfg.to_json_pretty().unwrap()).unwrap();
    path.to_str().unwrap().to_owned()
}

fn run(workdir: &Path, args: &[&str]) -> i32 {
    let mut argv = vec!["csipred", "--workdir", workdir.to_str().unwrap()];
    argv.extend_from_slice(args);
    cli::run(argv)
}

#[test]
fn generate_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let a = dir.path().join("a.bin");
    let b = dir.path().join("b.bin");
    assert_eq!(run(dir.path(), &["generate", "--config", &cfg, "--out", a.to_str().unwrap(), "--seed", "7"]), 0);
    assert_eq!(run(dir.path(), &["generate", "--config", &cfg, "--out", b.to_str().unwrap(), "--seed", "7"]), 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let c = dir.path().join("c.bin");
    assert_eq!(run(dir.path(), &["generate", "--config", &cfg, "--out", c.to_str().unwrap(), "--seed", "8"]), 0);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_csipred");
    let out = Command::new(bin).args(["generate", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());

    let out = Command::new(bin).arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    let out = Command::new(bin)
        .args(["generate", "--config", missing.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gradcheck_exit_code_follows_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let report = gradcheck("lstm", &ModelOptions::default(), 12, 3, 1e-6, 1).unwrap();
    let expect = if report.max_relative_error < 1e-4 { 0 } else { 2 };
    assert_eq!(run(dir.path(), &["gradcheck", "--model", "lstm", "--tol", "1e-4"]), expect);

    let loose = format!("{:e}", report.max_relative_error * 2.0);
    assert_eq!(run(dir.path(), &["gradcheck", "--model", "lstm", "--tol", &loose]), 0);
    let tight = format!("{:e}", report.max_relative_error / 2.0);
    assert_eq!(run(dir.path(), &["gradcheck", "--model", "lstm", "--tol", &tight]), 2);

    assert_eq!(run(dir.path(), &["gradcheck", "--model", "codec"]), 0);
    assert_eq!(run(dir.path(), &["gradcheck", "--model", "transformer"]), 2);
}

#[test]
fn window_and_horizon_flags_shape_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    for step in [vec!["generate"], vec!["train-codec"], vec!["encode"]] {
        let mut args = step;
        args.extend(["--config", &cfg]);
        assert_eq!(run(dir.path(), &args), 0);
    }
    let args = ["train-forecaster", "--config", &cfg, "--model", "stemgnn", "--window", "12", "--horizon", "5"];
    assert_eq!(run(dir.path(), &args), 0);
    let path = cli::forecaster_path(dir.path(), csipred::forecast::Arch::StemGnn, 5, 1);
    let model = cli::load_forecaster(&path).unwrap();
    use csipred::forecast::Predictor;
    assert_eq!((model.window(), model.horizon()), (12, 5));
}

#[test]
fn artifacts_from_another_config_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    assert_eq!(run(dir.path(), &["generate", "--config", &cfg]), 0);
    assert_eq!(run(dir.path(), &["train-codec", "--config", &cfg]), 0);

    // same work directory, different channel settings
    let mut other = ExperimentConfig::load(&cfg).unwrap();
    other.channel.user_speed_mps = 10.0;
    let other_path = dir.path().join("other.json");
    std::fs::write(&other_path, other.to_json_pretty().unwrap()).unwrap();
    assert_eq!(run(dir.path(), &["encode", "--config", other_path.to_str().unwrap()]), 2);
    assert_eq!(run(dir.path(), &["encode", "--config", &cfg]), 0);
}

#[test]
fn report_without_evaluations_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["report"]), 2);
}

#[test]
fn shipped_desk_config_loads() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/desk.json");
    assert_eq!(ExperimentConfig::load(path).unwrap(), ExperimentConfig::desk_scale());
}
