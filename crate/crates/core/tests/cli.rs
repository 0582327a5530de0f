//! End-to-end tests that drive the `advspheres` binary through every
//! command, checking artifacts, manifests, determinism, and exit codes.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_advspheres"));
    // Keep an ambient output-dir override from leaking into tests.
    cmd.env_remove("ADVSPHERES_OUTPUT_DIR");
    cmd
}

/// Scale-down overrides shared by every test so each command finishes in
/// well under a second.
const TINY: &[&str] = &[
    "--profile",
    "ci",
    "--set",
    "dim=4",
    "--set",
    "n_train=60",
    "--set",
    "n_val=200",
    "--set",
    "ensemble_size=8",
    "--set",
    "slice_burn_in=20",
    "--set",
    "slice_thin=1",
    "--set",
    "svi_iters=200",
    "--set",
    "attack_restarts=3",
    "--set",
    "attack_max_iters=60",
    "--set",
    "attack_surrogate_iters=20",
];

fn run(dir: &Path, extra: &[&str]) -> Output {
    let mut cmd = bin();
    cmd.args(TINY).arg("--output-dir").arg(dir).args(extra);
    cmd.output().expect("spawn advspheres")
}

fn run_ok(dir: &Path, extra: &[&str]) -> String {
    let out = run(dir, extra);
    assert!(
        out.status.success(),
        "command {extra:?} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn run_code(dir: &Path, extra: &[&str]) -> (i32, String) {
    let out = run(dir, extra);
    (
        out.status.code().expect("exit code"),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name))
        .unwrap_or_else(|e| panic!("read {name}: {e}"))
}

#[test]
fn generate_writes_files_and_is_deterministic() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let stdout = run_ok(a.path(), &["generate"]);
    assert!(stdout.contains("train: 60 points (inner 30, outer 30)"));
    assert!(stdout.contains("val: 200 points (inner 100, outer 100)"));
    for name in ["train.csv", "val.csv", "normalizer.csv", "generate.manifest.toml"] {
        assert!(a.path().join(name).is_file(), "missing {name}");
    }
    let manifest = read(a.path(), "generate.manifest.toml");
    assert!(manifest.contains("command = \"generate\""));
    assert!(manifest.contains("config_fingerprint = "));
    assert!(manifest.contains("[config]"));

    run_ok(b.path(), &["generate"]);
    assert_eq!(read(a.path(), "train.csv"), read(b.path(), "train.csv"));
    assert_eq!(read(a.path(), "val.csv"), read(b.path(), "val.csv"));

    // A different seed must change the data.
    let c = TempDir::new().unwrap();
    run_ok(c.path(), &["--seed", "5", "generate"]);
    assert_ne!(read(a.path(), "train.csv"), read(c.path(), "train.csv"));
}

#[test]
fn infer_map_saves_single_member_ensemble() {
    let dir = TempDir::new().unwrap();
    run_ok(dir.path(), &["generate"]);
    let stdout = run_ok(dir.path(), &["infer", "--method", "map"]);
    assert!(stdout.contains("MAP: 1 member(s), dim 4"));
    let csv = read(dir.path(), "map.csv");
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 1, "one member per row, no header");
    assert_eq!(rows[0].split(',').count(), 4);
    let meta = read(dir.path(), "map.meta.toml");
    assert!(meta.contains("n_members = 1"));
    let manifest = read(dir.path(), "infer.manifest.toml");
    assert!(manifest.contains("method = \"map\""));
}

#[test]
fn infer_mcmc_saves_requested_ensemble_size() {
    let dir = TempDir::new().unwrap();
    run_ok(dir.path(), &["generate"]);
    run_ok(dir.path(), &["infer", "--method", "mcmc"]);
    let rows = read(dir.path(), "mcmc.csv").lines().count();
    assert_eq!(rows, 8);
    assert!(dir.path().join("mcmc_diagnostics.csv").is_file());
}

#[test]
fn unknown_method_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    run_ok(dir.path(), &["generate"]);
    let (code, stderr) = run_code(dir.path(), &["infer", "--method", "bogus"]);
    assert_eq!(code, 2, "stderr: {stderr}");
    assert!(stderr.contains("unknown method 'bogus'"));
}

#[test]
fn infer_without_dataset_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let (code, stderr) = run_code(dir.path(), &["infer", "--method", "map"]);
    assert_eq!(code, 3, "stderr: {stderr}");
    assert!(stderr.contains("train.csv"));
}

#[test]
fn unknown_set_key_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let (code, stderr) = run_code(dir.path(), &["--set", "sead=3", "generate"]);
    assert_eq!(code, 2, "stderr: {stderr}");
    assert!(stderr.contains("--set sead=3"));
}

#[test]
fn attack_writes_per_source_artifacts() {
    let dir = TempDir::new().unwrap();
    run_ok(dir.path(), &["generate"]);
    run_ok(dir.path(), &["infer", "--method", "map"]);
    let ensemble = dir.path().join("map.csv");
    let stdout = run_ok(dir.path(), &["attack", "--ensemble", ensemble.to_str().unwrap()]);
    assert!(stdout.contains("source 0 -> target 1"));
    assert!(stdout.contains("source 1 -> target 0"));
    assert!(stdout.contains("best target probability over both spheres"));
    for source in [0, 1] {
        let restarts = read(dir.path(), &format!("attack_source{source}.csv"));
        let mut lines = restarts.lines();
        assert_eq!(lines.next(), Some("restart,target_prob,iters,termination"));
        assert_eq!(lines.count(), 3, "one row per restart");
        let point = read(dir.path(), &format!("attack_source{source}_point.csv"));
        let mut lines = point.lines();
        assert_eq!(lines.next(), Some("index,value"));
        assert_eq!(lines.count(), 4, "one row per input coordinate");
    }
    assert!(read(dir.path(), "attack.manifest.toml").contains("command = \"attack\""));
}

#[test]
fn attack_on_malformed_ensemble_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    run_ok(dir.path(), &["generate"]);
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "1.0,not-a-number\n").unwrap();
    let (code, stderr) = run_code(dir.path(), &["attack", "--ensemble", bad.to_str().unwrap()]);
    assert_eq!(code, 3, "stderr: {stderr}");
}

#[test]
fn bench_writes_results_csv_and_manifest_deterministically() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for dir in [a.path(), b.path()] {
        let stdout = run_ok(dir, &["bench", "--methods", "ml,map,mcmc"]);
        assert!(stdout.contains("results.csv"));
    }
    let results = read(a.path(), "results.csv");
    let mut lines = results.lines();
    assert_eq!(
        lines.next(),
        Some("model,avg_confidence,adv_error,resampled_error")
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("ML,"));
    assert!(rows[1].starts_with("MAP,"));
    assert!(rows[2].starts_with("MCMC,"));
    // Point estimates leave the resampled column empty; MCMC fills it.
    assert!(rows[0].ends_with(','));
    assert!(rows[1].ends_with(','));
    assert!(!rows[2].ends_with(','));

    assert_eq!(results, read(b.path(), "results.csv"), "bench must be bitwise reproducible");

    let manifest = read(a.path(), "bench.manifest.toml");
    assert!(manifest.contains("command = \"bench\""));
    assert!(manifest.contains("[timing]"));
    assert!(manifest.contains("methods = [\"ml\", \"map\", \"mcmc\"]"));
}

#[test]
fn bench_manifest_replays_to_identical_results() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    run_ok(a.path(), &["bench", "--methods", "ml,map"]);
    let manifest = a.path().join("bench.manifest.toml");

    // Replay with ONLY the manifest as config (fresh output dir).
    let out = bin()
        .arg("--config")
        .arg(&manifest)
        .arg("--output-dir")
        .arg(b.path())
        .arg("bench")
        .output()
        .expect("spawn advspheres");
    assert!(
        out.status.success(),
        "replay failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(read(a.path(), "results.csv"), read(b.path(), "results.csv"));
}

#[test]
fn grid_writes_surface_and_sample_overlay() {
    let dir = TempDir::new().unwrap();
    let dim2: &[&str] = &["--set", "dim=2"];
    run_ok(dir.path(), &[dim2, &["generate"]].concat());
    run_ok(dir.path(), &[dim2, &["infer", "--method", "mcmc"]].concat());
    let ensemble = dir.path().join("mcmc.csv");
    run_ok(
        dir.path(),
        &[
            dim2,
            &[
                "grid",
                "--resolution",
                "11",
                "--ensemble",
                ensemble.to_str().unwrap(),
            ],
        ]
        .concat(),
    );
    let grid = read(dir.path(), "grid.csv");
    let mut lines = grid.lines();
    assert_eq!(lines.next(), Some("w1,w2,loglik"));
    assert_eq!(lines.count(), 121);
    let samples = read(dir.path(), "samples.csv");
    let mut lines = samples.lines();
    assert_eq!(lines.next(), Some("w1,w2"));
    assert_eq!(lines.count(), 8);
}

#[test]
fn grid_rejects_higher_dimensional_data() {
    let dir = TempDir::new().unwrap();
    run_ok(dir.path(), &["generate"]); // dim = 4
    let (code, stderr) = run_code(dir.path(), &["grid", "--resolution", "5"]);
    assert_eq!(code, 3, "stderr: {stderr}");
}

#[test]
fn slice_writes_profile_rows() {
    let dir = TempDir::new().unwrap();
    run_ok(dir.path(), &["generate"]);
    let stdout = run_ok(dir.path(), &["slice", "--coord", "2", "--resolution", "17"]);
    assert!(stdout.contains("coordinate 2"));
    let slice = read(dir.path(), "slice.csv");
    let mut lines = slice.lines();
    assert_eq!(lines.next(), Some("w,log_density"));
    assert_eq!(lines.count(), 17);
    let manifest = read(dir.path(), "slice.manifest.toml");
    assert!(manifest.contains("coord = 2"));
}

#[test]
fn slice_rejects_out_of_range_coordinate() {
    let dir = TempDir::new().unwrap();
    run_ok(dir.path(), &["generate"]);
    let (code, stderr) = run_code(dir.path(), &["slice", "--coord", "9"]);
    assert_eq!(code, 2, "stderr: {stderr}");
    assert!(stderr.contains("coord"));
}

#[test]
fn flags_override_config_file_in_manifest() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 7\nn_train = 60\nn_val = 200\ndim = 4\nprofile = \"ci\"\n")
        .unwrap();
    let out = bin()
        .arg("--config")
        .arg(&cfg)
        .arg("--seed")
        .arg("9")
        .arg("--output-dir")
        .arg(dir.path())
        .arg("generate")
        .output()
        .expect("spawn advspheres");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = read(dir.path(), "generate.manifest.toml");
    assert!(manifest.contains("seed = 9"), "flag must beat file:\n{manifest}");
    assert!(manifest.contains("n_train = 60"), "file value must survive");
}

#[test]
fn env_var_sets_output_dir_between_file_and_flags() {
    let via_env = TempDir::new().unwrap();
    let via_flag = TempDir::new().unwrap();
    // Env var wins over the default...
    let out = bin()
        .env("ADVSPHERES_OUTPUT_DIR", via_env.path())
        .args(TINY)
        .arg("generate")
        .output()
        .expect("spawn advspheres");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(via_env.path().join("train.csv").is_file());
    // ...but an explicit flag wins over the env var.
    let out = bin()
        .env("ADVSPHERES_OUTPUT_DIR", via_env.path())
        .args(TINY)
        .arg("--output-dir")
        .arg(via_flag.path())
        .arg("generate")
        .output()
        .expect("spawn advspheres");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(via_flag.path().join("train.csv").is_file());
}
