//! Command-line entry point: configuration resolution, the six commands
//! (generate, infer, attack, bench, grid, slice), and run manifests.

use crate::attack::run_attack;
use crate::bench::{
    self, likelihood_grid, posterior_slice, run_benchmark, write_grid_csv, write_slice_csv,
    BenchReport, Method,
};
use crate::config::{PartialRunConfig, Profile, RunConfig};
use crate::data::{
    feature_map_matrix, fit_normalizer, generate, FeatureNormalizer, SphereDataset, Split,
};
use crate::error::{Error, Result};
use crate::math::{derive_seed, stable_norm};
use crate::model::WeightEnsemble;
use crate::point::optimize_point_params;
use clap::{Parser, Subcommand};
use ndarray::Array2;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Env var that overrides the output directory (flags still win).
pub const OUTPUT_DIR_ENV: &str = "ADVSPHERES_OUTPUT_DIR";

#[derive(Parser)]
#[command(
    name = "advspheres",
    version,
    about = "Bayesian logistic regression on the adversarial-spheres problem: \
             inference methods, on-sphere attacks, and the benchmark suite"
)]
struct Cli {
    /// TOML config file: flat keys, or the same keys under [config]
    /// (so a run manifest can be replayed directly).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Scale profile: "paper" (full scale) or "ci" (desk scale).
    #[arg(long, global = true)]
    profile: Option<String>,
    /// Master seed; all randomness derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Where artifacts are written (env ADVSPHERES_OUTPUT_DIR also works).
    #[arg(long, global = true, value_name = "DIR")]
    output_dir: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override any config key, e.g. --set svi_iters=1000 (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the sphere dataset and fit the feature normalizer.
    Generate,
    /// Fit one inference method and save its weight ensemble.
    Infer {
        /// Method tag: ml, map, bootstrap, mcmc, laplace, svi, svi_hier,
        /// mcmc_mean_hier.
        #[arg(long)]
        method: String,
    },
    /// Attack a saved ensemble on both class spheres.
    Attack {
        /// Ensemble file stem (or its .csv path) as written by `infer`.
        #[arg(long)]
        ensemble: PathBuf,
    },
    /// Run the benchmark: fit, score, attack and transfer every method.
    Bench {
        /// Comma-separated method tags (default: all eight).
        #[arg(long)]
        methods: Option<String>,
    },
    /// Export the log-likelihood over a 2-D weight grid (needs dim = 2).
    Grid {
        /// Optional ensemble whose weights are exported alongside.
        #[arg(long)]
        ensemble: Option<PathBuf>,
        #[arg(long, default_value_t = -60.0)]
        w1_lo: f64,
        #[arg(long, default_value_t = 60.0)]
        w1_hi: f64,
        #[arg(long, default_value_t = -60.0)]
        w2_lo: f64,
        #[arg(long, default_value_t = 60.0)]
        w2_hi: f64,
        #[arg(long, default_value_t = 201)]
        resolution: usize,
    },
    /// Export the posterior density along one coordinate through the MAP.
    Slice {
        /// Parameter coordinate to vary.
        #[arg(long, default_value_t = 0)]
        coord: usize,
        /// Range start (default: MAP value minus three prior scales).
        #[arg(long)]
        lo: Option<f64>,
        /// Range end (default: MAP value plus three prior scales).
        #[arg(long)]
        hi: Option<f64>,
        #[arg(long, default_value_t = 601)]
        resolution: usize,
    },
}

/// Binary entry point: run, report, exit with the structured code.
pub fn cli_main() -> ! {
    match run() {
        Ok(()) => std::process::exit(0),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code())
        }
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();

    let mut flags = parse_set_pairs(&cli.sets)?;
    if let Some(profile) = &cli.profile {
        flags.profile = Some(profile.parse::<Profile>()?);
    }
    if cli.seed.is_some() {
        flags.seed = cli.seed;
    }
    if cli.output_dir.is_some() {
        flags.output_dir = cli.output_dir.clone();
    }
    if cli.threads.is_some() {
        flags.threads = cli.threads;
    }
    if let Cmd::Bench {
        methods: Some(list),
    } = &cli.command
    {
        flags.methods = Some(parse_method_list(list)?);
    }

    let file = match &cli.config {
        // A bad --config argument is a usage problem, not a data problem.
        Some(path) => Some(
            PartialRunConfig::from_file(path)
                .map_err(|err| Error::Config(format!("--config {}: {err}", path.display())))?,
        ),
        None => None,
    };
    let env_output_dir = std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from);
    let cfg = RunConfig::resolve(file, env_output_dir, flags)?;

    if cfg.threads > 0 {
        // Ignore "already initialized": only possible in-process (tests).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global();
    }
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| Error::io(cfg.output_dir.display().to_string(), e))?;

    let started = Instant::now();
    match cli.command {
        Cmd::Generate => cmd_generate(&cfg, started),
        Cmd::Infer { method } => cmd_infer(&cfg, &method, started),
        Cmd::Attack { ensemble } => cmd_attack(&cfg, &ensemble, started),
        Cmd::Bench { .. } => cmd_bench(&cfg, started),
        Cmd::Grid {
            ensemble,
            w1_lo,
            w1_hi,
            w2_lo,
            w2_hi,
            resolution,
        } => cmd_grid(
            &cfg,
            ensemble.as_deref(),
            (w1_lo, w1_hi),
            (w2_lo, w2_hi),
            resolution,
            started,
        ),
        Cmd::Slice {
            coord,
            lo,
            hi,
            resolution,
        } => cmd_slice(&cfg, coord, lo, hi, resolution, started),
    }
}

/// Parse repeated --set KEY=VALUE overrides. Values are TOML; bare words
/// are retried as strings so `--set prior=isotropic` works unquoted.
fn parse_set_pairs(pairs: &[String]) -> Result<PartialRunConfig> {
    let mut acc = PartialRunConfig::default();
    for pair in pairs {
        let (key, value) = pair.split_once('=').ok_or_else(|| {
            Error::Config(format!("--set expects KEY=VALUE, got '{pair}'"))
        })?;
        let parsed = PartialRunConfig::from_toml(&format!("{key} = {value}\n"))
            .or_else(|_| {
                PartialRunConfig::from_toml(&format!("{key} = \"{}\"\n", value.escape_default()))
            })
            .map_err(|err| Error::Config(format!("--set {pair}: {err}")))?;
        acc.merge_from(parsed);
    }
    Ok(acc)
}

fn parse_method_list(list: &str) -> Result<Vec<Method>> {
    list.split(',')
        .map(|tag| tag.trim().parse::<Method>())
        .collect()
}

// ---------------------------------------------------------------------
// Shared artifact paths and helpers

fn train_path(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join("train.csv")
}

fn val_path(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join("val.csv")
}

fn normalizer_path(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join("normalizer.csv")
}

/// Load the training split and return its normalized model-space features.
fn load_training(cfg: &RunConfig) -> Result<(Array2<f64>, Vec<u8>, FeatureNormalizer)> {
    let train = SphereDataset::read_csv(&train_path(cfg), Split::Train)?;
    let normalizer = FeatureNormalizer::read_csv(&normalizer_path(cfg))?;
    let mut features = feature_map_matrix(train.points.view());
    normalizer.normalize_in_place(&mut features);
    Ok((features, train.labels, normalizer))
}

/// Accept either the ensemble stem or its `.csv` path.
fn ensemble_stem(path: &Path) -> PathBuf {
    if path.extension().is_some_and(|e| e == "csv") {
        path.with_extension("")
    } else {
        path.to_path_buf()
    }
}

/// Write the plain-text run manifest: command, versions, fingerprint,
/// wall time, any extra sections, and the full resolved configuration
/// (replayable via --config).
fn write_manifest(
    cfg: &RunConfig,
    command: &str,
    extra_sections: &str,
    wall_secs: f64,
    path: &Path,
) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "command = \"{command}\"");
    let _ = writeln!(s, "tool = \"advspheres\"");
    let _ = writeln!(s, "version = \"{}\"", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "config_fingerprint = \"{:016x}\"", cfg.fingerprint());
    let _ = writeln!(s, "seed = {}", cfg.seed);
    let _ = writeln!(s, "wall_secs = {wall_secs}");
    if !extra_sections.is_empty() {
        s.push('\n');
        s.push_str(extra_sections);
    }
    s.push_str("\n[config]\n");
    s.push_str(&cfg.to_toml());
    std::fs::write(path, s).map_err(|e| Error::io(path.display().to_string(), e))
}

// ---------------------------------------------------------------------
// Commands

fn cmd_generate(cfg: &RunConfig, started: Instant) -> Result<()> {
    let sphere = cfg.sphere();
    let (train, val) = generate(&sphere)?;
    let features = feature_map_matrix(train.points.view());
    let normalizer = fit_normalizer(features.view())?;

    train.write_csv(&train_path(cfg))?;
    val.write_csv(&val_path(cfg))?;
    normalizer.write_csv(&normalizer_path(cfg))?;

    for (name, set) in [("train", &train), ("val", &val)] {
        let inner = set.labels.iter().filter(|&&y| y == 0).count();
        let outer = set.len() - inner;
        let mut worst = 0.0f64;
        for (row, &label) in set.points.rows().into_iter().zip(&set.labels) {
            let dev = (stable_norm(row) - sphere.radius_of(label)).abs();
            worst = worst.max(dev);
        }
        let total = set.len();
        println!(
            "{name}: {total} points (inner {inner}, outer {outer}), max radius deviation {worst:.3e}"
        );
    }
    println!(
        "wrote {}, {}, {}",
        train_path(cfg).display(),
        val_path(cfg).display(),
        normalizer_path(cfg).display()
    );
    write_manifest(
        cfg,
        "generate",
        "",
        started.elapsed().as_secs_f64(),
        &cfg.output_dir.join("generate.manifest.toml"),
    )
}

fn cmd_infer(cfg: &RunConfig, method: &str, started: Instant) -> Result<()> {
    let method: Method = method.parse()?;
    let (features, labels, _) = load_training(cfg)?;
    let mut bench_cfg = cfg.bench_config();
    match method {
        Method::Mcmc | Method::McmcMeanHier => {
            bench_cfg.slice.diagnostics_path = Some(
                cfg.output_dir
                    .join(format!("{}_diagnostics.csv", method.tag())),
            );
        }
        Method::Ml | Method::Map => {
            bench_cfg.optimizer.trace_path =
                Some(cfg.output_dir.join(format!("{}_trace.csv", method.tag())));
        }
        _ => {}
    }
    let ensemble = bench::fit_method(method, features.view(), &labels, &bench_cfg, 0)?;
    let stem = cfg.output_dir.join(method.tag());
    ensemble.save(&stem)?;
    println!(
        "{}: {} member(s), dim {}, saved to {}.csv",
        method.display_name(),
        ensemble.n_members(),
        ensemble.dim(),
        stem.display()
    );
    write_manifest(
        cfg,
        "infer",
        &format!("method = \"{}\"\n", method.tag()),
        started.elapsed().as_secs_f64(),
        &cfg.output_dir.join("infer.manifest.toml"),
    )
}

fn cmd_attack(cfg: &RunConfig, ensemble_path: &Path, started: Instant) -> Result<()> {
    let stem = ensemble_stem(ensemble_path);
    let ensemble = WeightEnsemble::load(&stem)?;
    let normalizer = FeatureNormalizer::read_csv(&normalizer_path(cfg))?;
    let sphere = cfg.sphere();
    let attack_cfg = cfg.attack_config();
    let mut best = f64::NEG_INFINITY;
    for source in [0u8, 1] {
        let result = run_attack(
            &ensemble,
            &normalizer,
            sphere.radius_of(source),
            source,
            &attack_cfg,
            derive_seed(cfg.seed, "cli/attack", source as u64),
        )?;
        let csv = cfg.output_dir.join(format!("attack_source{source}.csv"));
        let point = cfg
            .output_dir
            .join(format!("attack_source{source}_point.csv"));
        result.write_csv(&csv)?;
        result.write_point_csv(&point)?;
        println!(
            "source {source} -> target {}: best target probability {} ({} restart(s) aborted)",
            result.target_label,
            result.target_prob,
            result.n_aborted()
        );
        best = best.max(result.target_prob);
    }
    println!("best target probability over both spheres: {best}");
    write_manifest(
        cfg,
        "attack",
        &format!("ensemble = \"{}\"\n", stem.display()),
        started.elapsed().as_secs_f64(),
        &cfg.output_dir.join("attack.manifest.toml"),
    )
}

fn bench_sections(report: &BenchReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "data_secs = {}", report.data_secs);
    let _ = writeln!(s, "\n[timing]");
    for row in &report.rows {
        let _ = writeln!(s, "{} = {}", row.method.tag(), row.wall_secs);
    }
    let failures: Vec<_> = report
        .rows
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| (r.method, e)))
        .collect();
    if !failures.is_empty() {
        let _ = writeln!(s, "\n[method_errors]");
        for (method, error) in failures {
            let _ = writeln!(s, "{} = \"{}\"", method.tag(), error.escape_default());
        }
    }
    s
}

fn cmd_bench(cfg: &RunConfig, started: Instant) -> Result<()> {
    let report = run_benchmark(&cfg.bench_config())?;
    let results = cfg.output_dir.join("results.csv");
    report.write_csv(&results)?;

    println!("{:<16} {:>16} {:>12} {:>16}", "model", "avg_confidence", "adv_error", "resampled_error");
    for row in &report.rows {
        let fmt = |v: Option<f64>| match v {
            Some(v) => format!("{v:.6}"),
            None => "-".to_string(),
        };
        println!(
            "{:<16} {:>16} {:>12} {:>16}",
            row.method.display_name(),
            fmt(row.avg_confidence),
            fmt(row.adv_error),
            fmt(row.resampled_error)
        );
        if let Some(error) = &row.error {
            eprintln!("{} failed: {error}", row.method.display_name());
        }
    }
    println!("wrote {}", results.display());
    write_manifest(
        cfg,
        "bench",
        &bench_sections(&report),
        started.elapsed().as_secs_f64(),
        &cfg.output_dir.join("bench.manifest.toml"),
    )?;
    if report.rows.iter().all(|r| r.error.is_some()) {
        return Err(Error::InvalidState("every method failed".into()));
    }
    Ok(())
}

fn cmd_grid(
    cfg: &RunConfig,
    ensemble: Option<&Path>,
    w1_range: (f64, f64),
    w2_range: (f64, f64),
    resolution: usize,
    started: Instant,
) -> Result<()> {
    let (features, labels, _) = load_training(cfg)?;
    let rows = likelihood_grid(features.view(), &labels, w1_range, w2_range, resolution)?;
    let grid_path = cfg.output_dir.join("grid.csv");
    write_grid_csv(&grid_path, &rows)?;
    println!("wrote {} ({} cells)", grid_path.display(), rows.len());

    let mut extra = String::new();
    if let Some(path) = ensemble {
        let stem = ensemble_stem(path);
        let ens = WeightEnsemble::load(&stem)?;
        if ens.dim() != 2 {
            return Err(Error::DimensionMismatch(format!(
                "overlay ensemble has dim {}, grid needs 2",
                ens.dim()
            )));
        }
        let samples_path = cfg.output_dir.join("samples.csv");
        let mut s = String::from("w1,w2\n");
        for row in ens.weights.rows() {
            let _ = writeln!(s, "{},{}", row[0], row[1]);
        }
        std::fs::write(&samples_path, s)
            .map_err(|e| Error::io(samples_path.display().to_string(), e))?;
        println!(
            "wrote {} ({} samples)",
            samples_path.display(),
            ens.n_members()
        );
        let _ = writeln!(extra, "ensemble = \"{}\"", stem.display());
    }
    write_manifest(
        cfg,
        "grid",
        &extra,
        started.elapsed().as_secs_f64(),
        &cfg.output_dir.join("grid.manifest.toml"),
    )
}

fn cmd_slice(
    cfg: &RunConfig,
    coord: usize,
    lo: Option<f64>,
    hi: Option<f64>,
    resolution: usize,
    started: Instant,
) -> Result<()> {
    let (features, labels, _) = load_training(cfg)?;
    let spec = cfg.model_spec()?;
    let map = optimize_point_params(
        &spec,
        features.view(),
        &labels,
        true,
        &cfg.optimizer(),
        None,
    )?;
    if coord >= spec.param_dim() {
        return Err(Error::Config(format!(
            "slice coordinate {coord} out of range for {} parameters",
            spec.param_dim()
        )));
    }
    let center = map.params[coord];
    let half_width = 3.0 * cfg.sigma_w;
    let range = (
        lo.unwrap_or(center - half_width),
        hi.unwrap_or(center + half_width),
    );
    let rows = posterior_slice(
        &spec,
        features.view(),
        &labels,
        map.params.view(),
        coord,
        range,
        resolution,
    )?;
    let slice_path = cfg.output_dir.join("slice.csv");
    write_slice_csv(&slice_path, &rows)?;
    println!(
        "wrote {} ({} rows, coordinate {coord}, MAP value {center})",
        slice_path.display(),
        rows.len()
    );
    write_manifest(
        cfg,
        "slice",
        &format!("coord = {coord}\nmap_value = {center}\n"),
        started.elapsed().as_secs_f64(),
        &cfg.output_dir.join("slice.manifest.toml"),
    )
}
