//! Benchmark orchestration: the three table metrics (average validation
//! confidence, adversarial error, resampled error), the transferability
//! protocol, and the grid/slice visualization exports.

use crate::attack::{run_attack, AttackConfig, AttackResult};
use crate::data::{feature_map_matrix, fit_normalizer, generate, FeatureNormalizer, SphereConfig};
use crate::error::{Error, Result};
use crate::gaussian::{laplace_fit, svi_fit, SviConfig};
use crate::math::{derive_seed, fnv1a, log_sigmoid, log_sum_exp};
use crate::mcmc::{fit_mcmc, SliceConfig};
use crate::model::{clamp_open_unit, ModelSpec, PriorFamily, WeightEnsemble};
use crate::optim::LbfgsConfig;
use crate::point::{fit_bootstrap, fit_map, fit_ml, BootstrapConfig};
use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

/// The benchmarked inference methods, in table row order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ml,
    Map,
    Bootstrap,
    Mcmc,
    Laplace,
    Svi,
    SviHier,
    McmcMeanHier,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Ml,
        Method::Map,
        Method::Bootstrap,
        Method::Mcmc,
        Method::Laplace,
        Method::Svi,
        Method::SviHier,
        Method::McmcMeanHier,
    ];

    /// Row label used in reports.
    pub fn display_name(&self) -> &'static str {
        match self {
            Method::Ml => "ML",
            Method::Map => "MAP",
            Method::Bootstrap => "Bootstrap",
            Method::Mcmc => "MCMC",
            Method::Laplace => "Laplace",
            Method::Svi => "SVI",
            Method::SviHier => "SVI-Hier",
            Method::McmcMeanHier => "MCMC-MeanHier",
        }
    }

    /// Machine tag used in configs, file names, and seed derivation.
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Ml => "ml",
            Method::Map => "map",
            Method::Bootstrap => "bootstrap",
            Method::Mcmc => "mcmc",
            Method::Laplace => "laplace",
            Method::Svi => "svi",
            Method::SviHier => "svi_hier",
            Method::McmcMeanHier => "mcmc_mean_hier",
        }
    }

    /// Prior family the method infers under.
    pub fn prior(&self, scales: &PriorScales) -> PriorFamily {
        match self {
            Method::SviHier => PriorFamily::ScaleHierarchical {
                sigma_v: scales.sigma_v,
            },
            Method::McmcMeanHier => PriorFamily::MeanHierarchical {
                sigma_w: scales.sigma_w,
                sigma_mu: scales.sigma_mu,
            },
            _ => PriorFamily::Isotropic {
                sigma_w: scales.sigma_w,
            },
        }
    }

    /// Point estimates produce a single weight vector and have no
    /// resampled-error column.
    pub fn is_point_estimate(&self) -> bool {
        matches!(self, Method::Ml | Method::Map)
    }

    /// Methods whose predictive is a Monte-Carlo sample of the posterior
    /// use the smaller attack step size.
    pub fn uses_sampled_attack_step(&self) -> bool {
        matches!(
            self,
            Method::Mcmc | Method::Svi | Method::SviHier | Method::McmcMeanHier
        )
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.display_name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.tag() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown method '{s}' (expected one of: {})",
                    Method::ALL.map(|m| m.tag()).join(", ")
                ))
            })
    }
}

/// Scales of the three prior families.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorScales {
    pub sigma_w: f64,
    pub sigma_v: f64,
    pub sigma_mu: f64,
}

impl Default for PriorScales {
    fn default() -> Self {
        PriorScales {
            sigma_w: 100.0,
            sigma_v: 100.0,
            sigma_mu: 100.0,
        }
    }
}

/// Everything a benchmark run needs; the CLI resolves its configuration
/// into this.
#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub sphere: SphereConfig,
    pub scales: PriorScales,
    pub optimizer: LbfgsConfig,
    pub slice: SliceConfig,
    pub svi: SviConfig,
    pub attack: AttackConfig,
    pub methods: Vec<Method>,
    /// Ensemble size M for multi-member methods (point estimates use 1).
    pub ensemble_size: usize,
    /// Master seed; every random decision derives from it by tag.
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            sphere: SphereConfig::default(),
            scales: PriorScales::default(),
            optimizer: LbfgsConfig::default(),
            slice: SliceConfig::default(),
            svi: SviConfig::default(),
            attack: AttackConfig::default(),
            methods: Method::ALL.to_vec(),
            ensemble_size: 1000,
            seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        self.sphere.validate()?;
        self.slice.validate()?;
        self.svi.validate()?;
        self.attack.validate()?;
        if self.methods.is_empty() {
            return Err(Error::Config("no methods requested".into()));
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return Err(Error::Config("duplicate method in request".into()));
        }
        if self.ensemble_size == 0 {
            return Err(Error::Config("ensemble size must be >= 1".into()));
        }
        for scale in [
            self.scales.sigma_w,
            self.scales.sigma_v,
            self.scales.sigma_mu,
        ] {
            if !(scale > 0.0) || !scale.is_finite() {
                return Err(Error::Config(format!(
                    "prior scales must be positive and finite, got {scale}"
                )));
            }
        }
        Ok(())
    }

    /// Stable hash of every field that influences results.
    pub fn fingerprint(&self) -> u64 {
        let mut s = String::new();
        let _ = write!(
            s,
            "sphere={:016x};scales={},{},{};opt={},{},{};slice={},{},{},{},{};svi={},{},{},{},{},{},{};attack={},{},{},{},{},{};methods=",
            self.sphere.fingerprint(),
            self.scales.sigma_w.to_bits(),
            self.scales.sigma_v.to_bits(),
            self.scales.sigma_mu.to_bits(),
            self.optimizer.max_iters,
            self.optimizer.grad_tol.to_bits(),
            self.optimizer.memory,
            self.slice.n_samples,
            self.slice.burn_in,
            self.slice.thin,
            self.slice.initial_width.to_bits(),
            self.slice.max_step_out,
            self.svi.n_iters,
            self.svi.batch_size,
            self.svi.learning_rate.to_bits(),
            self.svi.momentum.to_bits(),
            self.svi.mc_samples,
            self.svi.clip_norm.to_bits(),
            self.svi.init_l_scale.to_bits(),
            self.attack.step_size.to_bits(),
            self.attack.max_iters,
            self.attack.surrogate_iters,
            self.attack.restarts,
            self.attack.patience,
            self.attack.improve_tol.to_bits(),
        );
        for m in &self.methods {
            let _ = write!(s, "{},", m.tag());
        }
        let _ = write!(s, ";m={};seed={}", self.ensemble_size, self.seed);
        fnv1a(s.as_bytes())
    }
}

/// One report row. Metric fields are None when the method failed (see
/// `error`) or, for `resampled_error`, when the method is a point estimate.
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub method: Method,
    pub avg_confidence: Option<f64>,
    pub adv_error: Option<f64>,
    pub resampled_error: Option<f64>,
    pub wall_secs: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    /// One row per requested method, in table order.
    pub rows: Vec<BenchRow>,
    pub config_fingerprint: u64,
    pub seed: u64,
    /// Seconds spent generating and featurizing the data.
    pub data_secs: f64,
}

impl BenchReport {
    pub fn row(&self, method: Method) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// The report CSV, header `model,avg_confidence,adv_error,resampled_error`.
    pub fn csv_string(&self) -> String {
        let mut s = String::from("model,avg_confidence,adv_error,resampled_error\n");
        for row in &self.rows {
            let _ = write!(s, "{},", row.method.display_name());
            if let Some(v) = row.avg_confidence {
                let _ = write!(s, "{v}");
            }
            s.push(',');
            if let Some(v) = row.adv_error {
                let _ = write!(s, "{v}");
            }
            s.push(',');
            if let Some(v) = row.resampled_error {
                let _ = write!(s, "{v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.csv_string())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }
}

/// Mean predicted probability of the true label over a validation set of
/// model-space features.
pub fn avg_confidence(
    ensemble: &WeightEnsemble,
    features: ArrayView2<'_, f64>,
    labels: &[u8],
) -> Result<f64> {
    if features.nrows() == 0 {
        return Err(Error::DegenerateData("empty validation set".into()));
    }
    if features.nrows() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature rows vs {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    let probs = ensemble.predict(features)?;
    let mut total = 0.0;
    for (&p, &y) in probs.iter().zip(labels) {
        total += if y == 1 { p } else { 1.0 - p };
    }
    // Reported metrics stay strictly inside (0,1) even when every
    // prediction saturates at the clamp boundary.
    Ok(clamp_open_unit(total / labels.len() as f64))
}

/// Attack both class spheres and return the highest target probability
/// achieved, along with the per-class attack results (whose candidate
/// points feed the transferability protocol).
pub fn adversarial_error(
    ensemble: &WeightEnsemble,
    normalizer: &FeatureNormalizer,
    sphere: &SphereConfig,
    attack: &AttackConfig,
    seed: u64,
) -> Result<(f64, Vec<AttackResult>)> {
    let mut results = Vec::with_capacity(2);
    let mut worst = f64::NEG_INFINITY;
    for source in [0u8, 1] {
        let radius = sphere.radius_of(source);
        let result = run_attack(
            ensemble,
            normalizer,
            radius,
            source,
            attack,
            derive_seed(seed, "attack/source", source as u64),
        )?;
        worst = worst.max(result.target_prob);
        results.push(result);
    }
    Ok((clamp_open_unit(worst), results))
}

/// Evaluate an independently refit ensemble on the adversarial candidates
/// found for the first ensemble: the max, over every restart's best point,
/// of the second ensemble's target-class probability.
pub fn transfer_error(
    second: &WeightEnsemble,
    normalizer: &FeatureNormalizer,
    attacks: &[AttackResult],
) -> Result<f64> {
    if attacks.is_empty() {
        return Err(Error::Config("no attack results to transfer".into()));
    }
    let mut worst = f64::NEG_INFINITY;
    for attack in attacks {
        let s = if attack.target_label == 1 { 1.0 } else { -1.0 };
        let mut features = feature_map_matrix(attack.restart_points.view());
        normalizer.normalize_in_place(&mut features);
        let activations = features.dot(&second.weights.t());
        let m = second.n_members() as f64;
        let mut logs = vec![0.0f64; second.n_members()];
        for row in activations.rows() {
            for (dst, &a) in logs.iter_mut().zip(row) {
                *dst = log_sigmoid(s * a);
            }
            worst = worst.max(log_sum_exp(&logs) - m.ln());
        }
    }
    Ok(clamp_open_unit(worst.exp()))
}

/// Fit one method's ensemble on normalized training features. `replica`
/// selects an independent seed stream: 0 for the primary ensemble, 1 for
/// the transferability refit.
pub fn fit_method(
    method: Method,
    features: ArrayView2<'_, f64>,
    labels: &[u8],
    cfg: &BenchConfig,
    replica: u64,
) -> Result<WeightEnsemble> {
    let spec = ModelSpec::new(features.ncols(), method.prior(&cfg.scales))?;
    let tag = method.tag();
    let fit_seed = derive_seed(cfg.seed, &format!("bench/{tag}/fit"), replica);
    let sample_seed = derive_seed(cfg.seed, &format!("bench/{tag}/sample"), replica);
    match method {
        Method::Ml => fit_ml(&spec, features, labels, &cfg.optimizer, fit_seed),
        Method::Map => fit_map(&spec, features, labels, &cfg.optimizer, fit_seed),
        Method::Bootstrap => {
            let bcfg = BootstrapConfig {
                n_members: cfg.ensemble_size,
                optimizer: cfg.optimizer.clone(),
            };
            fit_bootstrap(&spec, features, labels, &bcfg, fit_seed)
        }
        Method::Mcmc | Method::McmcMeanHier => {
            let mut scfg = cfg.slice.clone();
            scfg.n_samples = cfg.ensemble_size;
            fit_mcmc(&spec, features, labels, &scfg, &cfg.optimizer, fit_seed)
        }
        Method::Laplace => {
            let posterior = laplace_fit(&spec, features, labels, &cfg.optimizer)?;
            posterior.sample_ensemble(&spec, cfg.ensemble_size, "laplace", sample_seed)
        }
        Method::Svi | Method::SviHier => {
            let q = svi_fit(&spec, features, labels, &cfg.svi, &cfg.optimizer, fit_seed)?;
            q.sample_ensemble(&spec, cfg.ensemble_size, tag, sample_seed)
        }
    }
}

/// Run the full benchmark: generate data once, then for each requested
/// method fit, score validation confidence, attack, and (for multi-member
/// methods) refit and score transferability. Per-method failures are
/// recorded in the row and the remaining methods continue.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let data_start = Instant::now();
    let (train, val) = generate(&cfg.sphere)?;
    let mut train_features = feature_map_matrix(train.points.view());
    let normalizer = fit_normalizer(train_features.view())?;
    normalizer.normalize_in_place(&mut train_features);
    let train_labels = train.labels.clone();
    drop(train);
    let mut val_features = feature_map_matrix(val.points.view());
    normalizer.normalize_in_place(&mut val_features);
    let val_labels = val.labels.clone();
    drop(val);
    let data_secs = data_start.elapsed().as_secs_f64();

    let mut methods = cfg.methods.clone();
    methods.sort();
    let mut rows = Vec::with_capacity(methods.len());
    for method in methods {
        let started = Instant::now();
        let outcome = run_one_method(
            method,
            train_features.view(),
            &train_labels,
            val_features.view(),
            &val_labels,
            &normalizer,
            cfg,
        );
        let wall_secs = started.elapsed().as_secs_f64();
        let row = match outcome {
            Ok((conf, adv, resampled)) => BenchRow {
                method,
                avg_confidence: Some(conf),
                adv_error: Some(adv),
                resampled_error: resampled,
                wall_secs,
                error: None,
            },
            Err(e) => BenchRow {
                method,
                avg_confidence: None,
                adv_error: None,
                resampled_error: None,
                wall_secs,
                error: Some(e.to_string()),
            },
        };
        rows.push(row);
    }
    Ok(BenchReport {
        rows,
        config_fingerprint: cfg.fingerprint(),
        seed: cfg.seed,
        data_secs,
    })
}

fn run_one_method(
    method: Method,
    train_features: ArrayView2<'_, f64>,
    train_labels: &[u8],
    val_features: ArrayView2<'_, f64>,
    val_labels: &[u8],
    normalizer: &FeatureNormalizer,
    cfg: &BenchConfig,
) -> Result<(f64, f64, Option<f64>)> {
    let ensemble = fit_method(method, train_features, train_labels, cfg, 0)?;
    let conf = avg_confidence(&ensemble, val_features, val_labels)?;
    let mut attack_cfg = cfg.attack.clone();
    if method.uses_sampled_attack_step() {
        attack_cfg.step_size = AttackConfig::SAMPLED_ENSEMBLE_STEP;
    }
    let attack_seed = derive_seed(cfg.seed, &format!("bench/{}/attack", method.tag()), 0);
    let (adv, attacks) =
        adversarial_error(&ensemble, normalizer, &cfg.sphere, &attack_cfg, attack_seed)?;
    let resampled = if method.is_point_estimate() {
        None
    } else {
        let second = fit_method(method, train_features, train_labels, cfg, 1)?;
        Some(transfer_error(&second, normalizer, &attacks)?)
    };
    Ok((conf, adv, resampled))
}

/// One ordering-battery check.
#[derive(Debug, Clone)]
pub struct OrderingCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Margin used by the ordering battery's strict inequalities.
pub const ORDERING_MARGIN: f64 = 0.01;

fn metric(report: &BenchReport, method: Method, pick: fn(&BenchRow) -> Option<f64>) -> Result<f64> {
    let row = report.row(method).ok_or_else(|| {
        Error::Config(format!(
            "ordering battery needs a {} row",
            method.display_name()
        ))
    })?;
    pick(row).ok_or_else(|| {
        Error::InvalidState(format!(
            "ordering battery needs metrics for {}: {}",
            method.display_name(),
            row.error.as_deref().unwrap_or("metric absent")
        ))
    })
}

/// The qualitative orderings the benchmark must reproduce, each checked
/// with a 0.01 margin.
pub fn ordering_battery(report: &BenchReport) -> Result<Vec<OrderingCheck>> {
    let adv = |m| metric(report, m, |r| r.adv_error);
    let conf = |m| metric(report, m, |r| r.avg_confidence);
    let resampled = |m| metric(report, m, |r| r.resampled_error);

    let adv_map = adv(Method::Map)?;
    let adv_mcmc = adv(Method::Mcmc)?;
    let adv_bootstrap = adv(Method::Bootstrap)?;
    let adv_meanhier = adv(Method::McmcMeanHier)?;
    let res_bootstrap = resampled(Method::Bootstrap)?;
    let res_mcmc = resampled(Method::Mcmc)?;
    let conf_laplace = conf(Method::Laplace)?;
    let conf_mcmc = conf(Method::Mcmc)?;
    let conf_meanhier = conf(Method::McmcMeanHier)?;

    let m = ORDERING_MARGIN;
    let checks = vec![
        OrderingCheck {
            name: "map_adv_error_above_99",
            passed: adv_map > 0.99,
            detail: format!("adv(MAP)={adv_map}"),
        },
        OrderingCheck {
            name: "mcmc_reduces_adv_error_vs_map",
            passed: adv_mcmc + m < adv_map,
            detail: format!("adv(MCMC)={adv_mcmc} vs adv(MAP)={adv_map}"),
        },
        OrderingCheck {
            name: "bootstrap_adv_error_above_mcmc",
            passed: adv_bootstrap > adv_mcmc + m,
            detail: format!("adv(Bootstrap)={adv_bootstrap} vs adv(MCMC)={adv_mcmc}"),
        },
        OrderingCheck {
            name: "bootstrap_resampled_error_above_mcmc",
            passed: res_bootstrap > res_mcmc + m,
            detail: format!("res(Bootstrap)={res_bootstrap} vs res(MCMC)={res_mcmc}"),
        },
        OrderingCheck {
            name: "laplace_confidence_below_mcmc",
            passed: conf_laplace + m < conf_mcmc,
            detail: format!("conf(Laplace)={conf_laplace} vs conf(MCMC)={conf_mcmc}"),
        },
        OrderingCheck {
            name: "mean_hier_dominates_isotropic_mcmc",
            passed: conf_meanhier > conf_mcmc + m && adv_meanhier <= adv_mcmc + m,
            detail: format!(
                "conf(MCMC-MeanHier)={conf_meanhier} vs conf(MCMC)={conf_mcmc}; \
                 adv(MCMC-MeanHier)={adv_meanhier} vs adv(MCMC)={adv_mcmc}"
            ),
        },
    ];
    Ok(checks)
}

/// Log-likelihood surface over a 2-D weight grid: rows of (w1, w2, loglik)
/// in w1-major order. Features are model-space (already normalized if the
/// model was fit on normalized features).
pub fn likelihood_grid(
    features: ArrayView2<'_, f64>,
    labels: &[u8],
    w1_range: (f64, f64),
    w2_range: (f64, f64),
    resolution: usize,
) -> Result<Vec<(f64, f64, f64)>> {
    if features.ncols() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "likelihood grid needs 2-D features, got {}",
            features.ncols()
        )));
    }
    if features.nrows() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature rows vs {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    if resolution == 0 {
        return Err(Error::Config("grid resolution must be >= 1".into()));
    }
    let axis = |range: (f64, f64), i: usize| {
        if resolution == 1 {
            range.0
        } else {
            range.0 + (range.1 - range.0) * i as f64 / (resolution - 1) as f64
        }
    };
    // Signed features: +phi for label 1, -phi for label 0, so each row's
    // log-likelihood is a sum of log-sigmoids of one matrix product.
    let n = features.nrows();
    let mut signed = features.to_owned();
    for (mut row, &y) in signed.rows_mut().into_iter().zip(labels) {
        if y == 0 {
            row.mapv_inplace(|v| -v);
        }
    }
    let mut out = Vec::with_capacity(resolution * resolution);
    const CHUNK: usize = 1024;
    let mut chunk_weights = ndarray::Array2::zeros((CHUNK, 2));
    let mut pending: Vec<(f64, f64)> = Vec::with_capacity(CHUNK);
    let flush =
        |chunk_weights: &mut ndarray::Array2<f64>, pending: &mut Vec<(f64, f64)>,
         out: &mut Vec<(f64, f64, f64)>| {
            if pending.is_empty() {
                return;
            }
            let k = pending.len();
            let acts = chunk_weights
                .slice(ndarray::s![..k, ..])
                .dot(&signed.t());
            for (row, &(w1, w2)) in acts.rows().into_iter().zip(pending.iter()) {
                let loglik: f64 = row.iter().map(|&a| log_sigmoid(a)).sum();
                out.push((w1, w2, loglik));
            }
            pending.clear();
        };
    for i in 0..resolution {
        let w1 = axis(w1_range, i);
        for j in 0..resolution {
            let w2 = axis(w2_range, j);
            let k = pending.len();
            chunk_weights[[k, 0]] = w1;
            chunk_weights[[k, 1]] = w2;
            pending.push((w1, w2));
            if pending.len() == CHUNK {
                flush(&mut chunk_weights, &mut pending, &mut out);
            }
        }
    }
    flush(&mut chunk_weights, &mut pending, &mut out);
    let _ = n;
    Ok(out)
}

/// Write grid rows as CSV with header `w1,w2,loglik`.
pub fn write_grid_csv(path: &Path, rows: &[(f64, f64, f64)]) -> Result<()> {
    let mut s = String::from("w1,w2,loglik\n");
    for (w1, w2, ll) in rows {
        let _ = writeln!(s, "{w1},{w2},{ll}");
    }
    std::fs::write(path, s).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Unnormalized log-posterior along one parameter coordinate, all other
/// coordinates held at the MAP: rows of (coordinate value, log density).
/// At resolution 1 the single row is the MAP value itself.
pub fn posterior_slice(
    spec: &ModelSpec,
    features: ArrayView2<'_, f64>,
    labels: &[u8],
    map_params: ArrayView1<'_, f64>,
    coord: usize,
    range: (f64, f64),
    resolution: usize,
) -> Result<Vec<(f64, f64)>> {
    if map_params.len() != spec.param_dim() {
        return Err(Error::DimensionMismatch(format!(
            "map params have {} entries, model has {}",
            map_params.len(),
            spec.param_dim()
        )));
    }
    if coord >= spec.param_dim() {
        return Err(Error::Config(format!(
            "slice coordinate {coord} out of range for {} parameters",
            spec.param_dim()
        )));
    }
    if resolution == 0 {
        return Err(Error::Config("slice resolution must be >= 1".into()));
    }
    let mut params = map_params.to_owned();
    let mut rows = Vec::with_capacity(resolution);
    for i in 0..resolution {
        let w = if resolution == 1 {
            map_params[coord]
        } else {
            range.0 + (range.1 - range.0) * i as f64 / (resolution - 1) as f64
        };
        params[coord] = w;
        let log_density = spec.log_posterior_unnorm(features, labels, params.view())?;
        rows.push((w, log_density));
    }
    Ok(rows)
}

/// Write slice rows as CSV with header `w,log_density`.
pub fn write_slice_csv(path: &Path, rows: &[(f64, f64)]) -> Result<()> {
    let mut s = String::from("w,log_density\n");
    for (w, ld) in rows {
        let _ = writeln!(s, "{w},{ld}");
    }
    std::fs::write(path, s).map_err(|e| Error::io(path.display().to_string(), e))
}
