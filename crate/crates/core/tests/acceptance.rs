//! Acceptance gate: ten criteria, one test each. Every test emits exactly
//! one summary line of the form `ACCEPTANCE <n> <PASS|FAIL> - <detail>`
//! (visible with `--nocapture`) and then asserts.
//!
//! Criteria 1-3 run at full paper scale (D=500, 100k validation points,
//! 1000-member ensembles) and dominate the runtime; criterion 3 performs
//! the entire eight-method benchmark and can take on the order of an hour
//! on one core. The remaining criteria finish in seconds.

use std::time::Instant;

use ndarray::{array, s, Array1, Array2, ArrayView1};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use advspheres::attack::{
    project_to_sphere, run_attack, surrogate_value_and_grad, true_value_and_grad, AttackConfig,
};
use advspheres::bench::{
    fit_method, ordering_battery, run_benchmark, Method, PriorScales,
};
use advspheres::config::{Profile, RunConfig};
use advspheres::data::{
    feature_map, feature_map_matrix, fit_normalizer, generate, generate_split, sample_sphere,
    FeatureNormalizer, Split,
};
use advspheres::gaussian::{elbo_estimate, laplace_fit, negative_elbo_with_grad, ModelSviTarget};
use advspheres::math::{derive_seed, log_sum_exp, sigmoid};
use advspheres::mcmc::{run_chain, FnTarget, SliceConfig};
use advspheres::model::{ModelSpec, PriorFamily, WeightEnsemble};

fn report(number: u8, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {number} {verdict} - {detail}");
    assert!(pass, "acceptance criterion {number} failed: {detail}");
}

/// Paper-scale configuration straight from the shipped profile defaults.
fn paper() -> RunConfig {
    RunConfig::profile_defaults(Profile::Paper)
}

// =====================================================================
// 1. MAP validation accuracy at paper scale: error rate < 1e-5.

#[test]
fn criterion_01_map_validation_error_rate() {
    let run = paper();
    let started = Instant::now();
    let (train, val) = generate(&run.sphere()).unwrap();
    let mut train_features = feature_map_matrix(train.points.view());
    let normalizer = fit_normalizer(train_features.view()).unwrap();
    normalizer.normalize_in_place(&mut train_features);
    let mut val_features = feature_map_matrix(val.points.view());
    normalizer.normalize_in_place(&mut val_features);

    let map = fit_method(
        Method::Map,
        train_features.view(),
        &train.labels,
        &run.bench_config(),
        0,
    )
    .unwrap();
    let probs = map.predict(val_features.view()).unwrap();
    let errors = probs
        .iter()
        .zip(&val.labels)
        .filter(|(&p, &y)| (p >= 0.5) != (y == 1))
        .count();
    let rate = errors as f64 / val.labels.len() as f64;
    report(
        1,
        errors <= 1,
        &format!(
            "MAP misclassifies {errors}/{} validation points (rate {rate:.1e}, at most 1 allowed) in {:.0}s",
            val.labels.len(),
            started.elapsed().as_secs_f64()
        ),
    );
}

// =====================================================================
// 2. MAP adversarial error: run_attack with defaults exceeds 0.99.

#[test]
fn criterion_02_map_adversarial_confidence() {
    let run = paper();
    let started = Instant::now();
    let train = generate_split(&run.sphere(), Split::Train).unwrap();
    let mut features = feature_map_matrix(train.points.view());
    let normalizer = fit_normalizer(features.view()).unwrap();
    normalizer.normalize_in_place(&mut features);
    let map = fit_method(
        Method::Map,
        features.view(),
        &train.labels,
        &run.bench_config(),
        0,
    )
    .unwrap();

    let attack_cfg = AttackConfig::default();
    let sphere = run.sphere();
    let mut best = f64::NEG_INFINITY;
    for source in [0u8, 1] {
        let result = run_attack(
            &map,
            &normalizer,
            sphere.radius_of(source),
            source,
            &attack_cfg,
            derive_seed(run.seed, "attack/source", source as u64),
        )
        .unwrap();
        best = best.max(result.target_prob);
    }
    report(
        2,
        best > 0.99,
        &format!(
            "best on-sphere target probability against MAP is {best:.6} (need > 0.99) in {:.0}s",
            started.elapsed().as_secs_f64()
        ),
    );
}

// =====================================================================
// 3. Ordering battery on a full paper-profile benchmark run.

#[test]
fn criterion_03_ordering_battery_paper_benchmark() {
    let run = paper();
    let started = Instant::now();
    let report_data = run_benchmark(&run.bench_config()).unwrap();
    let battery = ordering_battery(&report_data).unwrap();
    // Invariants (b)-(f); (a) restates criterion 2 and is reported too.
    let required = [
        "mcmc_reduces_adv_error_vs_map",
        "bootstrap_adv_error_above_mcmc",
        "bootstrap_resampled_error_above_mcmc",
        "laplace_confidence_below_mcmc",
        "mean_hier_dominates_isotropic_mcmc",
    ];
    let mut details = Vec::new();
    for row in &report_data.rows {
        details.push(format!(
            "{}: conf={} adv={} res={}{}",
            row.method.display_name(),
            row.avg_confidence.map_or("-".into(), |v| format!("{v:.4}")),
            row.adv_error.map_or("-".into(), |v| format!("{v:.4}")),
            row.resampled_error
                .map_or("-".into(), |v| format!("{v:.4}")),
            row.error
                .as_ref()
                .map_or(String::new(), |e| format!(" error={e}")),
        ));
    }
    for check in &battery {
        details.push(format!(
            "{}{}: {}",
            check.name,
            if check.passed { "" } else { " [FAILED]" },
            check.detail
        ));
    }
    let pass = required.iter().all(|name| {
        battery
            .iter()
            .any(|check| check.name == *name && check.passed)
    });
    report(
        3,
        pass,
        &format!(
            "paper benchmark in {:.0}s; {}",
            started.elapsed().as_secs_f64(),
            details.join(" | ")
        ),
    );
}

// =====================================================================
// 4. Slice-sampler calibration on known Gaussians, 1e5 draws, 5 SE.

#[test]
fn criterion_04_slice_sampler_calibration() {
    let n: usize = 100_000;
    let cfg = SliceConfig {
        n_samples: n,
        burn_in: 200,
        thin: 1,
        initial_width: 1.0,
        max_step_out: 100,
        diagnostics_path: None,
    };

    // Standard normal.
    let mut target = FnTarget::new(array![0.0], |x: ArrayView1<'_, f64>| -0.5 * x[0] * x[0]);
    let mut rng = ChaCha12Rng::seed_from_u64(41);
    let draws = run_chain(&mut target, &cfg, &mut rng).unwrap();
    let mean = draws.column(0).sum() / n as f64;
    let var = draws.column(0).iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>()
        / (n - 1) as f64;
    let se_mean = (1.0 / n as f64).sqrt();
    let se_var = (2.0 / n as f64).sqrt();
    let ok_1d = mean.abs() < 5.0 * se_mean && (var - 1.0).abs() < 5.0 * se_var;

    // Correlated 2D Gaussian, mean (1, -2), var (2, 1), correlation 0.6.
    let (m1, m2, v1, v2, rho) = (1.0, -2.0, 2.0_f64, 1.0_f64, 0.6_f64);
    let cov = rho * (v1 * v2).sqrt();
    let det = v1 * v2 - cov * cov;
    let log_f = move |x: ArrayView1<'_, f64>| {
        let (d1, d2) = (x[0] - m1, x[1] - m2);
        -0.5 * (v2 * d1 * d1 - 2.0 * cov * d1 * d2 + v1 * d2 * d2) / det
    };
    let mut target = FnTarget::new(array![0.0, 0.0], log_f);
    let mut rng = ChaCha12Rng::seed_from_u64(42);
    let draws = run_chain(&mut target, &cfg, &mut rng).unwrap();
    let mean1 = draws.column(0).sum() / n as f64;
    let mean2 = draws.column(1).sum() / n as f64;
    let var1 = draws.column(0).iter().map(|&x| (x - mean1) * (x - mean1)).sum::<f64>()
        / (n - 1) as f64;
    let var2 = draws.column(1).iter().map(|&x| (x - mean2) * (x - mean2)).sum::<f64>()
        / (n - 1) as f64;
    let cov_hat = draws
        .column(0)
        .iter()
        .zip(draws.column(1).iter())
        .map(|(&a, &b)| (a - mean1) * (b - mean2))
        .sum::<f64>()
        / (n - 1) as f64;
    // Correlated draws: coordinate-wise slice sampling at correlation 0.6
    // keeps the autocorrelation mild; 5-SE bands computed from the naive
    // SE formulas still hold comfortably.
    let se = |v: f64| (v / n as f64).sqrt();
    let se_v = |v: f64| v * (2.0 / n as f64).sqrt();
    let checks = [
        (mean1 - m1).abs() < 5.0 * se(v1),
        (mean2 - m2).abs() < 5.0 * se(v2),
        (var1 - v1).abs() < 5.0 * se_v(v1),
        (var2 - v2).abs() < 5.0 * se_v(v2),
        (cov_hat - cov).abs() < 5.0 * se_v(cov.max(1.0)),
    ];
    let ok_2d = checks.iter().all(|&c| c);
    report(
        4,
        ok_1d && ok_2d,
        &format!(
            "N(0,1): mean {mean:.5} var {var:.5}; 2D: means ({mean1:.4}, {mean2:.4}) \
             vars ({var1:.4}, {var2:.4}) cov {cov_hat:.4} vs ({m1}, {m2}), ({v1}, {v2}), {cov:.3}"
        ),
    );
}

// =====================================================================
// 5. Gradient suite: analytic vs central differences on 100 instances.

fn central_diff(f: &mut dyn FnMut(ArrayView1<'_, f64>) -> f64, x: ArrayView1<'_, f64>) -> Array1<f64> {
    let h = 1e-6;
    let mut grad = Array1::zeros(x.len());
    let mut point = x.to_owned();
    for j in 0..x.len() {
        let orig = point[j];
        point[j] = orig + h;
        let up = f(point.view());
        point[j] = orig - h;
        let down = f(point.view());
        point[j] = orig;
        grad[j] = (up - down) / (2.0 * h);
    }
    grad
}

fn max_rel_err(analytic: &Array1<f64>, numeric: &Array1<f64>) -> f64 {
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(&a, &n)| (a - n).abs() / (1.0 + a.abs().max(n.abs())))
        .fold(0.0, f64::max)
}

#[test]
fn criterion_05_gradient_suite() {
    let mut rng = ChaCha12Rng::seed_from_u64(5050);
    let mut worst_posterior = 0.0f64;
    let mut worst_attack = 0.0f64;
    let mut worst_elbo = 0.0f64;

    for instance in 0..100 {
        let dim = 2 + (instance % 4);
        let n = 3 + (instance % 5);
        let features = Array2::from_shape_fn((n, dim), |_| rng.random_range(-1.5..1.5));
        let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();

        // Log-posterior gradients for the three prior families.
        let priors = [
            PriorFamily::Isotropic { sigma_w: 2.5 },
            PriorFamily::ScaleHierarchical { sigma_v: 1.5 },
            PriorFamily::MeanHierarchical {
                sigma_w: 2.0,
                sigma_mu: 1.0,
            },
        ];
        for prior in priors {
            let spec = ModelSpec::new(dim, prior).unwrap();
            let params =
                Array1::from_shape_fn(spec.param_dim(), |_| rng.random_range(-1.0..1.0));
            let analytic = spec
                .grad_log_posterior(features.view(), &labels, params.view())
                .unwrap();
            let mut value = |p: ArrayView1<'_, f64>| {
                spec.log_posterior_unnorm(features.view(), &labels, p).unwrap()
            };
            let numeric = central_diff(&mut value, params.view());
            worst_posterior = worst_posterior.max(max_rel_err(&analytic, &numeric));
        }

        // Attack objectives (surrogate and true) for a small ensemble.
        let members = 1 + (instance % 3);
        let weights = Array2::from_shape_fn((members, dim), |_| rng.random_range(-2.0..2.0));
        let ensemble = WeightEnsemble::new(weights, "test", 0).unwrap();
        let normalizer = FeatureNormalizer {
            means: Array1::from_shape_fn(dim, |_| rng.random_range(-0.3..0.3)),
            stds: Array1::from_shape_fn(dim, |_| rng.random_range(0.5..2.0)),
        };
        let x = Array1::from_shape_fn(dim, |_| rng.random_range(0.2..1.2));
        let target: u8 = rng.random_range(0..2);
        let (_, g_sur) =
            surrogate_value_and_grad(&ensemble, &normalizer, x.view(), target).unwrap();
        let mut sur = |p: ArrayView1<'_, f64>| {
            surrogate_value_and_grad(&ensemble, &normalizer, p, target).unwrap().0
        };
        worst_attack = worst_attack.max(max_rel_err(&g_sur, &central_diff(&mut sur, x.view())));
        let (_, g_true) = true_value_and_grad(&ensemble, &normalizer, x.view(), target).unwrap();
        let mut tru = |p: ArrayView1<'_, f64>| {
            true_value_and_grad(&ensemble, &normalizer, p, target).unwrap().0
        };
        worst_attack = worst_attack.max(max_rel_err(&g_true, &central_diff(&mut tru, x.view())));

        // ELBO gradient with common random numbers (frozen draws,
        // full-batch likelihood so no minibatch randomness).
        let spec = ModelSpec::new(dim, PriorFamily::Isotropic { sigma_w: 2.0 }).unwrap();
        let svi_target = ModelSviTarget::new(&spec, features.view(), &labels, n).unwrap();
        let packed = dim + dim * (dim + 1) / 2;
        let flat = Array1::from_shape_fn(packed, |_| rng.random_range(-0.6..0.6));
        let eps: Vec<Array1<f64>> = (0..3)
            .map(|_| Array1::from_shape_fn(dim, |_| rng.random_range(-1.0..1.0)))
            .collect();
        let mut grad_rng = ChaCha12Rng::seed_from_u64(7);
        let (_, analytic) =
            negative_elbo_with_grad(flat.view(), &svi_target, &eps, None, &mut grad_rng).unwrap();
        let mut elbo = |p: ArrayView1<'_, f64>| {
            let mut r = ChaCha12Rng::seed_from_u64(7);
            negative_elbo_with_grad(p, &svi_target, &eps, None, &mut r).unwrap().0
        };
        worst_elbo = worst_elbo.max(max_rel_err(&analytic, &central_diff(&mut elbo, flat.view())));
    }

    report(
        5,
        worst_posterior < 1e-5 && worst_attack < 1e-5 && worst_elbo < 1e-3,
        &format!(
            "worst relative error over 100 instances: log-posterior {worst_posterior:.2e} \
             (need < 1e-5), attack objectives {worst_attack:.2e} (need < 1e-5), \
             ELBO {worst_elbo:.2e} (need < 1e-3)"
        ),
    );
}

// =====================================================================
// 6. ELBO lower-bounds the quadrature log-evidence on a 2D problem.

#[test]
fn criterion_06_elbo_bounds_log_evidence() {
    let mut rng = ChaCha12Rng::seed_from_u64(66);
    let n = 24;
    let features = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0));
    let labels: Vec<u8> = (0..n).map(|i| u8::from(i % 2 == 0)).collect();
    let spec = ModelSpec::new(2, PriorFamily::Isotropic { sigma_w: 3.0 }).unwrap();

    // Quadrature oracle: trapezoid over a grid that covers the prior mass.
    let lo = -18.0;
    let hi = 18.0;
    let res = 601;
    let step = (hi - lo) / (res - 1) as f64;
    let mut terms = Vec::with_capacity(res * res);
    let mut w = Array1::zeros(2);
    for i in 0..res {
        w[0] = lo + step * i as f64;
        for j in 0..res {
            w[1] = lo + step * j as f64;
            terms.push(
                spec.log_posterior_unnorm(features.view(), &labels, w.view())
                    .unwrap(),
            );
        }
    }
    let log_evidence = log_sum_exp(&terms) + 2.0 * step.ln();

    let optimizer = advspheres::optim::LbfgsConfig::default();
    let q = laplace_fit(&spec, features.view(), &labels, &optimizer).unwrap();
    let (elbo, se) = elbo_estimate(&spec, features.view(), &labels, &q, 10_000, 606).unwrap();

    report(
        6,
        elbo <= log_evidence + 3.0 * se,
        &format!(
            "ELBO {elbo:.5} (SE {se:.5}) vs quadrature log-evidence {log_evidence:.5}; \
             bound slack {:.5}",
            log_evidence - elbo
        ),
    );
}

// =====================================================================
// 7. Laplace exactness on a pure Gaussian (zero-data) target.

#[test]
fn criterion_07_laplace_zero_data_exactness() {
    let dim = 500;
    let sigma_w = 100.0;
    let spec = ModelSpec::new(dim, PriorFamily::Isotropic { sigma_w }).unwrap();
    let features = Array2::zeros((0, dim));
    let labels: Vec<u8> = Vec::new();
    let optimizer = advspheres::optim::LbfgsConfig::default();
    let q = laplace_fit(&spec, features.view(), &labels, &optimizer).unwrap();

    let mean_err = q.mean.iter().fold(0.0f64, |acc, &m| acc.max(m.abs()));
    let cov = q.covariance();
    let mut cov_err = 0.0f64;
    for i in 0..dim {
        for j in 0..dim {
            let want = if i == j { sigma_w * sigma_w } else { 0.0 };
            cov_err = cov_err.max((cov[[i, j]] - want).abs());
        }
    }
    report(
        7,
        mean_err < 1e-9 && cov_err < 1e-9,
        &format!(
            "zero-data Laplace at D={dim}: max |mean| = {mean_err:.2e}, \
             max |cov - sigma_w^2 I| = {cov_err:.2e} (both need < 1e-9)"
        ),
    );
}

// =====================================================================
// 8. Numerical-stability regression at activation magnitude 500.

#[test]
fn criterion_08_saturated_gradient_stability() {
    // One-member ensemble and a point engineered to give activation -500
    // for target 1: the naive chain rule multiplies by sigmoid'(a), which
    // evaluates to exactly zero in f64 arithmetic at |a| = 500 on the
    // saturated side, while the stabilized form keeps a usable direction.
    let dim = 4;
    let normalizer = FeatureNormalizer::identity(dim);
    let x = Array1::from_elem(dim, 0.5);
    let phi = feature_map(x.view()); // all entries 0.25
    let scale = 500.0 / (dim as f64 * 0.25);
    let weights = Array2::from_elem((1, dim), scale);
    let ensemble = WeightEnsemble::new(weights, "test", 0).unwrap();

    // Activation +500; attack toward target 0 sits on the saturated side.
    let activation: f64 = phi.iter().map(|&p| p * scale).sum();
    let p1 = sigmoid(activation);
    let naive_chain = p1 * (1.0 - p1); // sigmoid'(a)
    let (_, grad) = surrogate_value_and_grad(&ensemble, &normalizer, x.view(), 0).unwrap();
    let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let all_finite = grad.iter().all(|g| g.is_finite());
    report(
        8,
        activation == 500.0 && naive_chain == 0.0 && all_finite && grad_norm > 1e-6,
        &format!(
            "activation {activation}; naive sigmoid-chain factor {naive_chain:e} (underflows \
             to zero), stabilized surrogate gradient norm {grad_norm:.3e} and finite"
        ),
    );
}

// =====================================================================
// 9. Attack-oracle agreement on D=2 instances.

#[test]
fn criterion_09_attack_matches_angular_oracle() {
    // Polishing to within 1e-3 in probability needs termination well
    // below the benchmark default (1e-4 in log space).
    // Multi-member objectives on a circle are multimodal, so give the
    // optimizer plenty of restarts; the oracle below is exhaustive.
    let attack_cfg = AttackConfig {
        max_iters: 20_000,
        patience: 100,
        improve_tol: 1e-8,
        restarts: 100,
        ..AttackConfig::default()
    };
    let mut worst_gap = 0.0f64;
    let mut detail = Vec::new();
    for (instance, seed) in [(0u64, 901u64), (1, 902), (2, 903)] {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let weights = Array2::from_shape_fn((3, 2), |_| rng.random_range(-4.0..4.0));
        let ensemble = WeightEnsemble::new(weights, "oracle", 0).unwrap();
        let normalizer = FeatureNormalizer {
            means: array![0.4, -0.2],
            stds: array![0.8, 1.3],
        };
        for source in [0u8, 1] {
            let radius = if source == 0 { 1.0 } else { 1.3 };
            let result = run_attack(
                &ensemble,
                &normalizer,
                radius,
                source,
                &attack_cfg,
                derive_seed(seed, "attack/source", source as u64),
            )
            .unwrap();

            // Dense angular grid oracle over the source circle.
            let target = 1 - source;
            let mut oracle = f64::NEG_INFINITY;
            let steps = 2_000_000usize;
            for k in 0..steps {
                let theta = k as f64 / steps as f64 * std::f64::consts::TAU;
                let x = array![radius * theta.cos(), radius * theta.sin()];
                let z = {
                    let phi = feature_map(x.view());
                    let mut z = phi.clone();
                    for j in 0..2 {
                        z[j] = (phi[j] - normalizer.means[j]) / normalizer.stds[j];
                    }
                    z
                };
                let acts = ensemble.weights.dot(&z);
                let logs: Vec<f64> = acts
                    .iter()
                    .map(|&a| advspheres::math::log_sigmoid(if target == 1 { a } else { -a }))
                    .collect();
                let log_prob = log_sum_exp(&logs) - (ensemble.n_members() as f64).ln();
                oracle = oracle.max(log_prob);
            }
            let gap = (oracle.exp() - result.target_prob).abs();
            worst_gap = worst_gap.max(gap);
            detail.push(format!(
                "inst{instance}/src{source}: attack {:.6} oracle {:.6}",
                result.target_prob,
                oracle.exp()
            ));
        }
    }
    report(
        9,
        worst_gap < 1e-3,
        &format!("worst |attack - oracle| = {worst_gap:.2e} (need < 1e-3); {}", detail.join("; ")),
    );
}

// =====================================================================
// 10. CI-profile benchmark determinism, bitwise, through the binary.

#[test]
fn criterion_10_ci_bench_bitwise_determinism() {
    let run_bench = |dir: &std::path::Path| {
        let started = Instant::now();
        let out = std::process::Command::new(env!("CARGO_BIN_EXE_advspheres"))
            .env_remove("ADVSPHERES_OUTPUT_DIR")
            .args(["--profile", "ci", "--output-dir"])
            .arg(dir)
            .arg("bench")
            .output()
            .expect("spawn advspheres");
        assert!(
            out.status.success(),
            "ci bench failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let csv = std::fs::read_to_string(dir.join("results.csv")).unwrap();
        (csv, started.elapsed().as_secs_f64())
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (csv_a, secs_a) = run_bench(a.path());
    let (csv_b, secs_b) = run_bench(b.path());
    let identical = csv_a == csv_b;
    let n_rows = csv_a.lines().count().saturating_sub(1);
    report(
        10,
        identical && secs_a < 600.0 && secs_b < 600.0,
        &format!(
            "two ci-profile benchmark runs ({n_rows} method rows) took {secs_a:.0}s and \
             {secs_b:.0}s (each must stay under 600s) and results.csv is \
             byte-identical: {identical}"
        ),
    );
}

// =====================================================================
// Shared sanity: the helpers the criteria rely on behave as advertised.

#[test]
fn sphere_sampling_and_projection_support_the_attack_tests() {
    let mut rng = ChaCha12Rng::seed_from_u64(99);
    let points = sample_sphere(5, 1.3, 64, &mut rng).unwrap();
    for row in points.rows() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.3).abs() < 1e-12);
    }
    let projected = project_to_sphere(points.slice(s![0, ..]), 2.6).unwrap();
    let norm = projected.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!((norm - 2.6).abs() < 1e-12);
    // Scales stay a plain data holder for the criteria above.
    let scales = PriorScales::default();
    assert_eq!(scales.sigma_w, 100.0);
}
