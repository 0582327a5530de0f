//! Coordinate-wise slice sampling (stepping out + shrinkage) over model
//! posteriors, with O(n) incremental activation caches so a coordinate
//! update never recomputes the full design-matrix product.

use crate::error::{Error, Result};
use crate::math::{derive_seed, log_normal_pdf, log_sigmoid};
use crate::model::{log_likelihood_from_activations, ModelSpec, PriorFamily, WeightEnsemble};
use crate::optim::LbfgsConfig;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::Exp1;
use std::fmt::Write as _;
use std::path::PathBuf;

#[derive(Debug, Clone)]
pub struct SliceConfig {
    /// Samples kept after burn-in and thinning.
    pub n_samples: usize,
    /// Sweeps discarded before collection starts.
    pub burn_in: usize,
    /// Keep one sample every `thin` sweeps.
    pub thin: usize,
    /// Initial bracket width for stepping out.
    pub initial_width: f64,
    /// Cap on stepping-out expansions per side.
    pub max_step_out: usize,
    /// Optional per-sweep CSV (sweep, log_density, n_evals).
    pub diagnostics_path: Option<PathBuf>,
}

impl Default for SliceConfig {
    fn default() -> Self {
        SliceConfig {
            n_samples: 1000,
            burn_in: 1000,
            thin: 5,
            initial_width: 1.0,
            max_step_out: 100,
            diagnostics_path: None,
        }
    }
}

impl SliceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 || self.thin == 0 {
            return Err(Error::Config(
                "slice sampler needs n_samples >= 1 and thin >= 1".into(),
            ));
        }
        if !(self.initial_width > 0.0) || !self.initial_width.is_finite() {
            return Err(Error::Config(format!(
                "slice initial_width must be positive, got {}",
                self.initial_width
            )));
        }
        Ok(())
    }
}

/// A distribution the coordinate-wise sampler can walk over. Implementors
/// own the state vector and any caches that make single-coordinate density
/// evaluations cheap.
pub trait CoordinateTarget {
    fn dim(&self) -> usize;
    /// Log density with coordinate `j` set to `value`, leaving state as-is.
    fn eval_at(&mut self, j: usize, value: f64) -> f64;
    /// Adopt coordinate `j` = `value`. Only called with the result of the
    /// immediately preceding accepted `eval_at`.
    fn commit(&mut self, j: usize, value: f64);
    fn current(&self) -> ArrayView1<'_, f64>;
    fn current_log_density(&self) -> f64;
    /// Rebuild caches from scratch to shed accumulated float drift.
    fn resync(&mut self);
}

/// Hard cap on shrinkage iterations; the interval provably shrinks onto
/// the current (in-slice) point, so exhausting this indicates a broken
/// density (NaN plateaus or similar).
const MAX_SHRINK: usize = 1000;

/// Rebuild caches this often (in sweeps) during a chain run.
const RESYNC_EVERY: usize = 64;

/// One update of coordinate `j` by stepping out and shrinkage. Returns the
/// number of density evaluations spent.
fn slice_update_coordinate<T: CoordinateTarget, R: Rng>(
    target: &mut T,
    j: usize,
    config: &SliceConfig,
    rng: &mut R,
) -> Result<usize> {
    let x0 = target.current()[j];
    let f0 = target.current_log_density();
    if !f0.is_finite() {
        return Err(Error::InvalidState(format!(
            "slice sampler entered a state with log density {f0}"
        )));
    }
    // Slice level: log y = f(x) - Exp(1).
    let level = f0 - rng.sample::<f64, _>(Exp1);
    let mut evals = 0usize;

    // Stepping out with per-side expansion caps.
    let width = config.initial_width;
    let mut lo = x0 - width * rng.random::<f64>();
    let mut hi = lo + width;
    for _ in 0..config.max_step_out {
        evals += 1;
        if !(target.eval_at(j, lo) > level) {
            break;
        }
        lo -= width;
    }
    for _ in 0..config.max_step_out {
        evals += 1;
        if !(target.eval_at(j, hi) > level) {
            break;
        }
        hi += width;
    }

    // Shrinkage: sample until inside the slice, pulling the violated end in.
    for _ in 0..MAX_SHRINK {
        let candidate = lo + (hi - lo) * rng.random::<f64>();
        evals += 1;
        if target.eval_at(j, candidate) > level {
            target.commit(j, candidate);
            return Ok(evals);
        }
        if candidate < x0 {
            lo = candidate;
        } else {
            hi = candidate;
        }
    }
    Err(Error::InvalidState(format!(
        "slice shrinkage failed to find an acceptable point for coordinate {j}"
    )))
}

/// One full sweep over all coordinates in fixed order.
pub fn slice_sweep<T: CoordinateTarget, R: Rng>(
    target: &mut T,
    config: &SliceConfig,
    rng: &mut R,
) -> Result<usize> {
    let mut evals = 0;
    for j in 0..target.dim() {
        evals += slice_update_coordinate(target, j, config, rng)?;
    }
    Ok(evals)
}

/// Run a chain and collect `n_samples` states (rows) after burn-in and
/// thinning.
pub fn run_chain<T: CoordinateTarget, R: Rng>(
    target: &mut T,
    config: &SliceConfig,
    rng: &mut R,
) -> Result<Array2<f64>> {
    config.validate()?;
    let total_sweeps = config.burn_in + config.n_samples * config.thin;
    let mut samples = Array2::zeros((config.n_samples, target.dim()));
    let mut collected = 0;
    let mut diagnostics = config
        .diagnostics_path
        .as_ref()
        .map(|_| String::from("sweep,log_density,n_evals\n"));
    for sweep in 1..=total_sweeps {
        let evals = slice_sweep(target, config, rng)?;
        if sweep % RESYNC_EVERY == 0 {
            target.resync();
        }
        if let Some(d) = diagnostics.as_mut() {
            let _ = writeln!(d, "{sweep},{},{evals}", target.current_log_density());
        }
        if sweep > config.burn_in && (sweep - config.burn_in).is_multiple_of(config.thin) {
            samples.row_mut(collected).assign(&target.current());
            collected += 1;
        }
    }
    debug_assert_eq!(collected, config.n_samples);
    if let (Some(text), Some(path)) = (diagnostics, config.diagnostics_path.as_ref()) {
        std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(samples)
}

/// Adapter running the sampler over a plain log-density closure; every
/// evaluation is a full recompute. Used for calibration and small targets.
pub struct FnTarget<F> {
    params: Array1<f64>,
    log_f: F,
    cached: f64,
}

impl<F: Fn(ArrayView1<'_, f64>) -> f64> FnTarget<F> {
    pub fn new(init: Array1<f64>, log_f: F) -> Self {
        let cached = log_f(init.view());
        FnTarget {
            params: init,
            log_f,
            cached,
        }
    }
}

impl<F: Fn(ArrayView1<'_, f64>) -> f64> CoordinateTarget for FnTarget<F> {
    fn dim(&self) -> usize {
        self.params.len()
    }

    fn eval_at(&mut self, j: usize, value: f64) -> f64 {
        let orig = self.params[j];
        self.params[j] = value;
        let f = (self.log_f)(self.params.view());
        self.params[j] = orig;
        f
    }

    fn commit(&mut self, j: usize, value: f64) {
        self.params[j] = value;
        self.cached = (self.log_f)(self.params.view());
    }

    fn current(&self) -> ArrayView1<'_, f64> {
        self.params.view()
    }

    fn current_log_density(&self) -> f64 {
        self.cached
    }

    fn resync(&mut self) {
        self.cached = (self.log_f)(self.params.view());
    }
}

/// Model-posterior target with incremental caches.
///
/// For the isotropic and mean-hierarchical families the cache is the
/// activation vector a = Phi w; a weight update adds `delta * column_j`.
/// For the non-centered scale family the cache is b = Phi z with
/// a = exp(v/2) b, so both z and v updates stay O(n).
pub struct PosteriorTarget<'a> {
    spec: &'a ModelSpec,
    features: ArrayView2<'a, f64>,
    /// Transposed copy of the feature matrix so the per-coordinate loops
    /// stream a contiguous row instead of gathering a strided column; the
    /// inner likelihood loop runs once per slice evaluation and dominates
    /// the sampler's runtime at high dimension.
    features_by_coord: Array2<f64>,
    labels: &'a [u8],
    params: Array1<f64>,
    /// a = Phi w for isotropic/mean families, b = Phi z for the scale family.
    cache: Array1<f64>,
    log_lik: f64,
    log_prior: f64,
    /// Stashed value of the most recent eval so commit can reuse it.
    last_eval: Option<(usize, f64, f64, f64)>, // (j, value, log_lik, log_prior)
}

impl<'a> PosteriorTarget<'a> {
    pub fn new(
        spec: &'a ModelSpec,
        features: ArrayView2<'a, f64>,
        labels: &'a [u8],
        init: Array1<f64>,
    ) -> Result<Self> {
        if init.len() != spec.param_dim() {
            return Err(Error::DimensionMismatch(format!(
                "init has {} entries, parameter space is {}",
                init.len(),
                spec.param_dim()
            )));
        }
        let mut target = PosteriorTarget {
            spec,
            features,
            features_by_coord: features.t().as_standard_layout().to_owned(),
            labels,
            params: init,
            cache: Array1::zeros(features.nrows()),
            log_lik: 0.0,
            log_prior: 0.0,
            last_eval: None,
        };
        target.resync();
        Ok(target)
    }

    fn scale(&self) -> f64 {
        match self.spec.prior {
            PriorFamily::ScaleHierarchical { .. } => (0.5 * self.params[self.spec.dim]).exp(),
            _ => 1.0,
        }
    }

    /// Log likelihood after shifting the cached pre-activations by
    /// `delta * column_j`, scaled by `scale` (1 except for the scale family).
    fn log_lik_shifted(&self, j: usize, delta: f64, scale: f64) -> f64 {
        let col = self.features_by_coord.row(j);
        self.cache
            .iter()
            .zip(col.iter())
            .zip(self.labels)
            .map(|((&c, &phi), &y)| {
                let a = scale * (c + delta * phi);
                if y == 1 {
                    log_sigmoid(a)
                } else {
                    log_sigmoid(-a)
                }
            })
            .sum()
    }

    /// Log likelihood with the cache rescaled only (v updates).
    fn log_lik_rescaled(&self, scale: f64) -> f64 {
        self.cache
            .iter()
            .zip(self.labels)
            .map(|(&c, &y)| {
                let a = scale * c;
                if y == 1 {
                    log_sigmoid(a)
                } else {
                    log_sigmoid(-a)
                }
            })
            .sum()
    }
}

impl CoordinateTarget for PosteriorTarget<'_> {
    fn dim(&self) -> usize {
        self.spec.param_dim()
    }

    fn eval_at(&mut self, j: usize, value: f64) -> f64 {
        let dim = self.spec.dim;
        let old = self.params[j];
        let (ll, lp) = match self.spec.prior {
            PriorFamily::Isotropic { sigma_w } => {
                let ll = self.log_lik_shifted(j, value - old, 1.0);
                let lp = self.log_prior
                    + log_normal_pdf(value, 0.0, sigma_w)
                    - log_normal_pdf(old, 0.0, sigma_w);
                (ll, lp)
            }
            PriorFamily::ScaleHierarchical { sigma_v } => {
                if j < dim {
                    let ll = self.log_lik_shifted(j, value - old, self.scale());
                    let lp = self.log_prior + log_normal_pdf(value, 0.0, 1.0)
                        - log_normal_pdf(old, 0.0, 1.0);
                    (ll, lp)
                } else {
                    let ll = self.log_lik_rescaled((0.5 * value).exp());
                    let lp = self.log_prior + log_normal_pdf(value, 0.0, sigma_v)
                        - log_normal_pdf(old, 0.0, sigma_v);
                    (ll, lp)
                }
            }
            PriorFamily::MeanHierarchical { sigma_w, sigma_mu } => {
                let mu = self.params[dim];
                if j < dim {
                    let ll = self.log_lik_shifted(j, value - old, 1.0);
                    let lp = self.log_prior + log_normal_pdf(value, mu, sigma_w)
                        - log_normal_pdf(old, mu, sigma_w);
                    (ll, lp)
                } else {
                    // mu moves every weight's prior term but not the likelihood.
                    let w_term: f64 = self
                        .params
                        .iter()
                        .take(dim)
                        .map(|&w| log_normal_pdf(w, value, sigma_w))
                        .sum();
                    (self.log_lik, w_term + log_normal_pdf(value, 0.0, sigma_mu))
                }
            }
        };
        self.last_eval = Some((j, value, ll, lp));
        ll + lp
    }

    fn commit(&mut self, j: usize, value: f64) {
        let (ej, ev, ll, lp) = self
            .last_eval
            .expect("commit must follow the accepted eval");
        debug_assert!(ej == j && ev == value, "commit does not match last eval");
        let dim = self.spec.dim;
        let update_cache = match self.spec.prior {
            PriorFamily::ScaleHierarchical { .. } => j < dim,
            PriorFamily::MeanHierarchical { .. } => j < dim,
            PriorFamily::Isotropic { .. } => true,
        };
        if update_cache {
            let delta = value - self.params[j];
            let col = self.features_by_coord.row(j);
            self.cache.zip_mut_with(&col, |c, &phi| *c += delta * phi);
        }
        self.params[j] = value;
        self.log_lik = ll;
        self.log_prior = lp;
        self.last_eval = None;
    }

    fn current(&self) -> ArrayView1<'_, f64> {
        self.params.view()
    }

    fn current_log_density(&self) -> f64 {
        self.log_lik + self.log_prior
    }

    fn resync(&mut self) {
        let dim = self.spec.dim;
        // Cache holds Phi * (weight-block parameters); for the scale family
        // that block is z rather than w.
        let head = self.params.slice(ndarray::s![..dim]);
        self.cache = self.features.dot(&head);
        let scale = self.scale();
        let activations = self.cache.mapv(|c| scale * c);
        self.log_lik = log_likelihood_from_activations(activations.view(), self.labels);
        self.log_prior = self
            .spec
            .log_prior(self.params.view())
            .expect("params length fixed at construction");
    }
}

/// Draw posterior parameter samples for a model via slice sampling,
/// initialized at the MAP estimate (found internally with L-BFGS).
pub fn sample_posterior_params(
    spec: &ModelSpec,
    features: ArrayView2<'_, f64>,
    labels: &[u8],
    config: &SliceConfig,
    optimizer: &LbfgsConfig,
    seed: u64,
) -> Result<Array2<f64>> {
    config.validate()?;
    let map = crate::point::optimize_point_params(spec, features, labels, true, optimizer, None)?;
    let mut target = PosteriorTarget::new(spec, features, labels, map.params)?;
    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, "mcmc/chain", 0));
    run_chain(&mut target, config, &mut rng)
}

/// Slice-sampling posterior ensemble: parameter samples mapped to
/// predictive weights, one ensemble member per retained sample.
pub fn fit_mcmc(
    spec: &ModelSpec,
    features: ArrayView2<'_, f64>,
    labels: &[u8],
    config: &SliceConfig,
    optimizer: &LbfgsConfig,
    seed: u64,
) -> Result<WeightEnsemble> {
    let params = sample_posterior_params(spec, features, labels, config, optimizer, seed)?;
    let mut weights = Array2::zeros((params.nrows(), spec.dim));
    for (i, row) in params.rows().into_iter().enumerate() {
        weights.row_mut(i).assign(&spec.to_weights(row)?);
    }
    let source = format!("mcmc_{}", spec.prior.name());
    WeightEnsemble::new(weights, source, seed)
}
