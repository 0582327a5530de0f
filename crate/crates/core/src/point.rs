//! Point-estimate inference: maximum likelihood, maximum a posteriori, and
//! the nonparametric bootstrap over MAP refits.

use crate::error::{Error, Result};
use crate::math::derive_seed;
use crate::model::{ModelSpec, WeightEnsemble};
use crate::optim::{lbfgs_minimize, LbfgsConfig, OptResult};
use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

/// Minimize the negative log posterior (or negative log likelihood when
/// `use_prior` is false) over the model's parameter space, starting from
/// `init` or zeros. Returns raw parameters — callers that need predictive
/// weights map them through `ModelSpec::to_weights`.
pub fn optimize_point_params(
    spec: &ModelSpec,
    features: ArrayView2<'_, f64>,
    labels: &[u8],
    use_prior: bool,
    optimizer: &LbfgsConfig,
    init: Option<Array1<f64>>,
) -> Result<OptResult> {
    let x0 = match init {
        Some(x) => {
            if x.len() != spec.param_dim() {
                return Err(Error::DimensionMismatch(format!(
                    "init has {} entries, parameter space is {}",
                    x.len(),
                    spec.param_dim()
                )));
            }
            x
        }
        None => Array1::zeros(spec.param_dim()),
    };
    lbfgs_minimize(x0, optimizer, |params| {
        let (value, grad) = if use_prior {
            (
                spec.log_posterior_unnorm(features, labels, params)?,
                spec.grad_log_posterior(features, labels, params)?,
            )
        } else {
            let weights = spec.to_weights(params)?;
            let value = crate::model::log_likelihood(features, labels, weights.view())?;
            // For the isotropic family the parameters are the weights, so
            // the likelihood gradient is exact; that is the only family the
            // maximum-likelihood path is used with.
            let activations = features.dot(&weights);
            let residual: Array1<f64> = activations
                .iter()
                .zip(labels)
                .map(|(&a, &y)| f64::from(y) - crate::math::sigmoid(a))
                .collect();
            let mut grad = Array1::zeros(spec.param_dim());
            let wg = features.t().dot(&residual);
            grad.slice_mut(ndarray::s![..spec.dim]).assign(&wg);
            (value, grad)
        };
        // Flip sign: the optimizer minimizes.
        Ok((-value, grad.mapv(|g| -g)))
    })
}

/// Maximum a posteriori point estimate as a one-member ensemble.
pub fn fit_map(
    spec: &ModelSpec,
    features: ArrayView2<'_, f64>,
    labels: &[u8],
    optimizer: &LbfgsConfig,
    seed: u64,
) -> Result<WeightEnsemble> {
    let res = optimize_point_params(spec, features, labels, true, optimizer, None)?;
    let weights = spec.to_weights(res.params.view())?;
    WeightEnsemble::from_single(weights, "map", seed)
}

/// Maximum likelihood point estimate as a one-member ensemble. On
/// separable data the optimum is at infinity; the fit returns the iterate
/// where the iteration budget ran out, which is the intended behavior.
pub fn fit_ml(
    spec: &ModelSpec,
    features: ArrayView2<'_, f64>,
    labels: &[u8],
    optimizer: &LbfgsConfig,
    seed: u64,
) -> Result<WeightEnsemble> {
    let res = optimize_point_params(spec, features, labels, false, optimizer, None)?;
    let weights = spec.to_weights(res.params.view())?;
    WeightEnsemble::from_single(weights, "ml", seed)
}

#[derive(Debug, Clone)]
pub struct BootstrapConfig {
    pub n_members: usize,
    pub optimizer: LbfgsConfig,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            n_members: 1000,
            optimizer: LbfgsConfig::default(),
        }
    }
}

/// Indices of one with-replacement resample of size n, in draw order.
pub fn resample_indices(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Nonparametric bootstrap: MAP refits on with-replacement resamples of
/// the training set, one ensemble member per resample. Member seeds derive
/// from the master seed, so the ensemble is reproducible regardless of
/// thread scheduling. Fails with the member list if any refit fails.
pub fn fit_bootstrap(
    spec: &ModelSpec,
    features: ArrayView2<'_, f64>,
    labels: &[u8],
    config: &BootstrapConfig,
    seed: u64,
) -> Result<WeightEnsemble> {
    if config.n_members == 0 {
        return Err(Error::Config("bootstrap needs at least one member".into()));
    }
    let n = labels.len();
    if n == 0 {
        return Err(Error::DegenerateData("bootstrap needs training data".into()));
    }
    let fits: Vec<Result<Array1<f64>>> = (0..config.n_members)
        .into_par_iter()
        .map(|member| {
            let mut rng =
                ChaCha12Rng::seed_from_u64(derive_seed(seed, "bootstrap/member", member as u64));
            let indices = resample_indices(&mut rng, n);
            let mut res_features = Array2::zeros((n, features.ncols()));
            let mut res_labels = vec![0u8; n];
            for (row, &idx) in indices.iter().enumerate() {
                res_features.row_mut(row).assign(&features.row(idx));
                res_labels[row] = labels[idx];
            }
            let res = optimize_point_params(
                spec,
                res_features.view(),
                &res_labels,
                true,
                &config.optimizer,
                None,
            )?;
            spec.to_weights(res.params.view())
        })
        .collect();

    let failed: Vec<usize> = fits
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.is_err().then_some(i))
        .collect();
    if !failed.is_empty() {
        return Err(Error::EnsembleFailure { failed });
    }
    let mut weights = Array2::zeros((config.n_members, spec.dim));
    for (i, fit) in fits.into_iter().enumerate() {
        weights.row_mut(i).assign(&fit.expect("failures handled"));
    }
    WeightEnsemble::new(weights, "bootstrap", seed)
}
