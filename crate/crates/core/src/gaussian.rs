//! Gaussian posterior approximations: the Laplace approximation at the MAP
//! mode and stochastic variational inference with a reparameterized
//! full-covariance (or block-structured) Gaussian.

use crate::error::{Error, Result};
use crate::math::{derive_seed, log_sum_exp};
use crate::model::{ModelSpec, PriorFamily, WeightEnsemble};
use crate::optim::{LbfgsConfig, MomentumSgd};
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

/// Multivariate Gaussian over model parameters, stored as a mean and a
/// lower-triangular Cholesky factor of the covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub mean: Array1<f64>,
    /// Lower triangular L with covariance = L L^T.
    pub chol_cov: Array2<f64>,
}

impl GaussianPosterior {
    pub fn new(mean: Array1<f64>, chol_cov: Array2<f64>) -> Result<Self> {
        let d = mean.len();
        if chol_cov.nrows() != d || chol_cov.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "mean has {d} entries but the factor is {}x{}",
                chol_cov.nrows(),
                chol_cov.ncols()
            )));
        }
        for j in 0..d {
            if !(chol_cov[[j, j]] > 0.0) {
                return Err(Error::CurvatureDegenerate(format!(
                    "factor diagonal entry {j} is {}, must be positive",
                    chol_cov[[j, j]]
                )));
            }
        }
        Ok(GaussianPosterior { mean, chol_cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Dense covariance L L^T.
    pub fn covariance(&self) -> Array2<f64> {
        self.chol_cov.dot(&self.chol_cov.t())
    }

    /// Log density at a point (with normalizing constants).
    pub fn log_density(&self, x: ArrayView1<'_, f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "point has {} entries, distribution is {}-dimensional",
                x.len(),
                self.dim()
            )));
        }
        let centered = &x - &self.mean;
        let z = forward_solve(self.chol_cov.view(), centered.view());
        let log_det_half: f64 = (0..self.dim())
            .map(|j| self.chol_cov[[j, j]].ln())
            .sum();
        let d = self.dim() as f64;
        Ok(-0.5 * z.dot(&z) - log_det_half - 0.5 * d * (2.0 * std::f64::consts::PI).ln())
    }

    /// Draw parameter vectors theta = mean + L eps, one per row.
    pub fn sample_params(&self, n: usize, rng: &mut impl Rng) -> Array2<f64> {
        let d = self.dim();
        let mut out = Array2::zeros((n, d));
        let mut eps = Array1::zeros(d);
        for mut row in out.rows_mut() {
            for e in eps.iter_mut() {
                *e = rng.sample(StandardNormal);
            }
            row.assign(&(&self.mean + &self.chol_cov.dot(&eps)));
        }
        out
    }

    /// Sample an ensemble of predictive weights through the model's
    /// parameter-to-weight map.
    pub fn sample_ensemble(
        &self,
        spec: &ModelSpec,
        n: usize,
        source: impl Into<String>,
        seed: u64,
    ) -> Result<WeightEnsemble> {
        if self.dim() != spec.param_dim() {
            return Err(Error::DimensionMismatch(format!(
                "distribution over {} parameters, model needs {}",
                self.dim(),
                spec.param_dim()
            )));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, "gaussian/sample", 0));
        let params = self.sample_params(n, &mut rng);
        let mut weights = Array2::zeros((n, spec.dim));
        for (i, row) in params.rows().into_iter().enumerate() {
            weights.row_mut(i).assign(&spec.to_weights(row)?);
        }
        WeightEnsemble::new(weights, source, seed)
    }
}

/// Lower-triangular Cholesky factorization. Fails on non-positive-definite
/// input.
pub fn cholesky(a: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let d = a.nrows();
    if a.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "cholesky needs a square matrix, got {}x{}",
            d,
            a.ncols()
        )));
    }
    let mut l = Array2::zeros((d, d));
    for i in 0..d {
        for j in 0..=i {
            let mut sum = a[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if !(sum > 0.0) || !sum.is_finite() {
                    return Err(Error::CurvatureDegenerate(format!(
                        "pivot {i} is {sum}; matrix is not positive definite"
                    )));
                }
                l[[i, j]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Cholesky with escalating diagonal jitter: exact first, then 1e-10,
/// growing by 100x up to 1e-2 before giving up.
pub fn cholesky_with_jitter(a: ArrayView2<'_, f64>) -> Result<(Array2<f64>, f64)> {
    let jitters = [0.0, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2];
    let mut last_err = None;
    for &jitter in &jitters {
        let attempt = if jitter == 0.0 {
            cholesky(a)
        } else {
            let mut padded = a.to_owned();
            for j in 0..a.nrows() {
                padded[[j, j]] += jitter;
            }
            cholesky(padded.view())
        };
        match attempt {
            Ok(l) => return Ok((l, jitter)),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

/// Solve L z = b for lower-triangular L.
pub fn forward_solve(l: ArrayView2<'_, f64>, b: ArrayView1<'_, f64>) -> Array1<f64> {
    let d = b.len();
    let mut z = Array1::zeros(d);
    for i in 0..d {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[[i, k]] * z[k];
        }
        z[i] = sum / l[[i, i]];
    }
    z
}

/// Solve L^T x = b for lower-triangular L.
pub fn backward_solve(l: ArrayView2<'_, f64>, b: ArrayView1<'_, f64>) -> Array1<f64> {
    let d = b.len();
    let mut x = Array1::zeros(d);
    for i in (0..d).rev() {
        let mut sum = b[i];
        for k in i + 1..d {
            sum -= l[[k, i]] * x[k];
        }
        x[i] = sum / l[[i, i]];
    }
    x
}

/// Laplace approximation: Gaussian centered at the MAP with covariance the
/// inverse Hessian of the negative log posterior. Isotropic prior only
/// (the Hessian is not defined elsewhere in this crate).
pub fn laplace_fit(
    spec: &ModelSpec,
    features: ArrayView2<'_, f64>,
    labels: &[u8],
    optimizer: &LbfgsConfig,
) -> Result<GaussianPosterior> {
    let map = crate::point::optimize_point_params(spec, features, labels, true, optimizer, None)?;
    let hessian = spec.hessian_neg_log_posterior(features, labels, map.params.view())?;
    let (l_h, _jitter) = cholesky_with_jitter(hessian.view())?;
    // Sigma = H^{-1}, built column by column from Cholesky solves, then
    // refactored so the posterior carries a factor of Sigma itself.
    let d = spec.param_dim();
    let mut cov = Array2::zeros((d, d));
    let mut unit = Array1::zeros(d);
    for j in 0..d {
        unit[j] = 1.0;
        let y = forward_solve(l_h.view(), unit.view());
        let col = backward_solve(l_h.view(), y.view());
        cov.column_mut(j).assign(&col);
        unit[j] = 0.0;
    }
    // Symmetrize before factoring to clear solve round-off.
    let cov_t = cov.t().to_owned();
    cov.zip_mut_with(&cov_t, |a, &b| *a = 0.5 * (*a + b));
    let (l_cov, _) = cholesky_with_jitter(cov.view())?;
    GaussianPosterior::new(map.params, l_cov)
}

/// Anything SVI can fit a Gaussian to: a stochastic full-data log
/// likelihood with parameter-space gradients, plus a centered diagonal
/// Gaussian prior.
pub trait SviTarget {
    fn param_dim(&self) -> usize;
    /// Unbiased estimate of the full-data log likelihood and its gradient.
    fn loglik_estimate(
        &self,
        theta: ArrayView1<'_, f64>,
        rng: &mut ChaCha12Rng,
    ) -> Result<(f64, Array1<f64>)>;
    /// Standard deviations of the zero-mean diagonal Gaussian prior.
    fn prior_std(&self) -> Array1<f64>;
}

/// The crate's model as an SVI target: minibatched likelihood (sampled
/// with replacement, scaled to the full dataset) over the isotropic or
/// non-centered scale-hierarchical family.
pub struct ModelSviTarget<'a> {
    spec: &'a ModelSpec,
    features: ArrayView2<'a, f64>,
    labels: &'a [u8],
    batch_size: usize,
}

impl<'a> ModelSviTarget<'a> {
    pub fn new(
        spec: &'a ModelSpec,
        features: ArrayView2<'a, f64>,
        labels: &'a [u8],
        batch_size: usize,
    ) -> Result<Self> {
        if matches!(spec.prior, PriorFamily::MeanHierarchical { .. }) {
            return Err(Error::UnsupportedModel(
                "variational inference is implemented for the isotropic and \
                 scale-hierarchical priors only"
                    .into(),
            ));
        }
        if batch_size == 0 {
            return Err(Error::Config("svi batch size must be positive".into()));
        }
        Ok(ModelSviTarget {
            spec,
            features,
            labels,
            batch_size,
        })
    }
}

impl SviTarget for ModelSviTarget<'_> {
    fn param_dim(&self) -> usize {
        self.spec.param_dim()
    }

    fn loglik_estimate(
        &self,
        theta: ArrayView1<'_, f64>,
        rng: &mut ChaCha12Rng,
    ) -> Result<(f64, Array1<f64>)> {
        let n = self.labels.len();
        if n == 0 {
            return Ok((0.0, Array1::zeros(self.param_dim())));
        }
        if self.batch_size >= n {
            return self.spec.log_likelihood_with_grad(self.features, self.labels, theta);
        }
        let mut batch_features = Array2::zeros((self.batch_size, self.features.ncols()));
        let mut batch_labels = vec![0u8; self.batch_size];
        for (i, label) in batch_labels.iter_mut().enumerate() {
            let idx = rng.random_range(0..n);
            batch_features.row_mut(i).assign(&self.features.row(idx));
            *label = self.labels[idx];
        }
        let (value, grad) =
            self.spec
                .log_likelihood_with_grad(batch_features.view(), &batch_labels, theta)?;
        let scale = n as f64 / self.batch_size as f64;
        Ok((scale * value, grad * scale))
    }

    fn prior_std(&self) -> Array1<f64> {
        match self.spec.prior {
            PriorFamily::Isotropic { sigma_w } => Array1::from_elem(self.spec.dim, sigma_w),
            PriorFamily::ScaleHierarchical { sigma_v } => {
                let mut std = Array1::ones(self.spec.dim + 1);
                std[self.spec.dim] = sigma_v;
                std
            }
            PriorFamily::MeanHierarchical { .. } => {
                unreachable!("rejected at construction")
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SviConfig {
    pub n_iters: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Reparameterization draws averaged per step.
    pub mc_samples: usize,
    pub clip_norm: f64,
    /// Initial value of every diagonal entry of the factor L.
    pub init_l_scale: f64,
}

impl Default for SviConfig {
    fn default() -> Self {
        SviConfig {
            n_iters: 50_000,
            batch_size: 100,
            learning_rate: 0.01,
            momentum: 0.98,
            mc_samples: 1,
            clip_norm: 1e3,
            init_l_scale: 0.1,
        }
    }
}

impl SviConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iters == 0 || self.mc_samples == 0 {
            return Err(Error::Config(
                "svi needs n_iters >= 1 and mc_samples >= 1".into(),
            ));
        }
        if !(self.init_l_scale > 0.0) {
            return Err(Error::Config("svi init_l_scale must be positive".into()));
        }
        Ok(())
    }
}

/// Flat layout of the variational parameters: the mean, then rows of the
/// lower triangle of L with diagonal entries stored as logarithms.
fn packed_len(d: usize) -> usize {
    d + d * (d + 1) / 2
}

fn l_entry_index(d: usize, j: usize, k: usize) -> usize {
    d + j * (j + 1) / 2 + k
}

fn unpack_factor(flat: ArrayView1<'_, f64>, d: usize) -> Array2<f64> {
    let mut l = Array2::zeros((d, d));
    for j in 0..d {
        for k in 0..=j {
            let raw = flat[l_entry_index(d, j, k)];
            l[[j, k]] = if j == k { raw.exp() } else { raw };
        }
    }
    l
}

fn pack_initial(mean: ArrayView1<'_, f64>, init_l_scale: f64) -> Array1<f64> {
    let d = mean.len();
    let mut flat = Array1::zeros(packed_len(d));
    flat.slice_mut(s![..d]).assign(&mean);
    for j in 0..d {
        flat[l_entry_index(d, j, j)] = init_l_scale.ln();
    }
    flat
}

/// KL(q || p) between q = N(m, L L^T) and the centered diagonal Gaussian
/// with standard deviations `prior_std`, in closed form.
pub fn kl_to_diagonal_gaussian(
    mean: ArrayView1<'_, f64>,
    chol_cov: ArrayView2<'_, f64>,
    prior_std: ArrayView1<'_, f64>,
) -> f64 {
    let d = mean.len();
    let mut kl = -0.5 * d as f64;
    for j in 0..d {
        let var_j: f64 = (0..=j).map(|k| chol_cov[[j, k]] * chol_cov[[j, k]]).sum();
        let s2 = prior_std[j] * prior_std[j];
        kl += 0.5 * ((var_j + mean[j] * mean[j]) / s2 + s2.ln()) - chol_cov[[j, j]].ln();
    }
    kl
}

/// Negative ELBO and its gradient in the packed parameterization
/// `[mean (d), lower factor rows with log-stored diagonal (d(d+1)/2)]`,
/// using the provided reparameterization draws (one vector each). Public
/// so gradient checks can finite-difference it with frozen draws.
pub fn negative_elbo_with_grad<T: SviTarget>(
    flat: ArrayView1<'_, f64>,
    target: &T,
    eps_draws: &[Array1<f64>],
    mask: Option<&[bool]>,
    batch_rng: &mut ChaCha12Rng,
) -> Result<(f64, Array1<f64>)> {
    let d = target.param_dim();
    let mean = flat.slice(s![..d]);
    let l = unpack_factor(flat, d);
    let prior_std = target.prior_std();

    let mut ll_mean = 0.0;
    let mut grad_mean = Array1::zeros(d);
    let mut grad_l = Array2::<f64>::zeros((d, d));
    let k = eps_draws.len() as f64;
    for eps in eps_draws {
        let theta = &mean + &l.dot(eps);
        let (ll, g) = target.loglik_estimate(theta.view(), batch_rng)?;
        ll_mean += ll / k;
        grad_mean.scaled_add(1.0 / k, &g);
        // d theta / d L[j,k] routes gradient g_j to entry (j, k) times eps_k.
        for j in 0..d {
            for kk in 0..=j {
                grad_l[[j, kk]] += g[j] * eps[kk] / k;
            }
        }
    }

    let kl = kl_to_diagonal_gaussian(mean, l.view(), prior_std.view());
    let value = kl - ll_mean;

    // Gradient of the negative ELBO = grad KL - grad E[loglik].
    let mut grad = Array1::zeros(flat.len());
    for j in 0..d {
        grad[j] = mean[j] / (prior_std[j] * prior_std[j]) - grad_mean[j];
    }
    for j in 0..d {
        let s2 = prior_std[j] * prior_std[j];
        for kk in 0..=j {
            let mut g = l[[j, kk]] / s2 - grad_l[[j, kk]];
            if j == kk {
                g -= 1.0 / l[[j, j]];
                g *= l[[j, j]]; // chain rule through the log-diagonal storage
            }
            grad[l_entry_index(d, j, kk)] = g;
        }
    }
    if let Some(mask) = mask {
        for (g, &keep) in grad.iter_mut().zip(mask) {
            if !keep {
                *g = 0.0;
            }
        }
    }
    Ok((value, grad))
}

/// Entries of the packed vector that are free to move. The block-diagonal
/// structure of the scale-hierarchical posterior (q(z) independent of
/// q(v)) is imposed by freezing the v row of L off the diagonal.
fn structure_mask(spec: &ModelSpec) -> Option<Vec<bool>> {
    match spec.prior {
        PriorFamily::ScaleHierarchical { .. } => {
            let d = spec.param_dim();
            let mut mask = vec![true; packed_len(d)];
            let v_row = d - 1;
            for k in 0..v_row {
                mask[l_entry_index(d, v_row, k)] = false;
            }
            Some(mask)
        }
        _ => None,
    }
}

/// Fit a Gaussian variational posterior by reparameterized stochastic
/// gradient ascent on the ELBO, initialized at the MAP mean. Supports the
/// isotropic prior (full covariance) and the scale-hierarchical prior
/// (full covariance over z, independent scalar v).
pub fn svi_fit(
    spec: &ModelSpec,
    features: ArrayView2<'_, f64>,
    labels: &[u8],
    config: &SviConfig,
    optimizer: &LbfgsConfig,
    seed: u64,
) -> Result<GaussianPosterior> {
    config.validate()?;
    let target = ModelSviTarget::new(spec, features, labels, config.batch_size)?;
    let map = crate::point::optimize_point_params(spec, features, labels, true, optimizer, None)?;
    let mut flat = pack_initial(map.params.view(), config.init_l_scale);
    let mask = structure_mask(spec);

    let d = spec.param_dim();
    let mut sgd = MomentumSgd::new(
        flat.len(),
        config.learning_rate,
        config.momentum,
        config.clip_norm,
    )?;
    let mut eps_rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, "svi/eps", 0));
    let mut batch_rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, "svi/batch", 0));
    let mut eps_draws = vec![Array1::zeros(d); config.mc_samples];
    for step in 0..config.n_iters {
        for eps in eps_draws.iter_mut() {
            for e in eps.iter_mut() {
                *e = eps_rng.sample(StandardNormal);
            }
        }
        let (value, grad) = negative_elbo_with_grad(
            flat.view(),
            &target,
            &eps_draws,
            mask.as_deref(),
            &mut batch_rng,
        )?;
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence {
                reason: "non-finite variational objective".into(),
                step,
            });
        }
        sgd.step(&mut flat, grad.view());
    }

    let mean = flat.slice(s![..d]).to_owned();
    let l = unpack_factor(flat.view(), d);
    GaussianPosterior::new(mean, l)
}

/// Monte-Carlo ELBO of a Gaussian posterior on the full dataset:
/// mean of log p(y | theta) + log p(theta) - log q(theta) over draws from
/// q. Returns the estimate and its standard error.
pub fn elbo_estimate(
    spec: &ModelSpec,
    features: ArrayView2<'_, f64>,
    labels: &[u8],
    q: &GaussianPosterior,
    n_mc: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if n_mc == 0 {
        return Err(Error::Config("elbo estimate needs n_mc >= 1".into()));
    }
    if q.dim() != spec.param_dim() {
        return Err(Error::DimensionMismatch(format!(
            "distribution over {} parameters, model needs {}",
            q.dim(),
            spec.param_dim()
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, "elbo/mc", 0));
    let params = q.sample_params(n_mc, &mut rng);
    let mut terms = Vec::with_capacity(n_mc);
    for row in params.rows() {
        let joint = spec.log_posterior_unnorm(features, labels, row)?;
        terms.push(joint - q.log_density(row)?);
    }
    let mean = terms.iter().sum::<f64>() / n_mc as f64;
    let var = terms.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>()
        / (n_mc.max(2) - 1) as f64;
    Ok((mean, (var / n_mc as f64).sqrt()))
}

/// Log density of the predictive weights induced by a scale-hierarchical
/// Gaussian posterior: w = exp(v/2) z with independent blocks, so
/// p(w) = Int N(w; exp(v/2) m_z, exp(v) Sigma_z) q(v) dv, integrated over
/// v by quadrature.
pub fn log_weight_density_scale_hier(
    spec: &ModelSpec,
    q: &GaussianPosterior,
    w: ArrayView1<'_, f64>,
) -> Result<f64> {
    if !matches!(spec.prior, PriorFamily::ScaleHierarchical { .. }) {
        return Err(Error::UnsupportedModel(
            "weight-space density via v-quadrature applies to the \
             scale-hierarchical family"
                .into(),
        ));
    }
    let d = spec.dim;
    if q.dim() != d + 1 || w.len() != d {
        return Err(Error::DimensionMismatch(
            "posterior/weight dimensions do not match the model".into(),
        ));
    }
    let m_z = q.mean.slice(s![..d]);
    let l_z = q.chol_cov.slice(s![..d, ..d]);
    let m_v = q.mean[d];
    let s_v = q.chol_cov[[d, d]];
    let log_det_half: f64 = (0..d).map(|j| l_z[[j, j]].ln()).sum();
    let two_pi_term = 0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln();

    // Conditional on v: w | v ~ N(exp(v/2) m_z, exp(v) Sigma_z).
    let log_cond = |v: f64| -> f64 {
        let half = (0.5 * v).exp();
        let centered: Array1<f64> = w
            .iter()
            .zip(m_z.iter())
            .map(|(&wi, &mi)| wi / half - mi)
            .collect();
        let z = forward_solve(l_z, centered.view());
        // Jacobian of the standardization: det(exp(v/2) L_z) adds d*v/2.
        -0.5 * z.dot(&z) - log_det_half - two_pi_term - 0.5 * d as f64 * v
    };
    let log_v_pdf = |v: f64| crate::math::log_normal_pdf(v, m_v, s_v);

    // Midpoint quadrature over +-10 posterior standard deviations of v.
    let (lo, hi) = (m_v - 10.0 * s_v, m_v + 10.0 * s_v);
    let n = 4000;
    let step = (hi - lo) / n as f64;
    let mut terms = Vec::with_capacity(n);
    for i in 0..n {
        let v = lo + (i as f64 + 0.5) * step;
        terms.push(log_cond(v) + log_v_pdf(v));
    }
    Ok(log_sum_exp(&terms) + step.ln())
}
