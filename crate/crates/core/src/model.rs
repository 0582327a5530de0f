//! Bayesian logistic regression model on squared features: priors,
//! likelihood, gradients, Hessian, and weight ensembles with averaged
//! predictive probabilities.

use crate::error::{Error, Result};
use crate::math::{log_normal_pdf, log_sigmoid, sigmoid};
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Prior over the regression weights. All three families share the same
/// likelihood; they differ in parameterization and in the extra latent
/// coordinates appended after the weight block.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PriorFamily {
    /// w_i ~ N(0, sigma_w^2), parameters are the weights themselves.
    Isotropic { sigma_w: f64 },
    /// Non-centered scale mixture: w = exp(v/2) z with z_i ~ N(0, 1) and a
    /// scalar log-variance v ~ N(0, sigma_v^2). Parameters are [z, v].
    ScaleHierarchical { sigma_v: f64 },
    /// w_i ~ N(mu, sigma_w^2) with a shared scalar mean mu ~ N(0,
    /// sigma_mu^2). Parameters are [w, mu].
    MeanHierarchical { sigma_w: f64, sigma_mu: f64 },
}

impl PriorFamily {
    pub fn isotropic_default() -> Self {
        PriorFamily::Isotropic { sigma_w: 100.0 }
    }

    pub fn scale_hierarchical_default() -> Self {
        PriorFamily::ScaleHierarchical { sigma_v: 100.0 }
    }

    pub fn mean_hierarchical_default() -> Self {
        PriorFamily::MeanHierarchical {
            sigma_w: 100.0,
            sigma_mu: 100.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PriorFamily::Isotropic { .. } => "isotropic",
            PriorFamily::ScaleHierarchical { .. } => "scale_hierarchical",
            PriorFamily::MeanHierarchical { .. } => "mean_hierarchical",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |s: f64| s.is_finite() && s > 0.0;
        let valid = match self {
            PriorFamily::Isotropic { sigma_w } => ok(*sigma_w),
            PriorFamily::ScaleHierarchical { sigma_v } => ok(*sigma_v),
            PriorFamily::MeanHierarchical { sigma_w, sigma_mu } => ok(*sigma_w) && ok(*sigma_mu),
        };
        if valid {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "prior scales must be positive and finite: {self:?}"
            )))
        }
    }
}

/// Model: a feature dimension plus a prior family. The likelihood is
/// Bernoulli with P(y=1 | x, w) = sigmoid(w . phi(x)) on normalized squared
/// features; there is no bias term.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelSpec {
    pub dim: usize,
    pub prior: PriorFamily,
}

impl ModelSpec {
    pub fn new(dim: usize, prior: PriorFamily) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("model dim must be positive".into()));
        }
        prior.validate()?;
        Ok(ModelSpec { dim, prior })
    }

    /// Length of the parameter vector: D for the isotropic prior, D + 1 for
    /// both hierarchical families (one extra scalar latent).
    pub fn param_dim(&self) -> usize {
        match self.prior {
            PriorFamily::Isotropic { .. } => self.dim,
            PriorFamily::ScaleHierarchical { .. } | PriorFamily::MeanHierarchical { .. } => {
                self.dim + 1
            }
        }
    }

    fn check_params(&self, params: ArrayView1<'_, f64>) -> Result<()> {
        if params.len() != self.param_dim() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} parameters for {} prior at dim {}, got {}",
                self.param_dim(),
                self.prior.name(),
                self.dim,
                params.len()
            )));
        }
        Ok(())
    }

    /// Map a parameter vector to predictive weights. Latent coordinates
    /// (the log-variance v, the shared mean mu) do not enter prediction.
    pub fn to_weights(&self, params: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        self.check_params(params)?;
        Ok(match self.prior {
            PriorFamily::Isotropic { .. } => params.to_owned(),
            PriorFamily::ScaleHierarchical { .. } => {
                let v = params[self.dim];
                let scale = (0.5 * v).exp();
                params.slice(s![..self.dim]).mapv(|z| scale * z)
            }
            PriorFamily::MeanHierarchical { .. } => params.slice(s![..self.dim]).to_owned(),
        })
    }

    /// Log prior density of a parameter vector (including constants).
    pub fn log_prior(&self, params: ArrayView1<'_, f64>) -> Result<f64> {
        self.check_params(params)?;
        Ok(match self.prior {
            PriorFamily::Isotropic { sigma_w } => params
                .iter()
                .map(|&w| log_normal_pdf(w, 0.0, sigma_w))
                .sum(),
            PriorFamily::ScaleHierarchical { sigma_v } => {
                let z_term: f64 = params
                    .slice(s![..self.dim])
                    .iter()
                    .map(|&z| log_normal_pdf(z, 0.0, 1.0))
                    .sum();
                z_term + log_normal_pdf(params[self.dim], 0.0, sigma_v)
            }
            PriorFamily::MeanHierarchical { sigma_w, sigma_mu } => {
                let mu = params[self.dim];
                let w_term: f64 = params
                    .slice(s![..self.dim])
                    .iter()
                    .map(|&w| log_normal_pdf(w, mu, sigma_w))
                    .sum();
                w_term + log_normal_pdf(mu, 0.0, sigma_mu)
            }
        })
    }

    /// Gradient of the log prior with respect to the parameters.
    pub fn grad_log_prior(&self, params: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        self.check_params(params)?;
        let mut grad = Array1::zeros(params.len());
        match self.prior {
            PriorFamily::Isotropic { sigma_w } => {
                let inv_var = 1.0 / (sigma_w * sigma_w);
                for (g, &w) in grad.iter_mut().zip(params.iter()) {
                    *g = -w * inv_var;
                }
            }
            PriorFamily::ScaleHierarchical { sigma_v } => {
                for j in 0..self.dim {
                    grad[j] = -params[j];
                }
                grad[self.dim] = -params[self.dim] / (sigma_v * sigma_v);
            }
            PriorFamily::MeanHierarchical { sigma_w, sigma_mu } => {
                let mu = params[self.dim];
                let inv_var = 1.0 / (sigma_w * sigma_w);
                let mut mu_grad = -mu / (sigma_mu * sigma_mu);
                for j in 0..self.dim {
                    let centered = params[j] - mu;
                    grad[j] = -centered * inv_var;
                    mu_grad += centered * inv_var;
                }
                grad[self.dim] = mu_grad;
            }
        }
        Ok(grad)
    }

    /// Unnormalized log posterior: log likelihood at the induced weights
    /// plus the log prior over the parameters.
    pub fn log_posterior_unnorm(
        &self,
        features: ArrayView2<'_, f64>,
        labels: &[u8],
        params: ArrayView1<'_, f64>,
    ) -> Result<f64> {
        let weights = self.to_weights(params)?;
        let ll = log_likelihood(features, labels, weights.view())?;
        Ok(ll + self.log_prior(params)?)
    }

    /// Log likelihood and its gradient with respect to the parameters
    /// (likelihood term only, no prior).
    pub fn log_likelihood_with_grad(
        &self,
        features: ArrayView2<'_, f64>,
        labels: &[u8],
        params: ArrayView1<'_, f64>,
    ) -> Result<(f64, Array1<f64>)> {
        self.check_params(params)?;
        check_data(features, labels, self.dim)?;
        let weights = self.to_weights(params)?;
        // dl/dw = Phi^T (y - sigmoid(a)); shared by all families via the
        // chain rule through their weight maps.
        let activations = features.dot(&weights);
        let value = log_likelihood_from_activations(activations.view(), labels);
        let residual: Array1<f64> = activations
            .iter()
            .zip(labels)
            .map(|(&a, &y)| f64::from(y) - sigmoid(a))
            .collect();
        let weight_grad = features.t().dot(&residual);

        let mut grad = Array1::zeros(self.param_dim());
        match self.prior {
            PriorFamily::Isotropic { .. } => {
                grad.assign(&weight_grad);
            }
            PriorFamily::ScaleHierarchical { .. } => {
                let v = params[self.dim];
                let scale = (0.5 * v).exp();
                let z = params.slice(s![..self.dim]);
                for j in 0..self.dim {
                    grad[j] = scale * weight_grad[j];
                }
                grad[self.dim] = 0.5 * scale * z.dot(&weight_grad);
            }
            PriorFamily::MeanHierarchical { .. } => {
                grad.slice_mut(s![..self.dim]).assign(&weight_grad);
                // mu does not enter the likelihood.
            }
        }
        Ok((value, grad))
    }

    /// Gradient of the unnormalized log posterior with respect to the
    /// parameters (ascent direction).
    pub fn grad_log_posterior(
        &self,
        features: ArrayView2<'_, f64>,
        labels: &[u8],
        params: ArrayView1<'_, f64>,
    ) -> Result<Array1<f64>> {
        let (_, ll_grad) = self.log_likelihood_with_grad(features, labels, params)?;
        let mut grad = self.grad_log_prior(params)?;
        grad += &ll_grad;
        Ok(grad)
    }

    /// Hessian of the NEGATIVE log posterior for the isotropic prior:
    /// Phi^T S Phi + I / sigma_w^2 with S = diag(sigmoid(a) sigmoid(-a)).
    /// The hierarchical families are rejected; their curvature is not
    /// needed anywhere in the pipeline.
    pub fn hessian_neg_log_posterior(
        &self,
        features: ArrayView2<'_, f64>,
        labels: &[u8],
        params: ArrayView1<'_, f64>,
    ) -> Result<Array2<f64>> {
        let PriorFamily::Isotropic { sigma_w } = self.prior else {
            return Err(Error::UnsupportedModel(format!(
                "Hessian is only available for the isotropic prior, not {}",
                self.prior.name()
            )));
        };
        self.check_params(params)?;
        check_data(features, labels, self.dim)?;
        let activations = features.dot(&params);
        // sigmoid(a) * sigmoid(-a) keeps a subnormal-but-nonzero weight in
        // the saturated tails where the naive p*(1-p) underflows to zero.
        let mut scaled = features.to_owned();
        for (mut row, &a) in scaled.rows_mut().into_iter().zip(activations.iter()) {
            let root = (sigmoid(a) * sigmoid(-a)).sqrt();
            row.mapv_inplace(|v| v * root);
        }
        let mut hessian = scaled.t().dot(&scaled);
        let inv_var = 1.0 / (sigma_w * sigma_w);
        for j in 0..self.dim {
            hessian[[j, j]] += inv_var;
        }
        Ok(hessian)
    }
}

fn check_data(features: ArrayView2<'_, f64>, labels: &[u8], dim: usize) -> Result<()> {
    if features.ncols() != dim {
        return Err(Error::DimensionMismatch(format!(
            "features have {} columns, model dim is {dim}",
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
    Ok(())
}

/// Bernoulli log likelihood from precomputed activations a = Phi w, using
/// only softplus so saturated activations stay finite.
pub fn log_likelihood_from_activations(activations: ArrayView1<'_, f64>, labels: &[u8]) -> f64 {
    activations
        .iter()
        .zip(labels)
        .map(|(&a, &y)| if y == 1 { log_sigmoid(a) } else { log_sigmoid(-a) })
        .sum()
}

/// Bernoulli log likelihood of labels under weights on the given
/// (normalized) feature rows.
pub fn log_likelihood(
    features: ArrayView2<'_, f64>,
    labels: &[u8],
    weights: ArrayView1<'_, f64>,
) -> Result<f64> {
    check_data(features, labels, weights.len())?;
    let activations = features.dot(&weights);
    Ok(log_likelihood_from_activations(activations.view(), labels))
}

/// A set of predictive weight vectors treated as an equally-weighted
/// ensemble: point estimates have one row, posterior samples many.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightEnsemble {
    /// M x D, one member per row.
    pub weights: Array2<f64>,
    /// Which procedure produced the ensemble (free-form, e.g. "map").
    pub source: String,
    /// Master seed the producing run was keyed by.
    pub seed: u64,
}

/// Rows of the predictive feature matrix processed per chunk, bounding the
/// n x M activation buffer at about 32 MB for M = 1000.
const PREDICT_CHUNK_ROWS: usize = 4096;

impl WeightEnsemble {
    pub fn new(weights: Array2<f64>, source: impl Into<String>, seed: u64) -> Result<Self> {
        if weights.nrows() == 0 || weights.ncols() == 0 {
            return Err(Error::InvalidState("empty weight ensemble".into()));
        }
        if weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidState(
                "weight ensemble contains non-finite entries".into(),
            ));
        }
        Ok(WeightEnsemble {
            weights,
            source: source.into(),
            seed,
        })
    }

    pub fn from_single(weights: Array1<f64>, source: impl Into<String>, seed: u64) -> Result<Self> {
        let dim = weights.len();
        Self::new(weights.into_shape_with_order((1, dim)).expect("1 x D"), source, seed)
    }

    pub fn n_members(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    /// Posterior predictive probability of class 1 for each feature row:
    /// the ensemble average of sigmoid(w_m . phi). Results are clamped to
    /// the open interval (0, 1) so downstream log-odds stay finite.
    pub fn predict(&self, features: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        if features.ncols() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "features have {} columns, ensemble dim is {}",
                features.ncols(),
                self.dim()
            )));
        }
        let n = features.nrows();
        let m = self.n_members() as f64;
        let mut out = Array1::zeros(n);
        let weights_t = self.weights.t();
        let mut start = 0;
        while start < n {
            let stop = (start + PREDICT_CHUNK_ROWS).min(n);
            let chunk = features.slice(s![start..stop, ..]);
            let activations = chunk.dot(&weights_t);
            for (i, row) in activations.axis_iter(Axis(0)).enumerate() {
                let mean = row.iter().map(|&a| sigmoid(a)).sum::<f64>() / m;
                out[start + i] = clamp_open_unit(mean);
            }
            start = stop;
        }
        Ok(out)
    }

    /// Activations of every member on the given rows (n x M). Used by the
    /// attack, which needs per-member quantities rather than the average.
    pub fn activations(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if features.ncols() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "features have {} columns, ensemble dim is {}",
                features.ncols(),
                self.dim()
            )));
        }
        Ok(features.dot(&self.weights.t()))
    }

    fn meta_path(stem: &Path) -> PathBuf {
        stem.with_extension("meta.toml")
    }

    fn csv_path(stem: &Path) -> PathBuf {
        stem.with_extension("csv")
    }

    /// Write `{stem}.csv` (one member per row) and `{stem}.meta.toml`.
    /// Floats are printed in shortest-roundtrip form, so load() restores
    /// them bit for bit.
    pub fn save(&self, stem: &Path) -> Result<()> {
        let csv_path = Self::csv_path(stem);
        let mut s = String::new();
        for row in self.weights.rows() {
            let mut first = true;
            for v in row.iter() {
                if !first {
                    s.push(',');
                }
                let _ = write!(s, "{v}");
                first = false;
            }
            s.push('\n');
        }
        std::fs::write(&csv_path, s).map_err(|e| Error::io(csv_path.display().to_string(), e))?;

        let meta = EnsembleMeta {
            source: self.source.clone(),
            seed: self.seed,
            n_members: self.n_members(),
            dim: self.dim(),
        };
        let meta_path = Self::meta_path(stem);
        let text = toml::to_string(&meta)
            .map_err(|e| Error::parse(meta_path.display().to_string(), e.to_string()))?;
        std::fs::write(&meta_path, text).map_err(|e| Error::io(meta_path.display().to_string(), e))
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let meta_path = Self::meta_path(stem);
        let meta_text = std::fs::read_to_string(&meta_path)
            .map_err(|e| Error::io(meta_path.display().to_string(), e))?;
        let meta: EnsembleMeta = toml::from_str(&meta_text)
            .map_err(|e| Error::parse(meta_path.display().to_string(), e.to_string()))?;

        let csv_path = Self::csv_path(stem);
        let text = std::fs::read_to_string(&csv_path)
            .map_err(|e| Error::io(csv_path.display().to_string(), e))?;
        let mut weights = Array2::zeros((meta.n_members, meta.dim));
        let mut rows = 0usize;
        for (i, line) in text.lines().filter(|l| !l.is_empty()).enumerate() {
            if i >= meta.n_members {
                return Err(Error::parse(
                    csv_path.display().to_string(),
                    "more rows than the metadata declares",
                ));
            }
            let mut cols = 0usize;
            for (j, tok) in line.split(',').enumerate() {
                if j >= meta.dim {
                    return Err(Error::parse(
                        csv_path.display().to_string(),
                        format!("row {i} has more than {} columns", meta.dim),
                    ));
                }
                weights[[i, j]] = tok.trim().parse::<f64>().map_err(|_| {
                    Error::parse(csv_path.display().to_string(), format!("bad float {tok:?}"))
                })?;
                cols += 1;
            }
            if cols != meta.dim {
                return Err(Error::parse(
                    csv_path.display().to_string(),
                    format!("row {i} has {cols} columns, expected {}", meta.dim),
                ));
            }
            rows += 1;
        }
        if rows != meta.n_members {
            return Err(Error::parse(
                csv_path.display().to_string(),
                format!("{rows} rows, metadata declares {}", meta.n_members),
            ));
        }
        WeightEnsemble::new(weights, meta.source, meta.seed)
    }
}

#[derive(serde::Serialize, serde::Deserialize)]
struct EnsembleMeta {
    source: String,
    seed: u64,
    n_members: usize,
    dim: usize,
}

/// Clamp a probability into the largest open sub-interval of (0, 1)
/// representable in f64.
pub fn clamp_open_unit(p: f64) -> f64 {
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}
