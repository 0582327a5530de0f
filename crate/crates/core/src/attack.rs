//! Projected-gradient attack constrained to a sphere: perturb an input
//! along its own sphere (so the true label never changes) to maximize the
//! ensemble's probability of the wrong class.
//!
//! Two objectives drive the search. The surrogate sums per-member log
//! target probabilities (a Jensen lower bound whose gradient stays alive
//! when members saturate); the true objective is the log of the
//! ensemble-averaged target probability, the quantity actually reported.
//! Multi-member attacks warm up on the surrogate and finish on the true
//! objective; single-member attacks use the surrogate throughout, where
//! the two coincide.

use crate::data::{feature_map_matrix, sample_sphere, FeatureNormalizer};
use crate::error::{Error, Result};
use crate::math::{derive_seed, log_sigmoid, log_sum_exp, sigmoid, stable_norm};
use crate::model::WeightEnsemble;
use ndarray::{Array1, Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct AttackConfig {
    /// Gradient-ascent step size before projection.
    pub step_size: f64,
    /// Hard cap on iterations per restart.
    pub max_iters: usize,
    /// Iterations spent on the surrogate objective before switching to the
    /// true objective (multi-member ensembles only).
    pub surrogate_iters: usize,
    /// Independent random starting points.
    pub restarts: usize,
    /// Stop a restart after this many consecutive iterations without
    /// sufficient improvement.
    pub patience: usize,
    /// Minimum log-probability gain that counts as improvement.
    pub improve_tol: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            step_size: 0.01,
            max_iters: 10_000,
            surrogate_iters: 300,
            restarts: 100,
            patience: 10,
            improve_tol: 1e-4,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::Config(format!(
                "attack step size must be positive, got {}",
                self.step_size
            )));
        }
        if self.max_iters == 0 || self.restarts == 0 || self.patience == 0 {
            return Err(Error::Config(
                "attack needs max_iters, restarts and patience >= 1".into(),
            ));
        }
        Ok(())
    }

    /// The step size used for ensembles of posterior samples; point
    /// estimates and small ensembles keep the default.
    pub const SAMPLED_ENSEMBLE_STEP: f64 = 1e-4;
}

/// Radial projection onto the sphere of the given radius. Fails on the
/// zero vector and non-finite input, where the projection is undefined.
pub fn project_to_sphere(x: ArrayView1<'_, f64>, radius: f64) -> Result<Array1<f64>> {
    let norm = stable_norm(x);
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ProjectionUndefined);
    }
    let scale = radius / norm;
    Ok(x.mapv(|v| v * scale))
}

/// How a restart ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RestartTermination {
    /// Best objective stalled for `patience` consecutive iterations.
    Patience,
    /// Iteration budget exhausted.
    MaxIters,
    /// Cut short by a non-finite gradient or an undefined projection; the
    /// best-so-far point still counts.
    Aborted,
}

impl std::fmt::Display for RestartTermination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RestartTermination::Patience => "patience",
            RestartTermination::MaxIters => "max_iters",
            RestartTermination::Aborted => "aborted",
        })
    }
}

/// One restart's outcome.
#[derive(Debug, Clone)]
pub struct RestartSummary {
    pub index: usize,
    /// Best ensemble target probability the restart reached.
    pub target_prob: f64,
    pub iters: usize,
    pub termination: RestartTermination,
}

#[derive(Debug, Clone)]
pub struct AttackResult {
    /// Input-space point on the attacked sphere with the highest ensemble
    /// target probability across restarts.
    pub point: Array1<f64>,
    /// Ensemble probability of the target label at `point`.
    pub target_prob: f64,
    /// Label of the sphere the attack points live on.
    pub source_label: u8,
    /// Label whose probability was maximized (1 - source_label).
    pub target_label: u8,
    pub per_restart: Vec<RestartSummary>,
    /// Row r holds restart r's best point; together these are the
    /// adversarial candidates the transferability protocol re-evaluates.
    pub restart_points: Array2<f64>,
}

impl AttackResult {
    pub fn n_aborted(&self) -> usize {
        self.per_restart
            .iter()
            .filter(|r| r.termination == RestartTermination::Aborted)
            .count()
    }

    /// Per-restart summary CSV: restart,target_prob,iters,termination.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut s = String::from("restart,target_prob,iters,termination\n");
        for r in &self.per_restart {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                r.index, r.target_prob, r.iters, r.termination
            );
        }
        std::fs::write(path, s).map_err(|e| Error::io(path.display().to_string(), e))
    }

    /// Best point as a coordinate CSV: index,value.
    pub fn write_point_csv(&self, path: &Path) -> Result<()> {
        let mut s = String::from("index,value\n");
        for (i, v) in self.point.iter().enumerate() {
            let _ = writeln!(s, "{i},{v}");
        }
        std::fs::write(path, s).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

fn target_sign(target_label: u8) -> f64 {
    if target_label == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Normalized features of a single input point.
fn normalized_row(normalizer: &FeatureNormalizer, x: ArrayView1<'_, f64>) -> Array1<f64> {
    let phi = crate::data::feature_map(x);
    normalizer.normalize_row(phi.view())
}

/// Surrogate objective at one point: sum over members of the log target
/// probability, with its input-space gradient. The per-member gradient
/// coefficient s * sigmoid(-s a) stays nonzero even at |a| of hundreds,
/// where the naive sigmoid derivative underflows.
pub fn surrogate_value_and_grad(
    ensemble: &WeightEnsemble,
    normalizer: &FeatureNormalizer,
    x: ArrayView1<'_, f64>,
    target_label: u8,
) -> Result<(f64, Array1<f64>)> {
    let s = target_sign(target_label);
    let z = normalized_row(normalizer, x);
    let activations = ensemble.weights.dot(&z);
    let value: f64 = activations.iter().map(|&a| log_sigmoid(s * a)).sum();
    let coefs: Array1<f64> = activations.iter().map(|&a| s * sigmoid(-s * a)).collect();
    let grad_z = ensemble.weights.t().dot(&coefs);
    let grad = chain_rule_to_input(grad_z.view(), x, normalizer);
    Ok((value, grad))
}

/// True objective at one point: log of the ensemble-averaged target
/// probability, with its input-space gradient, both computed through a
/// max-shifted log-sum-exp.
pub fn true_value_and_grad(
    ensemble: &WeightEnsemble,
    normalizer: &FeatureNormalizer,
    x: ArrayView1<'_, f64>,
    target_label: u8,
) -> Result<(f64, Array1<f64>)> {
    let s = target_sign(target_label);
    let z = normalized_row(normalizer, x);
    let activations = ensemble.weights.dot(&z);
    let logs: Vec<f64> = activations.iter().map(|&a| log_sigmoid(s * a)).collect();
    let lse = log_sum_exp(&logs);
    let m = ensemble.n_members() as f64;
    let value = lse - m.ln();
    let coefs: Array1<f64> = activations
        .iter()
        .zip(&logs)
        .map(|(&a, &l)| s * (l - lse).exp() * sigmoid(-s * a))
        .collect();
    let grad_z = ensemble.weights.t().dot(&coefs);
    let grad = chain_rule_to_input(grad_z.view(), x, normalizer);
    Ok((value, grad))
}

/// Log of the ensemble-averaged target probability at a point.
pub fn target_log_prob(
    ensemble: &WeightEnsemble,
    normalizer: &FeatureNormalizer,
    x: ArrayView1<'_, f64>,
    target_label: u8,
) -> Result<f64> {
    let s = target_sign(target_label);
    let z = normalized_row(normalizer, x);
    let activations = ensemble.weights.dot(&z);
    let logs: Vec<f64> = activations.iter().map(|&a| log_sigmoid(s * a)).collect();
    Ok(log_sum_exp(&logs) - (ensemble.n_members() as f64).ln())
}

/// d objective / d x from d objective / d z: z_j = (x_j^2 - mean_j) / std_j
/// gives dz_j/dx_j = 2 x_j / std_j.
fn chain_rule_to_input(
    grad_z: ArrayView1<'_, f64>,
    x: ArrayView1<'_, f64>,
    normalizer: &FeatureNormalizer,
) -> Array1<f64> {
    let mut grad = grad_z.to_owned();
    for (j, g) in grad.iter_mut().enumerate() {
        *g *= 2.0 * x[j] / normalizer.stds[j];
    }
    grad
}

struct RestartState {
    x: Array1<f64>,
    best_x: Array1<f64>,
    best_log: f64,
    stale_iters: usize,
    iters: usize,
    active: bool,
    aborted: bool,
}

/// Run the projected-gradient attack: from `restarts` random points on the
/// sphere of `source_label`'s class (whose radius is given), maximize the
/// ensemble probability of the OTHER label while staying on the sphere —
/// so every candidate keeps its true label but draws the wrong prediction.
/// All active restarts advance in lock step so each iteration is a pair of
/// matrix products.
pub fn run_attack(
    ensemble: &WeightEnsemble,
    normalizer: &FeatureNormalizer,
    radius: f64,
    source_label: u8,
    config: &AttackConfig,
    seed: u64,
) -> Result<AttackResult> {
    config.validate()?;
    let dim = ensemble.dim();
    if normalizer.dim() != dim {
        return Err(Error::DimensionMismatch(format!(
            "normalizer dim {} vs ensemble dim {dim}",
            normalizer.dim()
        )));
    }
    if source_label > 1 {
        return Err(Error::Config(format!(
            "source label must be 0 or 1, got {source_label}"
        )));
    }
    let target_label = 1 - source_label;
    let s = target_sign(target_label);
    let m = ensemble.n_members();
    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, "attack/starts", 0));
    let starts = sample_sphere(dim, radius, config.restarts, &mut rng)?;

    let mut slots: Vec<RestartState> = starts
        .rows()
        .into_iter()
        .map(|row| RestartState {
            x: row.to_owned(),
            best_x: row.to_owned(),
            best_log: f64::NEG_INFINITY,
            stale_iters: 0,
            iters: 0,
            active: true,
            aborted: false,
        })
        .collect();

    let weights_t = ensemble.weights.t();
    for iter in 0..=config.max_iters {
        let active_idx: Vec<usize> = (0..slots.len()).filter(|&i| slots[i].active).collect();
        if active_idx.is_empty() {
            break;
        }
        // Batched evaluation at the current points of all active restarts.
        let mut points = Array2::zeros((active_idx.len(), dim));
        for (row, &i) in active_idx.iter().enumerate() {
            points.row_mut(row).assign(&slots[i].x);
        }
        let mut features = feature_map_matrix(points.view());
        normalizer.normalize_in_place(&mut features);
        let activations = features.dot(&weights_t); // R x M

        // Objective bookkeeping on the true (reported) objective.
        let mut log_rows = vec![0.0f64; m];
        for (row, &i) in active_idx.iter().enumerate() {
            for (dst, &a) in log_rows.iter_mut().zip(activations.row(row)) {
                *dst = log_sigmoid(s * a);
            }
            let log_prob = log_sum_exp(&log_rows) - (m as f64).ln();
            let slot = &mut slots[i];
            if log_prob > slot.best_log + config.improve_tol {
                slot.stale_iters = 0;
            } else {
                slot.stale_iters += 1;
            }
            if log_prob > slot.best_log {
                slot.best_log = log_prob;
                slot.best_x.assign(&slot.x);
            }
            slot.iters = iter;
            if slot.stale_iters >= config.patience || iter == config.max_iters {
                slot.active = false;
            }
        }
        if iter == config.max_iters {
            break;
        }

        // Gradient phase: the surrogate keeps every member's gradient alive
        // during warm-up; single-member ensembles stay on it (identical
        // objectives) so the phase switch is a no-op for them.
        let surrogate_phase = m == 1 || iter < config.surrogate_iters;
        let mut coefs = Array2::zeros((active_idx.len(), m));
        for (row, &i) in active_idx.iter().enumerate() {
            if !slots[i].active {
                continue;
            }
            let act_row = activations.row(row);
            let mut coef_row = coefs.row_mut(row);
            if surrogate_phase {
                for (c, &a) in coef_row.iter_mut().zip(act_row) {
                    *c = s * sigmoid(-s * a);
                }
            } else {
                for (dst, &a) in log_rows.iter_mut().zip(act_row) {
                    *dst = log_sigmoid(s * a);
                }
                let lse = log_sum_exp(&log_rows);
                for ((c, &a), &l) in coef_row.iter_mut().zip(act_row).zip(log_rows.iter()) {
                    *c = s * (l - lse).exp() * sigmoid(-s * a);
                }
            }
        }
        let grad_z = coefs.dot(&ensemble.weights); // R x D

        for (row, &i) in active_idx.iter().enumerate() {
            if !slots[i].active {
                continue;
            }
            let slot = &mut slots[i];
            let mut ok = true;
            for j in 0..dim {
                let g = grad_z[[row, j]] * 2.0 * slot.x[j] / normalizer.stds[j];
                if !g.is_finite() {
                    ok = false;
                    break;
                }
                slot.x[j] += config.step_size * g;
            }
            let projected = if ok {
                project_to_sphere(slot.x.view(), radius)
            } else {
                Err(Error::ProjectionUndefined)
            };
            match projected {
                Ok(p) => slot.x = p,
                Err(_) => {
                    // Keep the best-so-far point; mark the restart aborted.
                    slot.active = false;
                    slot.aborted = true;
                }
            }
        }
    }

    let per_restart: Vec<RestartSummary> = slots
        .iter()
        .enumerate()
        .map(|(index, slot)| RestartSummary {
            index,
            target_prob: slot.best_log.exp(),
            iters: slot.iters,
            termination: if slot.aborted {
                RestartTermination::Aborted
            } else if slot.iters >= config.max_iters {
                RestartTermination::MaxIters
            } else {
                RestartTermination::Patience
            },
        })
        .collect();
    let mut restart_points = Array2::zeros((slots.len(), dim));
    for (row, slot) in slots.iter().enumerate() {
        restart_points.row_mut(row).assign(&slot.best_x);
    }
    let best = slots
        .iter()
        .filter(|slot| slot.best_log.is_finite())
        .max_by(|a, b| a.best_log.total_cmp(&b.best_log));
    let Some(best_slot) = best else {
        return Err(Error::Divergence {
            reason: "every attack restart aborted before a finite objective".into(),
            step: 0,
        });
    };
    Ok(AttackResult {
        point: best_slot.best_x.clone(),
        target_prob: best_slot.best_log.exp(),
        source_label,
        target_label,
        per_restart,
        restart_points,
    })
}
