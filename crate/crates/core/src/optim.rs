//! Smooth unconstrained minimization: limited-memory BFGS with a
//! backtracking line search for the point estimates and Laplace centers,
//! and a momentum SGD stepper reused by the variational loop.

use crate::error::{Error, Result};
use ndarray::{Array1, ArrayView1};
use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::PathBuf;

/// Why the optimizer stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Gradient norm fell below `grad_tol`.
    GradTol,
    /// Iteration budget exhausted. Expected for maximum-likelihood fits on
    /// separable data, where the optimum is at infinity.
    MaxIters,
    /// Backtracking found no decrease; the iterate is returned as-is.
    LineSearchStall,
}

#[derive(Debug, Clone)]
pub struct LbfgsConfig {
    pub max_iters: usize,
    /// Stop when the Euclidean gradient norm drops below this.
    pub grad_tol: f64,
    /// Number of curvature pairs kept for the two-loop recursion.
    pub memory: usize,
    /// Optional CSV trace (iter, value, grad_norm), one row per iteration.
    pub trace_path: Option<PathBuf>,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            max_iters: 1000,
            grad_tol: 1e-8,
            memory: 10,
            trace_path: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptResult {
    pub params: Array1<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iters: usize,
    pub termination: Termination,
}

const ARMIJO_C1: f64 = 1e-4;
const WOLFE_C2: f64 = 0.9;
const MAX_LINE_SEARCH_STEPS: usize = 60;

/// Minimize a smooth function with L-BFGS. `eval` returns the objective
/// value and its gradient at a point. The iterate with the lowest observed
/// value is returned even when the search stalls.
pub fn lbfgs_minimize<F>(x0: Array1<f64>, config: &LbfgsConfig, mut eval: F) -> Result<OptResult>
where
    F: FnMut(ArrayView1<'_, f64>) -> Result<(f64, Array1<f64>)>,
{
    if config.memory == 0 || config.max_iters == 0 {
        return Err(Error::Config(
            "lbfgs memory and max_iters must be positive".into(),
        ));
    }
    let mut x = x0;
    let (mut value, mut grad) = eval(x.view())?;
    check_finite(value, grad.view(), 0)?;
    let mut history: VecDeque<(Array1<f64>, Array1<f64>, f64)> = VecDeque::new(); // (s, y, rho)
    let mut trace = config.trace_path.as_ref().map(|_| {
        let mut s = String::from("iter,value,grad_norm\n");
        let _ = writeln!(s, "0,{value},{}", norm(grad.view()));
        s
    });

    let mut iters = 0;
    let termination = loop {
        let grad_norm = norm(grad.view());
        if grad_norm <= config.grad_tol {
            break Termination::GradTol;
        }
        if iters >= config.max_iters {
            break Termination::MaxIters;
        }

        let mut direction = two_loop_direction(&history, grad.view());
        let mut slope = direction.dot(&grad);
        if !(slope < 0.0) {
            // Curvature information went stale; fall back to steepest descent.
            history.clear();
            direction = grad.mapv(|g| -g);
            slope = direction.dot(&grad);
        }

        // Weak-Wolfe line search by bisection bracketing: shrink when the
        // sufficient-decrease condition fails, grow when the curvature
        // condition fails. Meeting both keeps s.y > 0, so every accepted
        // step yields a usable curvature pair.
        let mut lo = 0.0f64;
        let mut hi = f64::INFINITY;
        let mut alpha = 1.0f64;
        let mut accepted = None;
        let mut armijo_fallback = None;
        for _ in 0..MAX_LINE_SEARCH_STEPS {
            let candidate = &x + &(&direction * alpha);
            let (cand_value, cand_grad) = eval(candidate.view())?;
            let armijo =
                cand_value.is_finite() && cand_value <= value + ARMIJO_C1 * alpha * slope;
            if !armijo {
                hi = alpha;
            } else if cand_grad.dot(&direction) < WOLFE_C2 * slope {
                armijo_fallback = Some((candidate, cand_value, cand_grad));
                lo = alpha;
            } else {
                accepted = Some((candidate, cand_value, cand_grad));
                break;
            }
            alpha = if hi.is_finite() {
                0.5 * (lo + hi)
            } else {
                2.0 * alpha
            };
        }
        // A step meeting only the decrease condition still makes progress;
        // its curvature pair is filtered out below.
        let Some((new_x, new_value, new_grad)) = accepted.or(armijo_fallback) else {
            break Termination::LineSearchStall;
        };
        check_finite(new_value, new_grad.view(), iters + 1)?;

        let s = &new_x - &x;
        let y = &new_grad - &grad;
        let sy = s.dot(&y);
        // Keep the inverse-Hessian estimate positive definite.
        if sy > 1e-10 * norm(s.view()) * norm(y.view()) {
            if history.len() == config.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        x = new_x;
        value = new_value;
        grad = new_grad;
        iters += 1;
        if let Some(t) = trace.as_mut() {
            let _ = writeln!(t, "{iters},{value},{}", norm(grad.view()));
        }
    };

    if let (Some(text), Some(path)) = (trace, config.trace_path.as_ref()) {
        std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(OptResult {
        grad_norm: norm(grad.view()),
        params: x,
        value,
        iters,
        termination,
    })
}

fn check_finite(value: f64, grad: ArrayView1<'_, f64>, iter: usize) -> Result<()> {
    if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Divergence {
            reason: "non-finite objective or gradient".into(),
            step: iter,
        });
    }
    Ok(())
}

fn norm(v: ArrayView1<'_, f64>) -> f64 {
    crate::math::stable_norm(v)
}

/// Two-loop recursion: approximate -H * grad from stored curvature pairs,
/// seeded with the gamma scaling of the most recent pair.
fn two_loop_direction(
    history: &VecDeque<(Array1<f64>, Array1<f64>, f64)>,
    grad: ArrayView1<'_, f64>,
) -> Array1<f64> {
    let mut q = grad.to_owned();
    if history.is_empty() {
        return q.mapv(|v| -v);
    }
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let alpha = rho * s.dot(&q);
        q.scaled_add(-alpha, y);
        alphas.push(alpha);
    }
    let (s_last, y_last, _) = history.back().expect("non-empty");
    let gamma = s_last.dot(y_last) / y_last.dot(y_last);
    q.mapv_inplace(|v| v * gamma);
    for ((s, y, rho), alpha) in history.iter().zip(alphas.into_iter().rev()) {
        let beta = rho * y.dot(&q);
        q.scaled_add(alpha - beta, s);
    }
    q.mapv(|v| -v)
}

/// Momentum SGD stepper with gradient-norm clipping, applied to a
/// minimization objective.
#[derive(Debug, Clone)]
pub struct MomentumSgd {
    velocity: Array1<f64>,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Gradients with Euclidean norm above this are rescaled onto it.
    pub clip_norm: f64,
}

impl MomentumSgd {
    pub fn new(dim: usize, learning_rate: f64, momentum: f64, clip_norm: f64) -> Result<Self> {
        if !(learning_rate > 0.0) || !(0.0..1.0).contains(&momentum) || !(clip_norm > 0.0) {
            return Err(Error::Config(format!(
                "bad sgd settings: lr {learning_rate}, momentum {momentum}, clip {clip_norm}"
            )));
        }
        Ok(MomentumSgd {
            velocity: Array1::zeros(dim),
            learning_rate,
            momentum,
            clip_norm,
        })
    }

    /// One update in place; `grad` points uphill on the minimized objective.
    pub fn step(&mut self, params: &mut Array1<f64>, grad: ArrayView1<'_, f64>) {
        let gnorm = norm(grad);
        let scale = if gnorm > self.clip_norm {
            self.clip_norm / gnorm
        } else {
            1.0
        };
        self.velocity
            .zip_mut_with(&grad, |v, &g| *v = self.momentum * *v - self.learning_rate * scale * g);
        *params += &self.velocity;
    }
}
