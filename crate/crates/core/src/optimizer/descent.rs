//! Projected-gradient descent with Armijo backtracking along the projection arc,
//! starting each line search from a Barzilai-Borwein step.

use crate::error::{Error, Result};

/// A differentiable objective on a feasible set.
pub trait Objective {
    fn value(&self, x: &[f64]) -> f64;

    /// Writes the gradient into `grad` and returns the value.
    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

/// Wraps a plain function with central finite differences, clipped to `[lo, hi]`
/// so every evaluation point stays in the box.
pub struct FiniteDifference<F> {
    pub f: F,
    pub step: f64,
    pub lo: f64,
    pub hi: f64,
}

impl<F: Fn(&[f64]) -> f64> Objective for FiniteDifference<F> {
    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let mut probe = x.to_vec();
        for k in 0..x.len() {
            let up = (x[k] + self.step).min(self.hi);
            let down = (x[k] - self.step).max(self.lo);
            probe[k] = up;
            let f_up = (self.f)(&probe);
            probe[k] = down;
            let f_down = (self.f)(&probe);
            probe[k] = x[k];
            grad[k] = if up > down { (f_up - f_down) / (up - down) } else { 0.0 };
        }
        (self.f)(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentOptions {
    pub max_iters: usize,
    /// Stop when `‖P(x − ∇f) − x‖` falls to this.
    pub grad_tol: f64,
    /// Stop when an accepted step improves `f` by less than this, relatively.
    pub rel_tol: f64,
    pub initial_step: f64,
    pub shrink: f64,
    pub sufficient_decrease: f64,
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self {
            max_iters: 2_000,
            grad_tol: 1e-6,
            rel_tol: 1e-10,
            initial_step: 1.0,
            shrink: 0.5,
            sufficient_decrease: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

const MIN_STEP: f64 = 1e-16;
const MAX_STEP_GROWTH: f64 = 1e4;

/// Projected-gradient descent from `x0` (assumed feasible). Every iterate is
/// `project`ed, and the objective never increases.
pub fn local_descent(
    objective: &dyn Objective,
    x0: Vec<f64>,
    project: &dyn Fn(&mut [f64]),
    options: &DescentOptions,
) -> Result<DescentOutcome> {
    let n = x0.len();
    let mut x = x0;
    let mut grad = vec![0.0; n];
    let mut value = objective.value_and_gradient(&x, &mut grad);
    check_finite(value, &grad)?;

    let mut step = options.initial_step;
    let mut trial = vec![0.0; n];
    let mut previous_grad = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < options.max_iters {
        for k in 0..n {
            trial[k] = x[k] - grad[k];
        }
        project(&mut trial);
        let pg_norm = trial.iter().zip(&x).map(|(t, v)| (t - v).powi(2)).sum::<f64>().sqrt();
        if pg_norm <= options.grad_tol {
            converged = true;
            break;
        }

        let mut accepted = None;
        while step >= MIN_STEP {
            for k in 0..n {
                trial[k] = x[k] - step * grad[k];
            }
            project(&mut trial);
            let decrease: f64 = grad
                .iter()
                .zip(trial.iter().zip(&x))
                .map(|(g, (t, v))| g * (t - v))
                .sum();
            let candidate = objective.value(&trial);
            if !candidate.is_finite() {
                return Err(Error::NonFiniteObjective(candidate));
            }
            if candidate <= value + options.sufficient_decrease * decrease {
                accepted = Some(candidate);
                break;
            }
            step *= options.shrink;
        }
        iterations += 1;
        let Some(candidate) = accepted else {
            // No descent along the projection arc at any step size.
            converged = true;
            break;
        };

        let improvement = value - candidate;
        std::mem::swap(&mut x, &mut trial);
        previous_grad.copy_from_slice(&grad);
        value = objective.value_and_gradient(&x, &mut grad);
        check_finite(value, &grad)?;
        if improvement <= options.rel_tol * value.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
        // Barzilai-Borwein trial step s·s / s·y, where the curvature allows it.
        let (mut ss, mut sy) = (0.0, 0.0);
        for k in 0..n {
            let sk = x[k] - trial[k];
            ss += sk * sk;
            sy += sk * (grad[k] - previous_grad[k]);
        }
        let max_step = options.initial_step * MAX_STEP_GROWTH;
        step = if sy > 0.0 {
            (ss / sy).clamp(MIN_STEP, max_step)
        } else {
            (step / options.shrink).min(max_step)
        };
    }

    Ok(DescentOutcome {
        x,
        value,
        iterations,
        converged,
    })
}

fn check_finite(value: f64, grad: &[f64]) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::NonFiniteObjective(value));
    }
    if let Some(g) = grad.iter().find(|g| !g.is_finite()) {
        return Err(Error::NonFiniteObjective(*g));
    }
    Ok(())
}
