use crate::diffcore::ParamVector;
use crate::error::{Error, Result};
use crate::objective::LossBreakdown;

use super::OptimizerKind;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Result of [`optimize`].
#[derive(Debug, Clone)]
pub struct Optimized {
    pub params: ParamVector,
    pub history: Vec<LossBreakdown>,
    pub best_iteration: usize,
}

/// First-order minimization. `loss_fn` returns the loss terms and the
/// gradient of their total at the given parameters. Returns the parameters
/// with the lowest evaluated total.
pub fn optimize<F>(
    mut loss_fn: F,
    params: &ParamVector,
    iterations: usize,
    learning_rate: f64,
    kind: OptimizerKind,
) -> Result<Optimized>
where
    F: FnMut(&ParamVector) -> Result<(LossBreakdown, ParamVector)>,
{
    if !(learning_rate > 0.0 && learning_rate.is_finite()) {
        return Err(Error::Config(format!("learning_rate must be positive, got {learning_rate}")));
    }
    if iterations == 0 {
        return Err(Error::Config("iterations must be at least 1".into()));
    }
    let mut theta = params.flatten();
    let mut m = vec![0.0; theta.len()];
    let mut v = vec![0.0; theta.len()];
    let mut history = Vec::with_capacity(iterations);
    let mut best = (f64::INFINITY, theta.clone(), 0);
    for it in 0..iterations {
        let current = params.with_flat(&theta)?;
        let (loss, grad) = loss_fn(&current).map_err(|e| match e {
            Error::NonFinite { .. } | Error::NonFiniteVelocity { .. } => Error::NonFiniteLoss { iteration: it },
            other => other,
        })?;
        if !loss.total.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: it });
        }
        if loss.total < best.0 {
            best = (loss.total, theta.clone(), it);
        }
        history.push(loss);
        let grad = grad.flatten();
        match kind {
            OptimizerKind::Sgd => {
                for (t, g) in theta.iter_mut().zip(&grad) {
                    *t -= learning_rate * g;
                }
            }
            OptimizerKind::Adam => {
                let k = (it + 1) as i32;
                let c1 = 1.0 - BETA1.powi(k);
                let c2 = 1.0 - BETA2.powi(k);
                for i in 0..theta.len() {
                    m[i] = BETA1 * m[i] + (1.0 - BETA1) * grad[i];
                    v[i] = BETA2 * v[i] + (1.0 - BETA2) * grad[i] * grad[i];
                    theta[i] -= learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
                }
            }
        }
    }
    Ok(Optimized { params: params.with_flat(&best.1)?, history, best_iteration: best.2 })
}
