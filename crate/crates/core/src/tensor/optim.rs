use serde::{Deserialize, Serialize};

use super::{Gradients, ParamStore, Tensor};
use crate::error::{invalid, Result};

/// L2 norm over all gradient tensors taken together.
pub fn global_norm(grads: &Gradients) -> f64 {
    grads
        .iter()
        .flat_map(|t| t.data().iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
}

/// Rescales every gradient by `max_norm / norm` when the global norm
/// exceeds `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> Result<f64> {
    if max_norm.is_nan() || max_norm <= 0.0 {
        return Err(invalid(format!("max_norm must be positive, got {max_norm}")));
    }
    let norm = global_norm(grads);
    if norm > max_norm {
        let factor = max_norm / norm;
        for t in grads.iter_mut() {
            for x in t.data_mut() {
                *x *= factor;
            }
        }
    }
    Ok(norm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdadeltaConfig {
    pub rho: f64,
    pub epsilon: f64,
    /// Multiplier on the Adadelta step; 1.0 is the plain method.
    pub lr: f64,
}

impl Default for AdadeltaConfig {
    fn default() -> Self {
        AdadeltaConfig {
            rho: 0.95,
            epsilon: 1e-6,
            lr: 1.0,
        }
    }
}

/// Adadelta running averages, one pair of tensors per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Adadelta {
    pub config: AdadeltaConfig,
    sq_grad: Vec<Tensor>,
    sq_update: Vec<Tensor>,
}

impl Adadelta {
    pub fn new(params: &ParamStore, config: AdadeltaConfig) -> Result<Self> {
        if !(0.0..1.0).contains(&config.rho) || config.rho == 0.0 || config.epsilon.is_nan() || config.epsilon <= 0.0 {
            return Err(invalid(format!("bad Adadelta settings {config:?}")));
        }
        let zeros = || params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        Ok(Adadelta {
            config,
            sq_grad: zeros(),
            sq_update: zeros(),
        })
    }

    pub fn sq_grad(&self) -> &[Tensor] {
        &self.sq_grad
    }

    pub fn sq_update(&self) -> &[Tensor] {
        &self.sq_update
    }

    /// E[g²] ← ρE[g²] + (1-ρ)g²; Δ = -√(E[Δ²]+ε)/√(E[g²]+ε)·g;
    /// E[Δ²] ← ρE[Δ²] + (1-ρ)Δ²; x ← x + lr·Δ.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients) -> Result<()> {
        if grads.len() != params.len() || self.sq_grad.len() != params.len() {
            return Err(invalid("gradient count does not match parameters"));
        }
        let AdadeltaConfig { rho, epsilon, lr } = self.config;
        for (i, id) in params.ids().collect::<Vec<_>>().into_iter().enumerate() {
            let g = grads.get(id);
            let p = params.get_mut(id);
            if g.shape() != p.shape() || self.sq_grad[i].shape() != p.shape() {
                return Err(invalid(format!(
                    "adadelta: gradient {:?} vs parameter {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            let eg = self.sq_grad[i].data_mut();
            let ed = self.sq_update[i].data_mut();
            for (((x, &gi), eg), ed) in p.data_mut().iter_mut().zip(g.data()).zip(eg).zip(ed) {
                *eg = rho * *eg + (1.0 - rho) * gi * gi;
                let delta = -((*ed + epsilon).sqrt() / (*eg + epsilon).sqrt()) * gi;
                *ed = rho * *ed + (1.0 - rho) * delta * delta;
                *x += lr * delta;
            }
        }
        Ok(())
    }
}
