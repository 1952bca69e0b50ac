use serde::{Deserialize, Serialize};

use crate::error::{LoclError, Result};
use crate::nn::Tensor;

/// RMSProp:
/// `acc <- decay * acc + (1 - decay) * g^2`,
/// `w <- w - lr * g / (sqrt(acc) + eps)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmsProp {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
    /// Squared-gradient accumulators, one per parameter, created lazily.
    pub accumulators: Vec<Vec<f64>>,
}

impl RmsProp {
    pub const DEFAULT_DECAY: f64 = 0.9;
    pub const DEFAULT_EPSILON: f64 = 1e-8;

    pub fn new(learning_rate: f64) -> Self {
        Self::with_config(learning_rate, Self::DEFAULT_DECAY, Self::DEFAULT_EPSILON)
    }

    pub fn with_config(learning_rate: f64, decay: f64, epsilon: f64) -> Self {
        RmsProp {
            learning_rate,
            decay,
            epsilon,
            accumulators: Vec::new(),
        }
    }

    /// Update every parameter from its gradient slot. All gradients are
    /// checked before anything is written, so a non-finite gradient leaves
    /// parameters and state untouched. Parameters without a gradient are
    /// treated as having a zero gradient.
    pub fn step(&mut self, params: &mut [(String, &mut Tensor)]) -> Result<()> {
        for (name, p) in params.iter() {
            if let Some(g) = p.grad() {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(LoclError::NonFiniteGradient(name.clone()));
                }
            }
        }
        if self.accumulators.is_empty() {
            self.accumulators = params.iter().map(|(_, p)| vec![0.0; p.numel()]).collect();
        }
        if self.accumulators.len() != params.len() {
            return Err(LoclError::shape(format!(
                "optimizer tracks {} parameters, got {}",
                self.accumulators.len(),
                params.len()
            )));
        }
        for ((name, p), acc) in params.iter_mut().zip(&mut self.accumulators) {
            if acc.len() != p.numel() {
                return Err(LoclError::shape(format!("parameter {name} changed size")));
            }
            let Some(g) = p.grad().map(<[f64]>::to_vec) else {
                continue;
            };
            for ((w, a), g) in p.data_mut().iter_mut().zip(acc.iter_mut()).zip(&g) {
                *a = self.decay * *a + (1.0 - self.decay) * g * g;
                *w -= self.learning_rate * g / (a.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}
