use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops::Learnable;

/// Cosine-annealed learning rate for `epoch` of `epochs`.
pub fn lr_at(epoch: usize, epochs: usize, base: f64) -> Result<f64> {
    if epoch >= epochs {
        return Err(Error::Config(format!("epoch {epoch} outside schedule of {epochs} epochs")));
    }
    let t = epoch as f64 / epochs as f64;
    Ok((0.5 * base * (1.0 + (std::f64::consts::PI * t).cos())).max(0.0))
}

/// SGD with momentum; weight decay is added to the gradient before the
/// momentum update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
    pub velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(params: &impl Learnable, momentum: f64, weight_decay: f64) -> Self {
        let velocity = params.tensors().iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        Self {
            momentum,
            weight_decay,
            velocity,
        }
    }

    pub fn step<P: Learnable>(&mut self, params: &mut P, grads: &P, lr: f64) -> Result<()> {
        let g = grads.tensors();
        if g.len() != self.velocity.len() {
            return Err(Error::Shape("gradient tensor count does not match the optimizer state".into()));
        }
        for (name, t) in &g {
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    stage: format!("gradient of {name}"),
                });
            }
        }
        let mut p = params.tensors_mut();
        for ((theta, (name, grad)), vel) in p.iter_mut().zip(&g).zip(&mut self.velocity) {
            if theta.len() != grad.len() || vel.len() != grad.len() {
                return Err(Error::Shape(format!("shape mismatch for {name}")));
            }
            for i in 0..grad.len() {
                vel[i] = self.momentum * vel[i] + grad[i] + self.weight_decay * theta[i];
                theta[i] -= lr * vel[i];
            }
        }
        Ok(())
    }
}
