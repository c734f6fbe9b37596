use super::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
    RmsProp { rho: f64, eps: f64 },
}

/// Update rule plus accumulators for a single parameter tensor.
///
/// Accumulators are allocated on the first step and must keep the shape of
/// the parameter they were created for.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: OptimizerKind,
    learning_rate: f64,
    first: Option<Tensor>,
    second: Option<Tensor>,
    step: u64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::usage(format!("learning rate must be positive, got {learning_rate}")));
        }
        Ok(Self {
            kind,
            learning_rate,
            first: None,
            second: None,
            step: 0,
        })
    }

    pub fn sgd(learning_rate: f64) -> Result<Self> {
        Self::new(OptimizerKind::Sgd, learning_rate)
    }

    pub fn adam(learning_rate: f64) -> Result<Self> {
        Self::new(
            OptimizerKind::Adam {
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
            },
            learning_rate,
        )
    }

    pub fn rmsprop(learning_rate: f64) -> Result<Self> {
        Self::new(OptimizerKind::RmsProp { rho: 0.9, eps: 1e-8 }, learning_rate)
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn set_learning_rate(&mut self, learning_rate: f64) -> Result<()> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::usage(format!("learning rate must be positive, got {learning_rate}")));
        }
        self.learning_rate = learning_rate;
        Ok(())
    }

    pub fn step(&mut self, params: &mut Tensor, grads: &Tensor) -> Result<()> {
        params.ensure_same_shape(grads, "optimizer step")?;
        for acc in [&self.first, &self.second].into_iter().flatten() {
            params.ensure_same_shape(acc, "optimizer accumulator")?;
        }
        self.step += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.data_mut().iter_mut().zip(grads.data()) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let m = self.first.get_or_insert_with(|| Tensor::zeros(grads.shape()));
                let v = self.second.get_or_insert_with(|| Tensor::zeros(grads.shape()));
                let bc1 = 1.0 - beta1.powf(self.step as f64);
                let bc2 = 1.0 - beta2.powf(self.step as f64);
                for (((p, &g), m), v) in params
                    .data_mut()
                    .iter_mut()
                    .zip(grads.data())
                    .zip(m.data_mut())
                    .zip(v.data_mut())
                {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
            OptimizerKind::RmsProp { rho, eps } => {
                let s = self.second.get_or_insert_with(|| Tensor::zeros(grads.shape()));
                for ((p, &g), s) in params.data_mut().iter_mut().zip(grads.data()).zip(s.data_mut()) {
                    *s = rho * *s + (1.0 - rho) * g * g;
                    *p -= lr * g / (s.sqrt() + eps);
                }
            }
        }
        Ok(())
    }
}
