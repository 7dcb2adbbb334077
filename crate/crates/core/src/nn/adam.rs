use serde::{Deserialize, Serialize};

use super::{GradientTape, Parameterized};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moment estimates for one parameter set.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    first_moment: Vec<Tensor>,
    second_moment: Vec<Tensor>,
    step_count: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &impl Parameterized) -> Self {
        let zeros: Vec<Tensor> = params
            .parameters()
            .iter()
            .map(|(_, t)| Tensor::zeros(t.shape()))
            .collect();
        Self {
            config,
            first_moment: zeros.clone(),
            second_moment: zeros,
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One bias-corrected Adam update. Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, params: &mut impl Parameterized, grads: &GradientTape) -> Result<()> {
        if let Some(name) = grads.first_non_finite() {
            return Err(Error::Training(format!("non-finite gradient for parameter {name}")));
        }
        let mut tensors = params.parameters_mut();
        if tensors.len() != grads.len() || tensors.len() != self.first_moment.len() {
            return Err(Error::dim("adam parameter count", self.first_moment.len(), tensors.len()));
        }
        for (i, (name, t)) in tensors.iter().enumerate() {
            if t.shape() != grads.grad(i).shape() || t.shape() != self.first_moment[i].shape() {
                return Err(Error::dim(
                    format!("adam gradient for {name}"),
                    format!("{:?}", t.shape()),
                    format!("{:?}", grads.grad(i).shape()),
                ));
            }
        }

        self.step_count += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step_count as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);

        for (i, (_, p)) in tensors.iter_mut().enumerate() {
            let g = grads.grad(i).values();
            let m = self.first_moment[i].values_mut();
            let v = self.second_moment[i].values_mut();
            for (((p, &g), m), v) in p.values_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

pub fn adam_step(params: &mut impl Parameterized, grads: &GradientTape, state: &mut AdamState) -> Result<()> {
    state.step(params, grads)
}
