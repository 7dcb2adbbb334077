use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::nn::layer::{backward_stack, forward_stack};
use crate::nn::{Activation, AdamState, DenseLayer, GradientTape, Parameterized};
use crate::rng::{derive, Stream};
use crate::tensor::Tensor;
use crate::training::{minibatches, TrainConfig, GRAD_WARN_THRESHOLD};

/// Feed-forward regressor with the VAE trunk and a single mean output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NnRegressor {
    pub trunk: Vec<DenseLayer>,
    pub head: DenseLayer,
}

impl NnRegressor {
    /// Glorot trunk, zero head: an untrained model predicts 0.
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = derive(seed, Stream::Init, &[1]);
        let mut trunk = Vec::new();
        let mut prev = config.input_dim;
        for &h in &config.hidden {
            trunk.push(DenseLayer::init(prev, h, config.activation, &mut rng));
            prev = h;
        }
        Ok(Self {
            trunk,
            head: DenseLayer::zeros(prev, 1, Activation::Identity),
        })
    }

    pub fn predict(&self, x: &Tensor) -> Result<Vec<f64>> {
        let mut h = x.clone();
        for l in &self.trunk {
            h = l.forward(&h)?;
        }
        Ok(self.head.forward(&h)?.into_values())
    }

    /// Mean squared error plus `λ·Σ‖W‖²`, with gradients accumulated into `tape`.
    pub fn loss_and_grad(&self, x: &Tensor, y: &[f64], lambda_l2: f64, tape: &mut GradientTape) -> Result<f64> {
        if y.len() != x.rows() {
            return Err(Error::dim("nn targets", x.rows(), y.len()));
        }
        let caches = forward_stack(&self.trunk, x)?;
        let h = caches.last().map(|c| &c.output).unwrap_or(x);
        let head_cache = self.head.forward_cached(h)?;
        let n = y.len() as f64;
        let mut mse = 0.0;
        let mut g_out = Tensor::zeros(&[y.len(), 1]);
        for (i, (&p, &t)) in head_cache.output.values().iter().zip(y).enumerate() {
            mse += (p - t) * (p - t) / n;
            g_out.values_mut()[i] = 2.0 * (p - t) / n;
        }
        let loss = mse + lambda_l2 * self.weight_norm_sq();
        if !loss.is_finite() {
            return Err(Error::Training(format!("non-finite loss term mse = {mse}")));
        }
        let head_grads = self.head.backward_cached(&head_cache, &g_out)?;
        let (trunk_grads, _) = backward_stack(&self.trunk, &caches, head_grads.input.clone())?;
        let mut idx = 0;
        for (l, g) in self.trunk.iter().zip(&trunk_grads).chain([(&self.head, &head_grads)]) {
            let mut gw = g.weights.clone();
            for (gv, w) in gw.values_mut().iter_mut().zip(l.weights.values()) {
                *gv += 2.0 * lambda_l2 * w;
            }
            tape.accumulate(idx, &gw)?;
            tape.accumulate(idx + 1, &g.bias)?;
            idx += 2;
        }
        tape.loss += loss;
        Ok(loss)
    }
}

impl Parameterized for NnRegressor {
    fn parameters(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, l) in self.trunk.iter().enumerate() {
            out.push((format!("trunk.{i}.weights"), &l.weights));
            out.push((format!("trunk.{i}.bias"), &l.bias));
        }
        out.push(("head.weights".into(), &self.head.weights));
        out.push(("head.bias".into(), &self.head.bias));
        out
    }

    fn parameters_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for (i, l) in self.trunk.iter_mut().enumerate() {
            out.push((format!("trunk.{i}.weights"), &mut l.weights));
            out.push((format!("trunk.{i}.bias"), &mut l.bias));
        }
        out.push(("head.weights".into(), &mut self.head.weights));
        out.push(("head.bias".into(), &mut self.head.bias));
        out
    }

    fn weight_norm_sq(&self) -> f64 {
        self.trunk.iter().chain([&self.head]).map(|l| l.weights.sum_squares()).sum()
    }
}

/// Fits on standardized features `x` and targets `y` with the training-loop seeding contract.
pub fn fit_nn_regressor(x: &Tensor, y: &[f64], model_config: &ModelConfig, config: &TrainConfig) -> Result<NnRegressor> {
    config.validate(y.len())?;
    let mut arch = model_config.clone();
    arch.input_dim = x.cols();
    let mut model = NnRegressor::new(&arch, config.seed)?;
    let mut adam = AdamState::new(config.adam(), &model);
    let mut tape = GradientTape::for_params(&model);
    for epoch in 0..config.epochs {
        for (b, idx) in minibatches(y.len(), config.batch_size, epoch, config.seed).iter().enumerate() {
            let xb = x.select_rows(idx);
            let yb: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            tape.zero();
            model
                .loss_and_grad(&xb, &yb, config.lambda_l2, &mut tape)
                .map_err(|e| Error::Training(format!("epoch {epoch} batch {b}: {e}")))?;
            if tape.max_abs() > GRAD_WARN_THRESHOLD {
                log::warn!("nn epoch {epoch} batch {b}: max |grad| = {:.3e}", tape.max_abs());
            }
            adam.step(&mut model, &tape)?;
        }
    }
    Ok(model)
}
