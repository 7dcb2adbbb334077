//! Dense network substrate: layers with hand-written backpropagation, Adam,
//! and finite-difference gradient checking.

pub mod adam;
pub mod gradcheck;
pub mod layer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use layer::{dense_backward, dense_forward, Activation, DenseCache, DenseGrads, DenseLayer};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Anything exposing an ordered list of named trainable tensors.
///
/// The order must be stable: optimizer state and gradient tapes are matched
/// to parameters by position.
pub trait Parameterized {
    fn parameters(&self) -> Vec<(String, &Tensor)>;
    fn parameters_mut(&mut self) -> Vec<(String, &mut Tensor)>;

    fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|(_, t)| t.len()).sum()
    }

    fn flatten(&self) -> Vec<f64> {
        self.parameters()
            .into_iter()
            .flat_map(|(_, t)| t.values().to_vec())
            .collect()
    }

    fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        let total = self.parameter_count();
        if flat.len() != total {
            return Err(Error::dim("flat parameter vector", total, flat.len()));
        }
        let mut offset = 0;
        for (_, t) in self.parameters_mut() {
            let n = t.len();
            t.values_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Sum of squared dense-layer weights (biases and non-layer tensors excluded).
    fn weight_norm_sq(&self) -> f64;
}

/// Per-parameter gradients, shaped exactly like the parameters they belong to.
#[derive(Clone, Debug)]
pub struct GradientTape {
    entries: Vec<(String, Tensor)>,
    pub loss: f64,
}

impl GradientTape {
    pub fn for_params(params: &impl Parameterized) -> Self {
        let entries = params
            .parameters()
            .into_iter()
            .map(|(name, t)| (name, Tensor::zeros(t.shape())))
            .collect();
        Self { entries, loss: 0.0 }
    }

    pub fn zero(&mut self) {
        for (_, t) in &mut self.entries {
            t.fill(0.0);
        }
        self.loss = 0.0;
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(String, Tensor)] {
        &self.entries
    }

    pub fn grad(&self, i: usize) -> &Tensor {
        &self.entries[i].1
    }

    pub fn accumulate(&mut self, i: usize, g: &Tensor) -> Result<()> {
        let (name, t) = &mut self.entries[i];
        t.add_assign(g).map_err(|_| {
            Error::dim(format!("gradient for {name}"), format!("{:?}", t.shape()), format!("{:?}", g.shape()))
        })
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.entries.iter().flat_map(|(_, t)| t.values().to_vec()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0_f64, |m, (_, t)| m.max(t.max_abs()))
    }

    /// Name of the first parameter with a non-finite gradient.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.entries
            .iter()
            .find(|(_, t)| !t.is_finite())
            .map(|(n, _)| n.as_str())
    }
}
