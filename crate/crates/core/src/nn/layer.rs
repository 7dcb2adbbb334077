use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation and the output.
    fn derivative(self, pre: f64, out: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - out * out,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Fully connected layer `activation(x · Wᵀ + b)` with `W: out_dim × in_dim`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

/// Values kept from a forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct DenseCache {
    pub input: Tensor,
    pub pre: Tensor,
    pub output: Tensor,
}

#[derive(Clone, Debug)]
pub struct DenseGrads {
    pub weights: Tensor,
    pub bias: Tensor,
    pub input: Tensor,
}

impl DenseLayer {
    pub fn new(weights: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        if weights.shape().len() != 2 {
            return Err(Error::dim("layer weights rank", 2, weights.shape().len()));
        }
        bias.expect_shape(&[weights.rows()], "layer bias")?;
        if !weights.is_finite() || !bias.is_finite() {
            return Err(Error::Data("layer parameters must be finite".into()));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            weights: Tensor::zeros(&[out_dim, in_dim]),
            bias: Tensor::zeros(&[out_dim]),
            activation,
        }
    }

    /// Glorot-uniform weights in `[-s, s]`, `s = sqrt(6 / (in + out))`, zero bias.
    pub fn init(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        let s = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let mut layer = Self::zeros(in_dim, out_dim, activation);
        for w in layer.weights.values_mut() {
            *w = rng.random_range(-s..=s);
        }
        layer
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.shape().len() != 2 || input.cols() != self.in_dim() {
            return Err(Error::dim(
                "dense layer input",
                format!("[batch, {}]", self.in_dim()),
                format!("{:?}", input.shape()),
            ));
        }
        Ok(())
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        Ok(self.forward_cached(input)?.output)
    }

    pub fn forward_cached(&self, input: &Tensor) -> Result<DenseCache> {
        self.check_input(input)?;
        let mut pre = input.matmul_transposed(&self.weights)?;
        let b = self.bias.values();
        for i in 0..pre.rows() {
            for (p, bj) in pre.row_mut(i).iter_mut().zip(b) {
                *p += bj;
            }
        }
        let act = self.activation;
        let output = pre.map(|v| act.apply(v));
        Ok(DenseCache {
            input: input.clone(),
            pre,
            output,
        })
    }

    pub fn backward(&self, input: &Tensor, upstream: &Tensor) -> Result<DenseGrads> {
        let cache = self.forward_cached(input)?;
        self.backward_cached(&cache, upstream)
    }

    /// Exact partial derivatives given the gradient of the loss w.r.t. the output.
    pub fn backward_cached(&self, cache: &DenseCache, upstream: &Tensor) -> Result<DenseGrads> {
        upstream.expect_shape(cache.output.shape(), "dense layer upstream gradient")?;
        let (batch, out_dim, in_dim) = (upstream.rows(), self.out_dim(), self.in_dim());
        let act = self.activation;

        let mut delta = upstream.clone();
        for ((d, &p), &o) in delta
            .values_mut()
            .iter_mut()
            .zip(cache.pre.values())
            .zip(cache.output.values())
        {
            *d *= act.derivative(p, o);
        }

        let mut gw = Tensor::zeros(&[out_dim, in_dim]);
        let mut gb = Tensor::zeros(&[out_dim]);
        let mut gin = Tensor::zeros(&[batch, in_dim]);
        let w = self.weights.values();
        for b in 0..batch {
            let x = cache.input.row(b);
            let drow = delta.row(b);
            for (o, &d) in drow.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                gb.values_mut()[o] += d;
                let gw_row = gw.row_mut(o);
                for (g, xi) in gw_row.iter_mut().zip(x) {
                    *g += d * xi;
                }
                let w_row = &w[o * in_dim..(o + 1) * in_dim];
                for (g, wi) in gin.row_mut(b).iter_mut().zip(w_row) {
                    *g += d * wi;
                }
            }
        }
        Ok(DenseGrads {
            weights: gw,
            bias: gb,
            input: gin,
        })
    }
}

pub fn dense_forward(layer: &DenseLayer, input: &Tensor) -> Result<Tensor> {
    layer.forward(input)
}

pub fn dense_backward(layer: &DenseLayer, input: &Tensor, upstream: &Tensor) -> Result<DenseGrads> {
    layer.backward(input, upstream)
}

/// Runs a stack of layers, keeping every cache.
pub fn forward_stack(layers: &[DenseLayer], input: &Tensor) -> Result<Vec<DenseCache>> {
    let mut caches: Vec<DenseCache> = Vec::with_capacity(layers.len());
    for layer in layers {
        let x = caches.last().map(|c| &c.output).unwrap_or(input);
        let cache = layer.forward_cached(x)?;
        caches.push(cache);
    }
    Ok(caches)
}

/// Backpropagates through a stack; returns per-layer grads and the gradient w.r.t. the stack input.
pub fn backward_stack(
    layers: &[DenseLayer],
    caches: &[DenseCache],
    upstream: Tensor,
) -> Result<(Vec<DenseGrads>, Tensor)> {
    let mut grads = Vec::with_capacity(layers.len());
    let mut g = upstream;
    for (layer, cache) in layers.iter().zip(caches).rev() {
        let lg = layer.backward_cached(cache, &g)?;
        g = lg.input.clone();
        grads.push(lg);
    }
    grads.reverse();
    Ok((grads, g))
}
