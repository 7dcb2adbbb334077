// `!(a < b)` comparisons are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Regression with a variational autoencoder.
//!
//! A shared trunk feeds a probabilistic encoder `q(z|x)` and a probabilistic
//! regressor `q(c|x)`; a decoder reconstructs `x` from `z`, and a latent
//! generator `p(z|c) = N(u·c, σ²I)` ties one latent direction `u` to the
//! target. All gradients are written out by hand and verified against
//! finite differences.

pub mod baselines;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod nn;
pub mod rng;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::Tensor;
