use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Added to the diagonal when the unregularized normal equations are singular.
pub const SINGULAR_JITTER: f64 = 1e-10;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub l2_alpha: f64,
    pub fitted: bool,
}

/// Minimizes `‖y − Xβ − b‖² + α‖β‖²` with an unpenalized intercept.
pub fn fit_linear(x: &Tensor, y: &[f64], alpha: f64) -> Result<LinearModel> {
    let (n, d) = (x.rows(), x.cols());
    if n == 0 || y.is_empty() {
        return Err(Error::Data("cannot fit a linear model to an empty dataset".into()));
    }
    if y.len() != n {
        return Err(Error::dim("linear targets", n, y.len()));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!("ridge alpha must be finite and non-negative, got {alpha}")));
    }
    let x_mean: Vec<f64> = (0..d).map(|j| (0..n).map(|i| x.get(i, j)).sum::<f64>() / n as f64).collect();
    let y_mean = y.iter().sum::<f64>() / n as f64;

    let xc = DMatrix::from_fn(n, d, |i, j| x.get(i, j) - x_mean[j]);
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
    let xtx = xc.transpose() * &xc;
    let xty = xc.transpose() * yc;

    let solve = |ridge: f64| {
        let mut a = xtx.clone();
        for j in 0..d {
            a[(j, j)] += ridge;
        }
        a.cholesky().map(|ch| ch.solve(&xty))
    };
    let beta = match solve(alpha) {
        Some(b) => b,
        None => solve(alpha + SINGULAR_JITTER)
            .ok_or_else(|| Error::Data("normal equations are numerically singular".into()))?,
    };
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let intercept = y_mean - coefficients.iter().zip(&x_mean).map(|(b, m)| b * m).sum::<f64>();
    Ok(LinearModel {
        coefficients,
        intercept,
        l2_alpha: alpha,
        fitted: true,
    })
}

impl LinearModel {
    pub fn predict(&self, x: &Tensor) -> Result<Vec<f64>> {
        if !self.fitted {
            return Err(Error::NotFitted("linear model".into()));
        }
        if x.cols() != self.coefficients.len() {
            return Err(Error::dim("linear model input", self.coefficients.len(), x.cols()));
        }
        Ok((0..x.rows())
            .map(|i| self.intercept + crate::tensor::dot(x.row(i), &self.coefficients))
            .collect())
    }
}
