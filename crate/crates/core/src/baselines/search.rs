//! Inner cross-validation for baseline hyperparameters.

use super::{fit_knn, fit_linear};
use crate::error::Result;
use crate::evaluation::kfold_assignments;
use crate::tensor::Tensor;

pub const RIDGE_ALPHA_GRID: [f64; 8] = [1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3, 1e4];
pub const KNN_K_GRID: [usize; 4] = [1, 5, 10, 50];

/// Mean squared out-of-fold error of `fit_predict` over `folds` inner folds.
fn inner_mse(
    x: &Tensor,
    y: &[f64],
    folds: usize,
    seed: u64,
    mut fit_predict: impl FnMut(&Tensor, &[f64], &Tensor) -> Result<Vec<f64>>,
) -> Result<f64> {
    let assign = kfold_assignments(y.len(), folds, seed)?;
    let mut sse = 0.0;
    for f in 0..folds {
        let train: Vec<usize> = (0..y.len()).filter(|&i| assign[i] != f).collect();
        let test: Vec<usize> = (0..y.len()).filter(|&i| assign[i] == f).collect();
        let ytr: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let pred = fit_predict(&x.select_rows(&train), &ytr, &x.select_rows(&test))?;
        sse += test.iter().zip(pred).map(|(&i, p)| (y[i] - p) * (y[i] - p)).sum::<f64>();
    }
    Ok(sse / y.len() as f64)
}

fn argmin<T: Copy>(scored: &[(T, f64)]) -> T {
    scored
        .iter()
        .fold(None::<(T, f64)>, |best, &(v, s)| match best {
            Some((_, bs)) if bs <= s => best,
            _ => Some((v, s)),
        })
        .map(|(v, _)| v)
        .expect("grid is non-empty")
}

/// Ridge penalty with the lowest inner-CV error; ties keep the earlier grid value.
pub fn select_ridge_alpha(x: &Tensor, y: &[f64], grid: &[f64], folds: usize, seed: u64) -> Result<f64> {
    let scored = grid
        .iter()
        .map(|&a| {
            inner_mse(x, y, folds, seed, |xt, yt, xv| fit_linear(xt, yt, a)?.predict(xv)).map(|s| (a, s))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(argmin(&scored))
}

/// Neighbour count with the lowest inner-CV error, skipping values larger than an inner training fold.
pub fn select_k(x: &Tensor, y: &[f64], grid: &[usize], folds: usize, seed: u64) -> Result<usize> {
    let min_train = y.len() - y.len().div_ceil(folds);
    let mut scored = Vec::new();
    for &k in grid.iter().filter(|&&k| k <= min_train) {
        let s = inner_mse(x, y, folds, seed, |xt, yt, xv| fit_knn(xt, yt, k)?.predict(xv))?;
        scored.push((k, s));
    }
    if scored.is_empty() {
        return Ok(1);
    }
    Ok(argmin(&scored))
}
