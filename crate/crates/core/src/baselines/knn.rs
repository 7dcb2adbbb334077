use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub x: Option<Tensor>,
    pub y: Vec<f64>,
}

pub fn fit_knn(x: &Tensor, y: &[f64], k: usize) -> Result<KnnModel> {
    if y.len() != x.rows() {
        return Err(Error::dim("knn targets", x.rows(), y.len()));
    }
    if k == 0 || k > y.len() {
        return Err(Error::Config(format!("k must be in 1..={}, got {k}", y.len())));
    }
    Ok(KnnModel {
        k,
        x: Some(x.clone()),
        y: y.to_vec(),
    })
}

/// Mean target of the `k` nearest training rows; equal distances go to the lower index.
pub fn predict_knn(model: &KnnModel, query: &[f64]) -> Result<f64> {
    let x = model.x.as_ref().ok_or_else(|| Error::NotFitted("k-NN model".into()))?;
    if query.len() != x.cols() {
        return Err(Error::dim("knn query", x.cols(), query.len()));
    }
    let mut dist: Vec<(f64, usize)> = (0..x.rows())
        .map(|i| {
            let d: f64 = x.row(i).iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
            (d, i)
        })
        .collect();
    // sort is stable, so ties keep ascending index order
    dist.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(dist[..model.k].iter().map(|&(_, i)| model.y[i]).sum::<f64>() / model.k as f64)
}

impl KnnModel {
    pub fn predict(&self, x: &Tensor) -> Result<Vec<f64>> {
        (0..x.rows()).map(|i| predict_knn(self, x.row(i))).collect()
    }
}
