//! Datasets, z-score standardization, CSV ingestion, and synthetic data.

pub mod csv_io;
pub mod synthetic;

pub use csv_io::{load_csv, load_features_csv, write_csv, FeatureTable};
pub use synthetic::{generate_synthetic, GroundTruth, SyntheticData, SyntheticSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Synthetic,
    Csv,
}

/// Feature matrix `x` (`n × D`) with targets `c` (`n`).
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Tensor,
    pub c: Vec<f64>,
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(
        x: Tensor,
        c: Vec<f64>,
        feature_names: Vec<String>,
        target_name: impl Into<String>,
        provenance: Provenance,
    ) -> Result<Self> {
        if x.shape().len() != 2 {
            return Err(Error::dim("feature matrix rank", 2, x.shape().len()));
        }
        if x.rows() < 2 {
            return Err(Error::Data(format!("need at least 2 rows, got {}", x.rows())));
        }
        if c.len() != x.rows() {
            return Err(Error::dim("target length", x.rows(), c.len()));
        }
        if feature_names.len() != x.cols() {
            return Err(Error::dim("feature names", x.cols(), feature_names.len()));
        }
        if !x.is_finite() || c.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("dataset contains non-finite values".into()));
        }
        let ds = Self {
            x,
            c,
            feature_names,
            target_name: target_name.into(),
            provenance,
        };
        // fitting statistics doubles as the constant-column check
        Standardization::fit(&ds)?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    /// Rows at `indices`; statistics are not re-validated.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(indices),
            c: indices.iter().map(|&i| self.c[i]).collect(),
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
            provenance: self.provenance,
        }
    }

    /// Fits statistics on `self` and returns the standardized copy with them.
    pub fn standardize(&self) -> Result<(Dataset, Standardization)> {
        let stats = Standardization::fit(self)?;
        let out = stats.apply(self)?;
        Ok((out, stats))
    }
}

/// Population (1/n) z-score statistics for features and target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub target_mean: f64,
    pub target_std: f64,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl Standardization {
    pub fn fit(ds: &Dataset) -> Result<Self> {
        let (n, d) = (ds.x.rows(), ds.x.cols());
        let mut feature_mean = Vec::with_capacity(d);
        let mut feature_std = Vec::with_capacity(d);
        for j in 0..d {
            let (m, s) = mean_std((0..n).map(|i| ds.x.get(i, j)));
            if !(s > 0.0) {
                return Err(Error::Data(format!(
                    "feature {:?} has zero variance",
                    ds.feature_names[j]
                )));
            }
            feature_mean.push(m);
            feature_std.push(s);
        }
        let (target_mean, target_std) = mean_std(ds.c.iter().copied());
        if !(target_std > 0.0) {
            return Err(Error::Data(format!("target {:?} has zero variance", ds.target_name)));
        }
        Ok(Self {
            feature_mean,
            feature_std,
            target_mean,
            target_std,
        })
    }

    pub fn dim(&self) -> usize {
        self.feature_mean.len()
    }

    pub fn transform_features(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.dim() {
            return Err(Error::dim("features to standardize", self.dim(), x.cols()));
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(&self.feature_mean).zip(&self.feature_std) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }

    pub fn destandardize_features(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.dim() {
            return Err(Error::dim("features to destandardize", self.dim(), x.cols()));
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(&self.feature_mean).zip(&self.feature_std) {
                *v = *v * s + m;
            }
        }
        Ok(out)
    }

    pub fn standardize_target(&self, c: f64) -> f64 {
        (c - self.target_mean) / self.target_std
    }

    pub fn destandardize_target(&self, c: f64) -> f64 {
        c * self.target_std + self.target_mean
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        Ok(Dataset {
            x: self.transform_features(&ds.x)?,
            c: ds.c.iter().map(|&c| self.standardize_target(c)).collect(),
            feature_names: ds.feature_names.clone(),
            target_name: ds.target_name.clone(),
            provenance: ds.provenance,
        })
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn tiny(rows: &[Vec<f64>], c: Vec<f64>) -> Dataset {
        let d = rows[0].len();
        Dataset::new(
            Tensor::from_rows(rows).unwrap(),
            c,
            (0..d).map(|j| format!("f{j}")).collect(),
            "age",
            Provenance::Csv,
        )
        .unwrap()
    }

    #[test]
    fn standardizes_hand_column() {
        let ds = tiny(&[vec![2.0], vec![4.0], vec![6.0]], vec![1.0, 2.0, 4.0]);
        let (z, stats) = ds.standardize().unwrap();
        let s = (8.0_f64 / 3.0).sqrt();
        assert!((stats.feature_std[0] - s).abs() < 1e-15);
        let expected = [-2.0 / s, 0.0, 2.0 / s];
        for (a, b) in z.x.values().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((z.x.values()[0] + 1.2247).abs() < 1e-4);
    }

    #[test]
    fn standardized_columns_have_zero_mean_unit_std() {
        let ds = tiny(
            &[vec![1.0, 10.0], vec![3.0, -2.0], vec![8.0, 5.0], vec![0.5, 7.0]],
            vec![20.0, 40.0, 55.0, 81.0],
        );
        let (z, stats) = ds.standardize().unwrap();
        let again = Standardization::fit(&z).unwrap();
        for j in 0..2 {
            assert!(again.feature_mean[j].abs() < 1e-10);
            assert!((again.feature_std[j] - 1.0).abs() < 1e-10);
        }
        // already standardized data is a fixed point
        let z2 = again.apply(&z).unwrap();
        for (a, b) in z2.x.values().iter().zip(z.x.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        for &c in &ds.c {
            assert!((stats.destandardize_target(stats.standardize_target(c)) - c).abs() < 1e-10);
        }
    }

    #[test]
    fn test_fold_uses_train_statistics() {
        let train = tiny(&[vec![0.0], vec![2.0], vec![4.0]], vec![1.0, 2.0, 3.0]);
        let stats = Standardization::fit(&train).unwrap();
        let test = tiny(&[vec![10.0], vec![12.0]], vec![1.0, 2.0]);
        let z = stats.apply(&test).unwrap();
        assert!(crate::tensor::mean(z.x.values()).abs() > 1.0);
    }

    #[test]
    fn constant_feature_is_rejected_by_name() {
        let err = Dataset::new(
            Tensor::from_rows(&[vec![1.0, 5.0], vec![2.0, 5.0]]).unwrap(),
            vec![1.0, 2.0],
            vec!["a".into(), "svol".into()],
            "age",
            Provenance::Csv,
        )
        .unwrap_err();
        assert!(err.to_string().contains("svol"), "{err}");
    }

    #[test]
    fn rejects_single_row_and_non_finite() {
        assert!(Dataset::new(
            Tensor::from_rows(&[vec![1.0]]).unwrap(),
            vec![1.0],
            vec!["a".into()],
            "age",
            Provenance::Csv
        )
        .is_err());
        assert!(Dataset::new(
            Tensor::from_rows(&[vec![1.0], vec![f64::NAN]]).unwrap(),
            vec![1.0, 2.0],
            vec!["a".into()],
            "age",
            Provenance::Csv
        )
        .is_err());
    }
}
