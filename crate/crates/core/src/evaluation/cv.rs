//! Seeded k-fold cross-validation over the regression VAE and the baselines.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::metrics::{r2_score, rmse};
use crate::baselines::{fit_knn, fit_linear, fit_nn_regressor, select_k, select_ridge_alpha, KnnModel, LinearModel, NnRegressor};
use crate::baselines::{KNN_K_GRID, RIDGE_ALPHA_GRID};
use crate::data::{Dataset, Standardization};
use crate::error::{Error, Result};
use crate::model::{Checkpoint, ModelConfig};
use crate::rng::{derive, sub_seed, Stream};
use crate::tensor::Tensor;
use crate::training::{fit_vae, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Vae,
    Nn,
    Linear,
    Ridge,
    Knn,
    /// Predicts the training-fold target mean.
    Mean,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::Vae, Method::Nn, Method::Linear, Method::Ridge, Method::Knn, Method::Mean];

    pub fn name(self) -> &'static str {
        match self {
            Method::Vae => "vae",
            Method::Nn => "nn",
            Method::Linear => "linear",
            Method::Ridge => "ridge",
            Method::Knn => "knn",
            Method::Mean => "mean",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CvConfig {
    pub folds: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    /// Inner folds for ridge/k-NN hyperparameter selection.
    pub inner_folds: usize,
    pub model: ModelConfig,
    /// Shared by the VAE and NN; its seed is replaced per fold.
    pub train: TrainConfig,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            seed: 0,
            methods: vec![Method::Vae, Method::Nn, Method::Linear, Method::Ridge, Method::Knn],
            inner_folds: 5,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

/// Fold index of every sample: a seeded shuffle dealt round-robin into `k` folds.
pub fn kfold_assignments(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::Config(format!("{k} folds requested for {n} samples")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut derive(seed, Stream::Folds, &[n as u64, k as u64]));
    let mut assign = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        assign[i] = pos % k;
    }
    Ok(assign)
}

/// A baseline or VAE fitted on one training set, with that set's statistics.
#[derive(Clone, Debug)]
pub enum FittedMethod {
    Vae(Box<Checkpoint>),
    Nn(NnRegressor, Standardization),
    Linear(LinearModel, Standardization),
    Knn(KnnModel, Standardization),
    Mean(f64),
}

impl FittedMethod {
    pub fn predict(&self, raw_x: &Tensor) -> Result<Vec<f64>> {
        let destd = |s: &Standardization, v: Vec<f64>| v.into_iter().map(|p| s.destandardize_target(p)).collect();
        match self {
            FittedMethod::Vae(ck) => Ok(ck.predict(raw_x)?.mean),
            FittedMethod::Nn(m, s) => Ok(destd(s, m.predict(&s.transform_features(raw_x)?)?)),
            FittedMethod::Linear(m, s) => Ok(destd(s, m.predict(&s.transform_features(raw_x)?)?)),
            FittedMethod::Knn(m, s) => Ok(destd(s, m.predict(&s.transform_features(raw_x)?)?)),
            FittedMethod::Mean(v) => Ok(vec![*v; raw_x.rows()]),
        }
    }

    /// Chosen hyperparameter, for reporting.
    pub fn hyperparameter(&self) -> Option<String> {
        match self {
            FittedMethod::Linear(m, _) if m.l2_alpha > 0.0 => Some(format!("alpha={}", m.l2_alpha)),
            FittedMethod::Knn(m, _) => Some(format!("k={}", m.k)),
            _ => None,
        }
    }

    /// Canonical serialization of the fitted parameters, for equality checks.
    pub fn fingerprint(&self) -> Result<String> {
        Ok(match self {
            FittedMethod::Vae(ck) => serde_json::to_string(ck)?,
            FittedMethod::Nn(m, s) => serde_json::to_string(&(m, s))?,
            FittedMethod::Linear(m, s) => serde_json::to_string(&(m, s))?,
            FittedMethod::Knn(m, s) => serde_json::to_string(&(m, s))?,
            FittedMethod::Mean(v) => v.to_string(),
        })
    }
}

/// Fits `method` on `train` only; `seed` drives every random choice.
pub fn fit_method(train: &Dataset, method: Method, config: &CvConfig, seed: u64) -> Result<FittedMethod> {
    let mut tc = config.train.clone();
    tc.seed = seed;
    if method == Method::Vae {
        let (ck, _) = fit_vae(train, &config.model, &tc)?;
        return Ok(FittedMethod::Vae(Box::new(ck)));
    }
    let (std, stats) = train.standardize()?;
    Ok(match method {
        Method::Vae => unreachable!(),
        Method::Nn => FittedMethod::Nn(fit_nn_regressor(&std.x, &std.c, &config.model, &tc)?, stats),
        Method::Linear => FittedMethod::Linear(fit_linear(&std.x, &std.c, 0.0)?, stats),
        Method::Ridge => {
            let alpha = select_ridge_alpha(&std.x, &std.c, &RIDGE_ALPHA_GRID, config.inner_folds, seed)?;
            FittedMethod::Linear(fit_linear(&std.x, &std.c, alpha)?, stats)
        }
        Method::Knn => {
            let k = select_k(&std.x, &std.c, &KNN_K_GRID, config.inner_folds, seed)?;
            FittedMethod::Knn(fit_knn(&std.x, &std.c, k)?, stats)
        }
        Method::Mean => FittedMethod::Mean(crate::tensor::mean(&train.c)),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub r2: f64,
    pub rmse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_test: usize,
    /// Undefined (null) when the test fold's target is constant or has one row.
    pub r2: Option<f64>,
    pub rmse: f64,
    pub hyperparameter: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub per_fold: Vec<FoldResult>,
    /// Metrics of the concatenated out-of-fold predictions.
    pub pooled: Metrics,
    /// Unweighted mean of the per-fold metrics (folds with undefined R² skipped).
    pub fold_mean: Metrics,
    /// Out-of-fold prediction for every sample, in dataset order.
    pub predictions: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub n: usize,
    pub folds: usize,
    pub seed: u64,
    pub fold_assignments: Vec<usize>,
    pub fold_seeds: Vec<u64>,
    pub methods: BTreeMap<Method, MethodReport>,
}

impl CvReport {
    pub fn pooled(&self, method: Method) -> Option<Metrics> {
        self.methods.get(&method).map(|m| m.pooled)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per (method, fold), plus `pooled` and `mean` rows.
    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "method,fold,n,r2,rmse,hyperparameter")?;
        for (method, rep) in &self.methods {
            for f in &rep.per_fold {
                let r2 = f.r2.map(|v| v.to_string()).unwrap_or_default();
                let hp = f.hyperparameter.clone().unwrap_or_default();
                writeln!(out, "{method},{},{},{r2},{},{hp}", f.fold, f.n_test, f.rmse)?;
            }
            writeln!(out, "{method},pooled,{},{},{},", self.n, rep.pooled.r2, rep.pooled.rmse)?;
            writeln!(out, "{method},mean,{},{},{},", self.n, rep.fold_mean.r2, rep.fold_mean.rmse)?;
        }
        Ok(())
    }
}

pub fn fold_split(assign: &[usize], fold: usize) -> (Vec<usize>, Vec<usize>) {
    (0..assign.len()).partition(|&i| assign[i] != fold)
}

pub fn cross_validate(data: &Dataset, config: &CvConfig) -> Result<CvReport> {
    if config.methods.is_empty() {
        return Err(Error::Config("no methods selected for cross-validation".into()));
    }
    let n = data.len();
    let k = config.folds;
    let assign = kfold_assignments(n, k, config.seed)?;
    let fold_seeds: Vec<u64> = (0..k).map(|f| sub_seed(config.seed, Stream::FoldSeed, f as u64)).collect();

    let mut preds: BTreeMap<Method, Vec<f64>> = BTreeMap::new();
    let mut folds: BTreeMap<Method, Vec<FoldResult>> = BTreeMap::new();
    for fold in 0..k {
        let (train_idx, test_idx) = fold_split(&assign, fold);
        let train = data.subset(&train_idx);
        let test = data.subset(&test_idx);
        for &method in &config.methods {
            let fitted = fit_method(&train, method, config, fold_seeds[fold])?;
            let p = fitted.predict(&test.x)?;
            let out = preds.entry(method).or_insert_with(|| vec![f64::NAN; n]);
            for (&i, &v) in test_idx.iter().zip(&p) {
                out[i] = v;
            }
            folds.entry(method).or_default().push(FoldResult {
                fold,
                n_test: test_idx.len(),
                r2: r2_score(&test.c, &p).ok(),
                rmse: rmse(&test.c, &p)?,
                hyperparameter: fitted.hyperparameter(),
            });
            log::info!("fold {fold} {method}: rmse {:.4}", rmse(&test.c, &p)?);
        }
    }

    let mut methods = BTreeMap::new();
    for (method, predictions) in preds {
        let per_fold = folds.remove(&method).unwrap_or_default();
        let pooled = Metrics {
            r2: r2_score(&data.c, &predictions)?,
            rmse: rmse(&data.c, &predictions)?,
        };
        let r2s: Vec<f64> = per_fold.iter().filter_map(|f| f.r2).collect();
        let fold_mean = Metrics {
            r2: if r2s.is_empty() { f64::NAN } else { crate::tensor::mean(&r2s) },
            rmse: per_fold.iter().map(|f| f.rmse).sum::<f64>() / per_fold.len() as f64,
        };
        methods.insert(
            method,
            MethodReport {
                per_fold,
                pooled,
                fold_mean,
                predictions,
            },
        );
    }
    Ok(CvReport {
        n,
        folds: k,
        seed: config.seed,
        fold_assignments: assign,
        fold_seeds,
        methods,
    })
}
