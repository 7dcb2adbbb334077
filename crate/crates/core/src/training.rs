//! Seeded minibatch training of the regression VAE.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{Checkpoint, ElboTerms, KlMode, LossSettings, ModelConfig, TermWeights, VaeRegressor};
use crate::nn::{AdamConfig, AdamState, GradientTape, Parameterized};
use crate::rng::{derive, standard_normals, Stream};
use crate::tensor::Tensor;

/// Gradient magnitude above which a warning is logged.
pub const GRAD_WARN_THRESHOLD: f64 = 1e3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lambda_l2: f64,
    pub seed: u64,
    pub kl_mode: KlMode,
    pub log_every: usize,
    pub term_weights: TermWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 32,
            learning_rate: 1e-3,
            lambda_l2: 0.0,
            seed: 0,
            kl_mode: KlMode::Analytic,
            log_every: 50,
            term_weights: TermWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.batch_size == 0 || self.log_every == 0 {
            return Err(Error::Config("batch_size and log_every must be positive".into()));
        }
        if self.batch_size > n {
            return Err(Error::Config(format!(
                "batch_size {} exceeds dataset size {n}",
                self.batch_size
            )));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite())
            || !(self.lambda_l2 >= 0.0 && self.lambda_l2.is_finite())
        {
            return Err(Error::Config("learning_rate and lambda_l2 must be finite and non-negative".into()));
        }
        if let KlMode::Mc { samples: 0 } = self.kl_mode {
            return Err(Error::Config("mc kl mode needs at least one sample".into()));
        }
        Ok(())
    }

    pub fn loss_settings(&self) -> LossSettings {
        LossSettings {
            lambda_l2: self.lambda_l2,
            kl_mode: self.kl_mode,
            weights: self.term_weights,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            ..AdamConfig::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub terms: ElboTerms,
    pub u_norm: f64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<EpochRecord>,
}

impl TrainTrace {
    pub fn totals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.terms.total_loss).collect()
    }

    /// Equality ignoring wall-clock times.
    pub fn same_values(&self, other: &TrainTrace) -> bool {
        self.records.len() == other.records.len()
            && self
                .records
                .iter()
                .zip(&other.records)
                .all(|(a, b)| a.epoch == b.epoch && a.terms == b.terms && a.u_norm == b.u_norm)
    }

    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "epoch,label_loglik,recon_loglik,expected_kl,l2,total,wall_ms")?;
        for r in &self.records {
            let t = &r.terms;
            writeln!(
                out,
                "{},{},{},{},{},{},{:.3}",
                r.epoch, t.label_loglik, t.recon_loglik, t.expected_kl, t.l2_penalty, t.total_loss, r.wall_ms
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(&mut f).map_err(|e| Error::io(path, e))
    }
}

/// Permutation of `0..n` determined by `(n, epoch, seed)`.
pub fn shuffle_indices(n: usize, epoch: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = derive(seed, Stream::Shuffle, &[n as u64, epoch as u64]);
    idx.shuffle(&mut rng);
    idx
}

/// Shuffled minibatches for one epoch; the last partial batch is kept.
pub fn minibatches(n: usize, batch_size: usize, epoch: usize, seed: u64) -> Vec<Vec<usize>> {
    shuffle_indices(n, epoch, seed)
        .chunks(batch_size)
        .map(<[usize]>::to_vec)
        .collect()
}

/// Noise for one minibatch, from streams keyed by `(seed, epoch, batch)`.
pub fn batch_noise(
    seed: u64,
    epoch: usize,
    batch: usize,
    rows: usize,
    latent_dim: usize,
    kl_mode: KlMode,
) -> (Tensor, Option<Tensor>) {
    let key = [epoch as u64, batch as u64];
    let mut rz = derive(seed, Stream::NoiseZ, &key);
    let eps_z = Tensor::new(vec![rows, latent_dim], standard_normals(&mut rz, rows * latent_dim))
        .expect("noise shape is consistent");
    let eps_c = match kl_mode {
        KlMode::Analytic => None,
        KlMode::Mc { samples } => {
            let mut rc = derive(seed, Stream::NoiseC, &key);
            Some(
                Tensor::new(vec![rows, samples], standard_normals(&mut rc, rows * samples))
                    .expect("noise shape is consistent"),
            )
        }
    };
    (eps_z, eps_c)
}

/// Trains on an already standardized dataset.
pub fn train(mut model: VaeRegressor, data: &Dataset, config: &TrainConfig) -> Result<(VaeRegressor, TrainTrace)> {
    config.validate(data.len())?;
    if data.dim() != model.input_dim() {
        return Err(Error::dim("training features", model.input_dim(), data.dim()));
    }
    let settings = config.loss_settings();
    let mut adam = AdamState::new(config.adam(), &model);
    let mut tape = GradientTape::for_params(&model);
    let mut trace = TrainTrace::default();
    let m = model.latent_dim();

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let mut acc = ElboTerms::default();
        for (b, idx) in minibatches(data.len(), config.batch_size, epoch, config.seed)
            .iter()
            .enumerate()
        {
            let x = data.x.select_rows(idx);
            let c: Vec<f64> = idx.iter().map(|&i| data.c[i]).collect();
            let (eps_z, eps_c) = batch_noise(config.seed, epoch, b, idx.len(), m, config.kl_mode);
            tape.zero();
            let terms = model
                .loss_and_grad(&x, &c, &eps_z, eps_c.as_ref(), &settings, &mut tape)
                .map_err(|e| Error::Training(format!("epoch {epoch} batch {b}: {e}")))?;
            let max_grad = tape.max_abs();
            if max_grad > GRAD_WARN_THRESHOLD {
                log::warn!("epoch {epoch} batch {b}: max |grad| = {max_grad:.3e}");
            }
            adam.step(&mut model, &tape)
                .map_err(|e| Error::Training(format!("epoch {epoch} batch {b}: {e}")))?;
            model.generator.renormalize_u()?;

            let w = idx.len() as f64 / data.len() as f64;
            acc.label_loglik += w * terms.label_loglik;
            acc.recon_loglik += w * terms.recon_loglik;
            acc.expected_kl += w * terms.expected_kl;
            acc.l2_penalty += w * terms.l2_penalty;
            acc.total_loss += w * terms.total_loss;
        }
        let record = EpochRecord {
            epoch,
            terms: acc,
            u_norm: model.generator.u_norm(),
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        };
        if (epoch + 1) % config.log_every == 0 {
            log::info!(
                "epoch {:>4} total {:.4} label {:.4} recon {:.4} kl {:.4}",
                epoch + 1,
                acc.total_loss,
                acc.label_loglik,
                acc.recon_loglik,
                acc.expected_kl
            );
        }
        trace.records.push(record);
    }
    Ok((model, trace))
}

/// Fits standardization on `raw`, initializes from `config.seed`, trains, and packages a checkpoint.
pub fn fit_vae(raw: &Dataset, model_config: &ModelConfig, config: &TrainConfig) -> Result<(Checkpoint, TrainTrace)> {
    let (data, stats) = raw.standardize()?;
    let mut arch = model_config.clone();
    arch.input_dim = raw.dim();
    let model = VaeRegressor::new(&arch, &mut derive(config.seed, Stream::Init, &[]))?;
    let (model, trace) = train(model, &data, config)?;
    let ck = Checkpoint::new(
        arch,
        config.seed,
        raw.feature_names.clone(),
        raw.target_name.clone(),
        stats,
        model,
    );
    Ok((ck, trace))
}

/// Number of trainable scalars, for logging.
pub fn parameter_count(model: &VaeRegressor) -> usize {
    model.parameter_count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shuffle_examples() {
        assert_eq!(shuffle_indices(1, 0, 9), vec![0]);
        let p = shuffle_indices(50, 3, 9);
        let mut s = p.clone();
        s.sort_unstable();
        assert_eq!(s, (0..50).collect::<Vec<_>>());
        assert_eq!(p, shuffle_indices(50, 3, 9));
        assert_ne!(shuffle_indices(16, 0, 9), shuffle_indices(16, 1, 9));
    }

    #[test]
    fn minibatches_keep_partial_batch() {
        let b = minibatches(10, 4, 0, 1);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 2]);
    }

    #[test]
    fn config_validation() {
        let c = TrainConfig {
            batch_size: 64,
            ..Default::default()
        };
        assert!(c.validate(10).is_err());
        assert!(TrainConfig::default().validate(500).is_ok());
    }
}
