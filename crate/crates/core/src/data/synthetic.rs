//! Synthetic data drawn from the model's own generative process:
//! `c ~ U[lo, hi]`, `z ~ N(u·c̃, σ_z² I)`, `x = g(z) + ε`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, Provenance};
use crate::error::{Error, Result};
use crate::nn::{Activation, DenseLayer};
use crate::rng::{derive, standard_normals, unit_vector, Stream};
use crate::tensor::{norm, Tensor};

/// Hidden width of the fixed ground-truth decoder `g`.
pub const TRUTH_HIDDEN: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub n: usize,
    /// Observed feature count D.
    pub input_dim: usize,
    /// Latent dimension M.
    pub latent_dim: usize,
    pub c_range: [f64; 2],
    /// Unit age direction; drawn from `decoder_seed` when absent.
    pub u_true: Option<Vec<f64>>,
    pub sigma_z: f64,
    pub decoder_seed: u64,
    pub noise_x: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n: 500,
            input_dim: 30,
            latent_dim: 8,
            c_range: [18.0, 86.0],
            u_true: None,
            sigma_z: 0.1,
            decoder_seed: 2019,
            noise_x: 0.05,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.c_range;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Config(format!("c_range must satisfy lo < hi, got [{lo}, {hi}]")));
        }
        if self.n < 2 {
            return Err(Error::Config("synthetic n must be at least 2".into()));
        }
        if self.latent_dim == 0 || self.input_dim < self.latent_dim {
            return Err(Error::Config(format!(
                "need 1 <= latent_dim <= input_dim, got M={} D={}",
                self.latent_dim, self.input_dim
            )));
        }
        if !(self.sigma_z >= 0.0) || !(self.noise_x >= 0.0) {
            return Err(Error::Config("noise scales must be non-negative".into()));
        }
        if let Some(u) = &self.u_true {
            if u.len() != self.latent_dim {
                return Err(Error::Config(format!(
                    "u_true has length {}, latent_dim is {}",
                    u.len(),
                    self.latent_dim
                )));
            }
            if (norm(u) - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("u_true must be unit norm, has norm {}", norm(u))));
            }
        }
        Ok(())
    }

    /// Mean and standard deviation of the uniform target prior, used to form `c̃`.
    pub fn prior_moments(&self) -> (f64, f64) {
        let [lo, hi] = self.c_range;
        ((lo + hi) / 2.0, (hi - lo) / 12f64.sqrt())
    }
}

/// Generative quantities hidden from training; used by diagnostics and tests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub u_true: Vec<f64>,
    pub c_standardized: Vec<f64>,
    pub z: Tensor,
    pub decoder: Vec<DenseLayer>,
    pub prior_mean: f64,
    pub prior_std: f64,
}

impl GroundTruth {
    /// Noise-free `g(z)`.
    pub fn decode(&self, z: &Tensor) -> Result<Tensor> {
        let mut h = z.clone();
        for l in &self.decoder {
            h = l.forward(&h)?;
        }
        Ok(h)
    }

    /// Noise-free features at `z = u_true·c̃` for raw targets `c`.
    pub fn mean_features(&self, c: &[f64]) -> Result<Tensor> {
        let m = self.u_true.len();
        let mut z = Vec::with_capacity(c.len() * m);
        for &ci in c {
            let ct = (ci - self.prior_mean) / self.prior_std;
            z.extend(self.u_true.iter().map(|u| u * ct));
        }
        self.decode(&Tensor::matrix(c.len(), m, z)?)
    }

    /// Unit chord from the lowest to the highest target's mean features.
    pub fn age_effect_direction(&self, lo: f64, hi: f64) -> Result<Vec<f64>> {
        let f = self.mean_features(&[lo, hi])?;
        let diff: Vec<f64> = f.row(1).iter().zip(f.row(0)).map(|(a, b)| a - b).collect();
        let n = norm(&diff);
        if !(n > 0.0) {
            return Err(Error::Data("ground-truth age effect is zero".into()));
        }
        Ok(diff.into_iter().map(|v| v / n).collect())
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub truth: GroundTruth,
}

pub fn truth_decoder(spec: &SyntheticSpec) -> Vec<DenseLayer> {
    let mut rng = derive(spec.decoder_seed, Stream::SyntheticDecoder, &[0]);
    vec![
        DenseLayer::init(spec.latent_dim, TRUTH_HIDDEN, Activation::Tanh, &mut rng),
        DenseLayer::init(TRUTH_HIDDEN, spec.input_dim, Activation::Tanh, &mut rng),
    ]
}

pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticData> {
    spec.validate()?;
    let decoder = truth_decoder(spec);
    let u_true = match &spec.u_true {
        Some(u) => u.clone(),
        None => unit_vector(&mut derive(spec.decoder_seed, Stream::SyntheticDecoder, &[1]), spec.latent_dim),
    };
    let (prior_mean, prior_std) = spec.prior_moments();
    let [lo, hi] = spec.c_range;
    let (n, m, d) = (spec.n, spec.latent_dim, spec.input_dim);

    let mut rng = derive(seed, Stream::Synthetic, &[]);
    let c: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    let c_standardized: Vec<f64> = c.iter().map(|v| (v - prior_mean) / prior_std).collect();
    let latent_noise = standard_normals(&mut rng, n * m);
    let mut z = Vec::with_capacity(n * m);
    for (i, &ct) in c_standardized.iter().enumerate() {
        for j in 0..m {
            z.push(u_true[j] * ct + spec.sigma_z * latent_noise[i * m + j]);
        }
    }
    let z = Tensor::matrix(n, m, z)?;

    let truth = GroundTruth {
        u_true,
        c_standardized,
        z,
        decoder,
        prior_mean,
        prior_std,
    };
    let mut x = truth.decode(&truth.z)?;
    let obs_noise = standard_normals(&mut rng, n * d);
    for (v, e) in x.values_mut().iter_mut().zip(obs_noise) {
        *v += spec.noise_x * e;
    }
    let names = (0..d).map(|j| format!("x{j:02}")).collect();
    let dataset = Dataset::new(x, c, names, "age", Provenance::Synthetic)?;
    Ok(SyntheticData { dataset, truth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{dot, pearson};

    #[test]
    fn same_seed_same_bytes() {
        let spec = SyntheticSpec {
            n: 40,
            ..Default::default()
        };
        let a = generate_synthetic(&spec, 3).unwrap();
        let b = generate_synthetic(&spec, 3).unwrap();
        assert_eq!(a.dataset, b.dataset);
        let c = generate_synthetic(&spec, 4).unwrap();
        assert_ne!(a.dataset.x, c.dataset.x);
    }

    #[test]
    fn noiseless_features_are_a_function_of_the_target() {
        let spec = SyntheticSpec {
            n: 30,
            sigma_z: 0.0,
            noise_x: 0.0,
            ..Default::default()
        };
        let data = generate_synthetic(&spec, 8).unwrap();
        let expect = data.truth.mean_features(&data.dataset.c).unwrap();
        assert_eq!(expect, data.dataset.x);
    }

    #[test]
    fn latent_projection_tracks_target_at_small_noise() {
        let spec = SyntheticSpec {
            n: 1000,
            sigma_z: 1e-3,
            ..Default::default()
        };
        let data = generate_synthetic(&spec, 1).unwrap();
        let t = &data.truth;
        let proj: Vec<f64> = (0..spec.n).map(|i| dot(t.z.row(i), &t.u_true)).collect();
        assert!(pearson(&proj, &t.c_standardized).unwrap() >= 0.999);

        let spec = SyntheticSpec {
            n: 1000,
            sigma_z: 0.05,
            ..Default::default()
        };
        let data = generate_synthetic(&spec, 2).unwrap();
        let t = &data.truth;
        let proj: Vec<f64> = (0..spec.n).map(|i| dot(t.z.row(i), &t.u_true)).collect();
        assert!(pearson(&proj, &t.c_standardized).unwrap() >= 0.99);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let bad = [
            SyntheticSpec {
                c_range: [5.0, 5.0],
                ..Default::default()
            },
            SyntheticSpec {
                input_dim: 4,
                latent_dim: 8,
                ..Default::default()
            },
            SyntheticSpec {
                u_true: Some(vec![1.0; 8]),
                ..Default::default()
            },
        ];
        for spec in bad {
            assert!(generate_synthetic(&spec, 0).is_err(), "{spec:?}");
        }
    }
}
