//! Diagonal Gaussians and the per-sample terms of the supervised lower bound.

use std::f64::consts::PI;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::generator::LatentGenerator;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub(crate) const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Batch of diagonal Gaussians, `batch × dim` for both mean and log-variance.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianParams {
    pub mean: Tensor,
    pub log_var: Tensor,
}

impl GaussianParams {
    pub fn new(mean: Tensor, log_var: Tensor) -> Result<Self> {
        log_var.expect_shape(mean.shape(), "gaussian log-variance")?;
        Ok(Self { mean, log_var })
    }

    pub fn batch(&self) -> usize {
        self.mean.rows()
    }

    pub fn dim(&self) -> usize {
        self.mean.cols()
    }

    pub fn std(&self) -> Tensor {
        self.log_var.map(|lv| (0.5 * lv).exp())
    }
}

/// How `E_{q(c|x)}[KL(q(z|x) || p(z|c))]` is evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum KlMode {
    /// Exact: the inner KL is quadratic in `c`.
    #[default]
    Analytic,
    /// Average over reparametrized samples of `c`.
    Mc { samples: usize },
}

impl KlMode {
    pub fn samples(&self) -> usize {
        match self {
            KlMode::Analytic => 0,
            KlMode::Mc { samples } => *samples,
        }
    }
}

impl FromStr for KlMode {
    type Err = Error;

    /// Accepts `analytic`, `mc` (one sample) or `mc:<k>`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "analytic" => Ok(KlMode::Analytic),
            "mc" => Ok(KlMode::Mc { samples: 1 }),
            other => {
                if let Some(k) = other.strip_prefix("mc:") {
                    let samples: usize = k
                        .parse()
                        .map_err(|_| Error::Config(format!("invalid kl mode sample count in {s:?}")))?;
                    if samples == 0 {
                        return Err(Error::Config("kl mode needs at least one sample".into()));
                    }
                    Ok(KlMode::Mc { samples })
                } else {
                    Err(Error::Config(format!(
                        "invalid kl mode {s:?}: expected analytic, mc or mc:<k>"
                    )))
                }
            }
        }
    }
}

/// `mean + exp(½·log_var) ⊙ eps`.
pub fn sample_reparam(params: &GaussianParams, eps: &Tensor) -> Result<Tensor> {
    eps.expect_shape(params.mean.shape(), "reparametrization noise")?;
    let mut out = params.mean.clone();
    for ((o, &lv), &e) in out
        .values_mut()
        .iter_mut()
        .zip(params.log_var.values())
        .zip(eps.values())
    {
        *o += (0.5 * lv).exp() * e;
    }
    Ok(out)
}

/// `log N(c_true; mean, exp(log_var))`.
pub fn label_loglik(mean: f64, log_var: f64, c_true: f64) -> f64 {
    let r = c_true - mean;
    -HALF_LN_2PI - 0.5 * log_var - r * r * (-log_var).exp() * 0.5
}

/// `log N(x; x_hat, I)` averaged over the batch rows.
pub fn recon_loglik(x: &Tensor, x_hat: &Tensor) -> Result<f64> {
    x_hat.expect_shape(x.shape(), "reconstruction")?;
    let d = x.cols() as f64;
    let sq: f64 = x
        .values()
        .iter()
        .zip(x_hat.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(-0.5 * sq / x.rows() as f64 - 0.5 * d * (2.0 * PI).ln())
}

/// Closed-form `KL(N(mean, diag exp(log_var)) || N(u·c, σ²I))`.
pub fn kl_z_given_c(mean: &[f64], log_var: &[f64], gen: &LatentGenerator, c: f64) -> Result<f64> {
    let m = gen.latent_dim();
    if mean.len() != m || log_var.len() != m {
        return Err(Error::dim("posterior dimension", m, mean.len().max(log_var.len())));
    }
    Ok(kl_unchecked(mean, log_var, gen.direction(), gen.log_sigma.values()[0], c))
}

pub(crate) fn kl_unchecked(mean: &[f64], log_var: &[f64], u: &[f64], log_sigma: f64, c: f64) -> f64 {
    let inv_2s2 = 0.5 * (-2.0 * log_sigma).exp();
    let mut kl = 0.0;
    for ((&mu, &lv), &um) in mean.iter().zip(log_var).zip(u) {
        let d = mu - um * c;
        kl += log_sigma - 0.5 * lv + (lv.exp() + d * d) * inv_2s2 - 0.5;
    }
    kl
}

/// Exact expectation over `c ~ N(mean_c, exp(log_var_c))`:
/// the inner KL at `mean_c` plus `‖u‖²·var_c / (2σ²)`.
pub fn expected_kl_analytic(
    mean: &[f64],
    log_var: &[f64],
    mean_c: f64,
    log_var_c: f64,
    gen: &LatentGenerator,
) -> Result<f64> {
    let at_mean = kl_z_given_c(mean, log_var, gen, mean_c)?;
    let u_sq: f64 = gen.direction().iter().map(|u| u * u).sum();
    let sigma2 = gen.sigma().powi(2);
    Ok(at_mean + u_sq * log_var_c.exp() / (2.0 * sigma2))
}

/// Average of the inner KL over `c = mean_c + exp(½·log_var_c)·eps` for each `eps`.
pub fn expected_kl_mc(
    mean: &[f64],
    log_var: &[f64],
    mean_c: f64,
    log_var_c: f64,
    gen: &LatentGenerator,
    eps: &[f64],
) -> Result<f64> {
    if eps.is_empty() {
        return Err(Error::Config("monte-carlo KL needs at least one sample".into()));
    }
    let std_c = (0.5 * log_var_c).exp();
    let mut acc = 0.0;
    for &e in eps {
        acc += kl_z_given_c(mean, log_var, gen, mean_c + std_c * e)?;
    }
    Ok(acc / eps.len() as f64)
}

pub fn expected_kl(
    mean: &[f64],
    log_var: &[f64],
    mean_c: f64,
    log_var_c: f64,
    gen: &LatentGenerator,
    mode: KlMode,
    eps: &[f64],
) -> Result<f64> {
    match mode {
        KlMode::Analytic => expected_kl_analytic(mean, log_var, mean_c, log_var_c, gen),
        KlMode::Mc { .. } => expected_kl_mc(mean, log_var, mean_c, log_var_c, gen, eps),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive, standard_normals, Stream};
    use proptest::prelude::*;
    use rand::Rng;

    fn gen(u: Vec<f64>, sigma: f64) -> LatentGenerator {
        LatentGenerator::new(u, sigma, false).unwrap()
    }

    #[test]
    fn reparam_examples() {
        let p = GaussianParams::new(
            Tensor::from_rows(&[vec![1.0, -2.0]]).unwrap(),
            Tensor::from_rows(&[vec![0.3, 1.1]]).unwrap(),
        )
        .unwrap();
        let zero = Tensor::zeros(&[1, 2]);
        assert_eq!(sample_reparam(&p, &zero).unwrap(), p.mean);

        let std_normal = GaussianParams::new(Tensor::zeros(&[1, 2]), Tensor::zeros(&[1, 2])).unwrap();
        let e = Tensor::from_rows(&[vec![0.7, -1.3]]).unwrap();
        assert_eq!(sample_reparam(&std_normal, &e).unwrap(), e);

        assert!(sample_reparam(&p, &Tensor::zeros(&[2, 2])).is_err());
    }

    #[test]
    fn reparam_empirical_mean_within_three_standard_errors() {
        let (mu, lv) = (0.8, 0.6_f64);
        let n = 100_000;
        let p = GaussianParams::new(
            Tensor::new(vec![n, 1], vec![mu; n]).unwrap(),
            Tensor::new(vec![n, 1], vec![lv; n]).unwrap(),
        )
        .unwrap();
        let mut rng = derive(5, Stream::NoiseZ, &[]);
        let eps = Tensor::new(vec![n, 1], standard_normals(&mut rng, n)).unwrap();
        let s = sample_reparam(&p, &eps).unwrap();
        let mean = crate::tensor::mean(s.values());
        let se = (0.5 * lv).exp() / (n as f64).sqrt();
        assert!((mean - mu).abs() < 3.0 * se, "{mean} vs {mu}");
    }

    #[test]
    fn label_loglik_examples() {
        assert!((label_loglik(1.5, 0.0, 1.5) + 0.918_938_533_2).abs() < 1e-9);
        assert!((label_loglik(0.0, 0.0, 2.0) + 2.918_938_533_2).abs() < 1e-9);
        let a = label_loglik(0.0, 0.4, 0.5);
        let b = label_loglik(0.0, 0.4, 1.0);
        assert!(b < a);
    }

    #[test]
    fn label_loglik_peaks_at_truth() {
        let c = 0.37;
        let best = (-400..=400)
            .map(|i| i as f64 * 0.005)
            .max_by(|a, b| label_loglik(*a, -0.2, c).total_cmp(&label_loglik(*b, -0.2, c)))
            .unwrap();
        assert!((best - c).abs() <= 0.0025 + 1e-12);
    }

    #[test]
    fn recon_loglik_examples() {
        let x = Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let v = recon_loglik(&x, &x).unwrap();
        assert!((v + (2.0 * PI).ln()).abs() < 1e-12);
        assert!((v + 1.837_877_07).abs() < 1e-8);

        let xh = Tensor::from_rows(&[vec![-2.0, -2.0]]).unwrap();
        let v = recon_loglik(&x, &xh).unwrap();
        assert!((v - (-12.5 - (2.0 * PI).ln())).abs() < 1e-12);

        let a = Tensor::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        let b = Tensor::from_rows(&[vec![0.5, 2.5], vec![1.0, -1.0]]).unwrap();
        let swapped_a = a.select_rows(&[1, 0]);
        let swapped_b = b.select_rows(&[1, 0]);
        assert_eq!(recon_loglik(&a, &b).unwrap(), recon_loglik(&swapped_a, &swapped_b).unwrap());
        assert!(recon_loglik(&a, &x).is_err());
    }

    #[test]
    fn kl_examples() {
        let g = gen(vec![0.6, 0.8], 0.7);
        let c = 1.3;
        let mean = g.mean(c);
        let lv = vec![2.0 * 0.7_f64.ln(); 2];
        assert!(kl_z_given_c(&mean, &lv, &g, c).unwrap().abs() < 1e-12);

        let g = gen(vec![1.0, 0.0], 1.0);
        let kl = kl_z_given_c(&[1.0, 0.0], &[0.0, 0.0], &g, 2.0).unwrap();
        assert!((kl - 0.5).abs() < 1e-12);
        assert!(kl_z_given_c(&[1.0], &[0.0], &g, 2.0).is_err());
    }

    #[test]
    fn expected_kl_examples() {
        let g = gen(vec![1.0, 0.0], 1.0);
        // var_c = 1 adds u²·1/2 = 0.5
        let e = expected_kl_analytic(&[1.0, 0.0], &[0.0, 0.0], 2.0, 0.0, &g).unwrap();
        assert!((e - 1.0).abs() < 1e-12);
        // degenerate q(c|x)
        let e = expected_kl_analytic(&[1.0, 0.0], &[0.0, 0.0], 2.0, -80.0, &g).unwrap();
        assert!((e - 0.5).abs() < 1e-12);
    }

    #[test]
    fn kl_mode_parsing() {
        assert_eq!("analytic".parse::<KlMode>().unwrap(), KlMode::Analytic);
        assert_eq!("mc".parse::<KlMode>().unwrap(), KlMode::Mc { samples: 1 });
        assert_eq!("MC:16".parse::<KlMode>().unwrap(), KlMode::Mc { samples: 16 });
        assert!("sampled".parse::<KlMode>().is_err());
        assert!("mc:0".parse::<KlMode>().is_err());
    }

    #[test]
    fn kl_is_non_negative_on_fuzzed_inputs() {
        let mut rng = derive(99, Stream::Init, &[]);
        for _ in 0..10_000 {
            let m = rng.random_range(1..6);
            let u = standard_normals(&mut rng, m);
            let g = LatentGenerator::new(u, rng.random_range(0.1..3.0), false).unwrap();
            let mean: Vec<f64> = standard_normals(&mut rng, m).iter().map(|v| v * 3.0).collect();
            let lv: Vec<f64> = (0..m).map(|_| rng.random_range(-4.0..4.0)).collect();
            let c = rng.random_range(-3.0..3.0);
            assert!(kl_z_given_c(&mean, &lv, &g, c).unwrap() >= -1e-12);
        }
    }

    proptest! {
        #[test]
        fn expected_kl_reduces_to_inner_kl_when_var_c_vanishes(
            m0 in -3.0..3.0f64, m1 in -3.0..3.0f64, lv0 in -3.0..3.0f64, lv1 in -3.0..3.0f64,
            u0 in 0.1..2.0f64, u1 in -2.0..2.0f64, c in -2.0..2.0f64,
        ) {
            let g = gen(vec![u0, u1], 1.0);
            let inner = kl_z_given_c(&[m0, m1], &[lv0, lv1], &g, c).unwrap();
            let e = expected_kl_analytic(&[m0, m1], &[lv0, lv1], c, -60.0, &g).unwrap();
            prop_assert!((inner - e).abs() < 1e-12);
            prop_assert!(e >= inner);
        }
    }
}
