use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{norm, Tensor};

/// Target-conditioned latent prior `p(z|c) = N(u·c, σ²I)` with `‖u‖ = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentGenerator {
    pub u: Tensor,
    /// Stored as `log σ`, shape `[1]`, so that a learnable σ stays positive.
    pub log_sigma: Tensor,
    pub learn_sigma: bool,
}

impl LatentGenerator {
    pub fn new(u: Vec<f64>, sigma: f64, learn_sigma: bool) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Constraint(format!("generator sigma must be positive, got {sigma}")));
        }
        if u.is_empty() {
            return Err(Error::Constraint("generator direction must be non-empty".into()));
        }
        let mut gen = Self {
            u: Tensor::vector(u),
            log_sigma: Tensor::vector(vec![sigma.ln()]),
            learn_sigma,
        };
        gen.renormalize_u()?;
        Ok(gen)
    }

    pub fn random(latent_dim: usize, sigma: f64, learn_sigma: bool, rng: &mut impl Rng) -> Result<Self> {
        Self::new(crate::rng::unit_vector(rng, latent_dim), sigma, learn_sigma)
    }

    pub fn latent_dim(&self) -> usize {
        self.u.len()
    }

    pub fn sigma(&self) -> f64 {
        self.log_sigma.values()[0].exp()
    }

    pub fn direction(&self) -> &[f64] {
        self.u.values()
    }

    /// Mean of `p(z|c)`: `u·c`.
    pub fn mean(&self, c: f64) -> Vec<f64> {
        self.u.values().iter().map(|u| u * c).collect()
    }

    /// Projects `u` back onto the unit sphere.
    pub fn renormalize_u(&mut self) -> Result<()> {
        let n = norm(self.u.values());
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::Constraint(format!(
                "cannot renormalize generator direction with norm {n}"
            )));
        }
        for v in self.u.values_mut() {
            *v /= n;
        }
        Ok(())
    }

    pub fn u_norm(&self) -> f64 {
        norm(self.u.values())
    }
}

pub fn generator_mean(gen: &LatentGenerator, c: f64) -> Vec<f64> {
    gen.mean(c)
}

pub fn renormalize_u(gen: &mut LatentGenerator) -> Result<()> {
    gen.renormalize_u()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_examples() {
        let gen = LatentGenerator::new(vec![1.0, 0.0, 0.0], 1.0, false).unwrap();
        assert_eq!(generator_mean(&gen, 0.0), vec![0.0, 0.0, 0.0]);
        assert_eq!(generator_mean(&gen, 5.0), vec![5.0, 0.0, 0.0]);
        let gen = LatentGenerator::new(vec![0.3, -1.2, 0.5], 1.0, false).unwrap();
        let m = generator_mean(&gen, -2.5);
        assert!((norm(&m) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn renormalize_examples() {
        let mut gen = LatentGenerator {
            u: Tensor::vector(vec![3.0, 4.0]),
            log_sigma: Tensor::vector(vec![0.0]),
            learn_sigma: false,
        };
        renormalize_u(&mut gen).unwrap();
        assert!((gen.u.values()[0] - 0.6).abs() < 1e-15);
        assert!((gen.u.values()[1] - 0.8).abs() < 1e-15);
        let once = gen.clone();
        renormalize_u(&mut gen).unwrap();
        for (a, b) in once.u.values().iter().zip(gen.u.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_direction_is_rejected() {
        assert!(matches!(
            LatentGenerator::new(vec![0.0, 0.0], 1.0, false),
            Err(Error::Constraint(_))
        ));
        assert!(LatentGenerator::new(vec![1.0], 0.0, false).is_err());
    }
}
