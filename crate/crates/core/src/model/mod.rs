//! Regression VAE: a probabilistic encoder `q(z|x)` and regressor `q(c|x)`
//! sharing one trunk, a Gaussian decoder `p(x|z)`, and a target-conditioned
//! latent generator `p(z|c)`.
//!
//! The training objective per sample is the supervised lower bound
//!
//! ```text
//! log q(c|x) + E_q(z|x)[log p(x|z)] - E_q(c|x)[KL(q(z|x) || p(z|c))]
//! ```
//!
//! and everything is differentiated by hand in [`VaeRegressor::loss_and_grad`].

pub mod checkpoint;
pub mod gaussian;
pub mod generator;

pub use checkpoint::Checkpoint;
pub use gaussian::{
    expected_kl, expected_kl_analytic, expected_kl_mc, kl_z_given_c, label_loglik, recon_loglik,
    sample_reparam, GaussianParams, KlMode,
};
pub use generator::{generator_mean, renormalize_u, LatentGenerator};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layer::{backward_stack, forward_stack};
use crate::nn::{Activation, DenseLayer, GradientTape, Parameterized};
use crate::tensor::Tensor;
use gaussian::{kl_unchecked, HALF_LN_2PI};

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub input_dim: usize,
    /// Widths of the shared trunk; the decoder mirrors them in reverse.
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    pub activation: Activation,
    pub sigma: f64,
    pub learn_sigma: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_dim: 1,
            hidden: vec![128, 32],
            latent_dim: 8,
            activation: Activation::Tanh,
            sigma: 1.0,
            learn_sigma: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.latent_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be positive, got {}", self.sigma)));
        }
        Ok(())
    }
}

/// Weights on the three bound terms.
///
/// A zero `label` weight disconnects the regressor entirely: the KL term is
/// then taken against `p(z|c=0) = N(0, σ²I)`, which is a plain VAE.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermWeights {
    pub label: f64,
    pub recon: f64,
    pub kl: f64,
}

impl Default for TermWeights {
    fn default() -> Self {
        Self {
            label: 1.0,
            recon: 1.0,
            kl: 1.0,
        }
    }
}

impl TermWeights {
    pub fn traditional_vae() -> Self {
        Self {
            label: 0.0,
            recon: 1.0,
            kl: 1.0,
        }
    }

    fn regressor_connected(&self) -> bool {
        self.label != 0.0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossSettings {
    pub lambda_l2: f64,
    pub kl_mode: KlMode,
    pub weights: TermWeights,
}

/// Batch means of each bound term plus the penalty.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ElboTerms {
    pub label_loglik: f64,
    pub recon_loglik: f64,
    pub expected_kl: f64,
    pub l2_penalty: f64,
    pub total_loss: f64,
}

impl ElboTerms {
    fn check_finite(&self) -> Result<()> {
        let named = [
            ("label_loglik", self.label_loglik),
            ("recon_loglik", self.recon_loglik),
            ("expected_kl", self.expected_kl),
            ("l2_penalty", self.l2_penalty),
            ("total_loss", self.total_loss),
        ];
        if let Some((name, v)) = named.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Training(format!("non-finite loss term {name} = {v} ({self:?})")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaeRegressor {
    pub trunk: Vec<DenseLayer>,
    pub encoder_mean: DenseLayer,
    pub encoder_logvar: DenseLayer,
    /// Two outputs: mean and log-variance of `q(c|x)`.
    pub regressor_head: DenseLayer,
    pub decoder: Vec<DenseLayer>,
    pub generator: LatentGenerator,
}

impl VaeRegressor {
    pub fn new(config: &ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let act = config.activation;
        let mut trunk = Vec::new();
        let mut prev = config.input_dim;
        for &h in &config.hidden {
            trunk.push(DenseLayer::init(prev, h, act, rng));
            prev = h;
        }
        let feat = prev;
        let encoder_mean = DenseLayer::init(feat, config.latent_dim, Activation::Identity, rng);
        let encoder_logvar = DenseLayer::init(feat, config.latent_dim, Activation::Identity, rng);
        let regressor_head = DenseLayer::init(feat, 2, Activation::Identity, rng);

        let mut decoder = Vec::new();
        let mut prev = config.latent_dim;
        for &h in config.hidden.iter().rev() {
            decoder.push(DenseLayer::init(prev, h, act, rng));
            prev = h;
        }
        decoder.push(DenseLayer::init(prev, config.input_dim, Activation::Identity, rng));

        let generator = LatentGenerator::random(config.latent_dim, config.sigma, config.learn_sigma, rng)?;
        Ok(Self {
            trunk,
            encoder_mean,
            encoder_logvar,
            regressor_head,
            decoder,
            generator,
        })
    }

    /// Same architecture with every weight and bias zero (generator untouched).
    pub fn zeroed(&self) -> Self {
        let z = |l: &DenseLayer| DenseLayer::zeros(l.in_dim(), l.out_dim(), l.activation);
        Self {
            trunk: self.trunk.iter().map(z).collect(),
            encoder_mean: z(&self.encoder_mean),
            encoder_logvar: z(&self.encoder_logvar),
            regressor_head: z(&self.regressor_head),
            decoder: self.decoder.iter().map(z).collect(),
            generator: self.generator.clone(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.first().unwrap_or(&self.encoder_mean).in_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.generator.latent_dim()
    }

    /// Checks the wiring invariants between layers.
    pub fn validate(&self) -> Result<()> {
        let mut prev = self.input_dim();
        for l in &self.trunk {
            if l.in_dim() != prev {
                return Err(Error::dim("trunk layer input", prev, l.in_dim()));
            }
            prev = l.out_dim();
        }
        for (name, head) in [
            ("encoder mean head", &self.encoder_mean),
            ("encoder logvar head", &self.encoder_logvar),
            ("regressor head", &self.regressor_head),
        ] {
            if head.in_dim() != prev {
                return Err(Error::dim(name, prev, head.in_dim()));
            }
        }
        let m = self.latent_dim();
        if self.encoder_mean.out_dim() != m || self.encoder_logvar.out_dim() != m {
            return Err(Error::dim("encoder head output", m, self.encoder_mean.out_dim()));
        }
        if self.regressor_head.out_dim() != 2 {
            return Err(Error::dim("regressor head output", 2, self.regressor_head.out_dim()));
        }
        let mut prev = m;
        for l in &self.decoder {
            if l.in_dim() != prev {
                return Err(Error::dim("decoder layer input", prev, l.in_dim()));
            }
            prev = l.out_dim();
        }
        if prev != self.input_dim() {
            return Err(Error::dim("decoder output", self.input_dim(), prev));
        }
        Ok(())
    }

    fn trunk_features(&self, x: &Tensor) -> Result<Tensor> {
        if x.shape().len() != 2 || x.cols() != self.input_dim() {
            return Err(Error::dim(
                "model input",
                format!("[batch, {}]", self.input_dim()),
                format!("{:?}", x.shape()),
            ));
        }
        let mut h = x.clone();
        for l in &self.trunk {
            h = l.forward(&h)?;
        }
        Ok(h)
    }

    /// `q(z|x)`: mean and log-variance, `batch × M` each.
    pub fn encode(&self, x: &Tensor) -> Result<GaussianParams> {
        let h = self.trunk_features(x)?;
        GaussianParams::new(self.encoder_mean.forward(&h)?, self.encoder_logvar.forward(&h)?)
    }

    /// `q(c|x)` in standardized target units: `batch × 1` mean and log-variance.
    pub fn regress(&self, x: &Tensor) -> Result<GaussianParams> {
        let h = self.trunk_features(x)?;
        let out = self.regressor_head.forward(&h)?;
        let n = out.rows();
        GaussianParams::new(
            Tensor::matrix(n, 1, out.column(0))?,
            Tensor::matrix(n, 1, out.column(1))?,
        )
    }

    /// Reconstruction mean `f(z; θ)`.
    pub fn decode(&self, z: &Tensor) -> Result<Tensor> {
        if z.shape().len() != 2 || z.cols() != self.latent_dim() {
            return Err(Error::dim(
                "decoder input",
                format!("[batch, {}]", self.latent_dim()),
                format!("{:?}", z.shape()),
            ));
        }
        let mut h = z.clone();
        for l in &self.decoder {
            h = l.forward(&h)?;
        }
        Ok(h)
    }

    fn dense_layers(&self) -> impl Iterator<Item = &DenseLayer> {
        self.trunk
            .iter()
            .chain([&self.encoder_mean, &self.encoder_logvar, &self.regressor_head])
            .chain(self.decoder.iter())
    }

    /// Loss terms without gradients.
    pub fn loss(
        &self,
        x: &Tensor,
        c: &[f64],
        eps_z: &Tensor,
        eps_c: Option<&Tensor>,
        settings: &LossSettings,
    ) -> Result<ElboTerms> {
        self.evaluate(x, c, eps_z, eps_c, settings, None)
    }

    /// Loss terms and the exact gradient of `total_loss`, accumulated into `tape`.
    pub fn loss_and_grad(
        &self,
        x: &Tensor,
        c: &[f64],
        eps_z: &Tensor,
        eps_c: Option<&Tensor>,
        settings: &LossSettings,
        tape: &mut GradientTape,
    ) -> Result<ElboTerms> {
        self.evaluate(x, c, eps_z, eps_c, settings, Some(tape))
    }

    fn evaluate(
        &self,
        x: &Tensor,
        c: &[f64],
        eps_z: &Tensor,
        eps_c: Option<&Tensor>,
        settings: &LossSettings,
        tape: Option<&mut GradientTape>,
    ) -> Result<ElboTerms> {
        let batch = x.rows();
        let m = self.latent_dim();
        if c.len() != batch {
            return Err(Error::dim("target batch", batch, c.len()));
        }
        eps_z.expect_shape(&[batch, m], "latent noise")?;
        let k = settings.kl_mode.samples();
        let eps_c = match settings.kl_mode {
            KlMode::Analytic => None,
            KlMode::Mc { samples } => {
                let e = eps_c.ok_or_else(|| Error::Config("mc kl mode requires target noise".into()))?;
                e.expect_shape(&[batch, samples], "target noise")?;
                Some(e)
            }
        };
        let TermWeights {
            label: w_label,
            recon: w_recon,
            kl: w_kl,
        } = settings.weights;
        let connected = settings.weights.regressor_connected();

        // forward
        if x.shape().len() != 2 || x.cols() != self.input_dim() {
            return Err(Error::dim(
                "model input",
                format!("[batch, {}]", self.input_dim()),
                format!("{:?}", x.shape()),
            ));
        }
        let trunk_caches = forward_stack(&self.trunk, x)?;
        let h = trunk_caches.last().map(|c| &c.output).unwrap_or(x);
        let mean_cache = self.encoder_mean.forward_cached(h)?;
        let logvar_cache = self.encoder_logvar.forward_cached(h)?;
        let reg_cache = self.regressor_head.forward_cached(h)?;
        let mu_z = &mean_cache.output;
        let lv_z = &logvar_cache.output;
        let reg = &reg_cache.output;

        let mut z = mu_z.clone();
        for ((zv, &lv), &e) in z.values_mut().iter_mut().zip(lv_z.values()).zip(eps_z.values()) {
            *zv += (0.5 * lv).exp() * e;
        }
        let dec_caches = forward_stack(&self.decoder, &z)?;
        let x_hat = &dec_caches.last().expect("decoder has an output layer").output;

        let u = self.generator.direction();
        let log_sigma = self.generator.log_sigma.values()[0];
        let inv_s2 = (-2.0 * log_sigma).exp();
        let u_sq: f64 = u.iter().map(|v| v * v).sum();
        let d = x.cols() as f64;
        let inv_b = 1.0 / batch as f64;

        let mut sum_label = 0.0;
        let mut sum_recon = 0.0;
        let mut sum_kl = 0.0;

        // gradients of total_loss w.r.t. intermediate quantities
        let want_grad = tape.is_some();
        let mut g_mu_z = Tensor::zeros(&[batch, m]);
        let mut g_lv_z = Tensor::zeros(&[batch, m]);
        let mut g_reg = Tensor::zeros(&[batch, 2]);
        let mut g_xhat = Tensor::zeros(&[batch, x.cols()]);
        let mut g_u = vec![0.0; m];
        let mut g_log_sigma = 0.0;

        for i in 0..batch {
            let (mu_c, lv_c) = if connected {
                (reg.get(i, 0), reg.get(i, 1))
            } else {
                (0.0, f64::NEG_INFINITY)
            };
            let var_c = lv_c.exp();
            let mu = mu_z.row(i);
            let lv = lv_z.row(i);

            // label term
            let r = c[i] - mu_c;
            let inv_var_c = (-lv_c).exp();
            if connected {
                sum_label += -HALF_LN_2PI - 0.5 * lv_c - 0.5 * r * r * inv_var_c;
            } else {
                let (mc, lvc) = (reg.get(i, 0), reg.get(i, 1));
                sum_label += gaussian::label_loglik(mc, lvc, c[i]);
            }

            // reconstruction term
            let xr = x.row(i);
            let xh = x_hat.row(i);
            let sq: f64 = xr.iter().zip(xh).map(|(a, b)| (a - b) * (a - b)).sum();
            sum_recon += -0.5 * sq - 0.5 * d * (2.0 * std::f64::consts::PI).ln();

            // KL term
            let kl_i = match eps_c {
                None => {
                    let var_part = if connected { 0.5 * u_sq * var_c * inv_s2 } else { 0.0 };
                    kl_unchecked(mu, lv, u, log_sigma, mu_c) + var_part
                }
                Some(e) => {
                    let std_c = if connected { (0.5 * lv_c).exp() } else { 0.0 };
                    e.row(i)
                        .iter()
                        .map(|&ek| kl_unchecked(mu, lv, u, log_sigma, mu_c + std_c * ek))
                        .sum::<f64>()
                        / k as f64
                }
            };
            sum_kl += kl_i;

            if !want_grad {
                continue;
            }

            // d total / d x_hat = -w_recon/B · (x - x_hat)
            for ((g, a), b) in g_xhat.row_mut(i).iter_mut().zip(xr).zip(xh) {
                *g = -w_recon * inv_b * (a - b);
            }

            let mut g_mu_c = 0.0;
            let mut g_lv_c = 0.0;
            if connected {
                g_mu_c += -w_label * inv_b * r * inv_var_c;
                g_lv_c += -w_label * inv_b * (-0.5 + 0.5 * r * r * inv_var_c);
            }

            let kscale = w_kl * inv_b;
            let gmu = g_mu_z.row_mut(i);
            let mut q_sum = 0.0;
            match eps_c {
                None => {
                    for j in 0..m {
                        let dv = mu[j] - u[j] * mu_c;
                        gmu[j] += kscale * dv * inv_s2;
                        g_mu_c += kscale * (-u[j] * dv * inv_s2);
                        g_u[j] += kscale * (-mu_c * dv * inv_s2);
                        if connected {
                            g_u[j] += kscale * u[j] * var_c * inv_s2;
                        }
                        q_sum += lv[j].exp() + dv * dv;
                    }
                    if connected {
                        g_lv_c += kscale * 0.5 * u_sq * var_c * inv_s2;
                        q_sum += u_sq * var_c;
                    }
                }
                Some(e) => {
                    let std_c = if connected { (0.5 * lv_c).exp() } else { 0.0 };
                    let inv_k = 1.0 / k as f64;
                    for &ek in e.row(i) {
                        let ck = mu_c + std_c * ek;
                        let mut g_ck = 0.0;
                        for j in 0..m {
                            let dv = mu[j] - u[j] * ck;
                            gmu[j] += kscale * inv_k * dv * inv_s2;
                            g_ck += -u[j] * dv * inv_s2;
                            g_u[j] += kscale * inv_k * (-ck * dv * inv_s2);
                            q_sum += inv_k * dv * dv;
                        }
                        g_mu_c += kscale * inv_k * g_ck;
                        g_lv_c += kscale * inv_k * g_ck * 0.5 * std_c * ek;
                    }
                    q_sum += lv.iter().map(|v| v.exp()).sum::<f64>();
                }
            }
            let glv = g_lv_z.row_mut(i);
            for j in 0..m {
                glv[j] += kscale * (-0.5 + 0.5 * lv[j].exp() * inv_s2);
            }
            // d/d log σ of Σ_j [log σ + Q_j / (2σ²)]
            g_log_sigma += kscale * (m as f64 - q_sum * inv_s2);

            if connected {
                g_reg.set(i, 0, g_mu_c);
                g_reg.set(i, 1, g_lv_c);
            }
        }

        let l2 = self.weight_norm_sq();
        let mut terms = ElboTerms {
            label_loglik: sum_label * inv_b,
            recon_loglik: sum_recon * inv_b,
            expected_kl: sum_kl * inv_b,
            l2_penalty: settings.lambda_l2 * l2,
            total_loss: 0.0,
        };
        terms.total_loss = -(w_label * terms.label_loglik + w_recon * terms.recon_loglik - w_kl * terms.expected_kl)
            + terms.l2_penalty;
        terms.check_finite()?;

        let Some(tape) = tape else {
            return Ok(terms);
        };

        // backward through decoder into z, then into the encoder heads
        let (dec_grads, g_z) = backward_stack(&self.decoder, &dec_caches, g_xhat)?;
        for idx in 0..batch * m {
            let gz = g_z.values()[idx];
            let lv = lv_z.values()[idx];
            let e = eps_z.values()[idx];
            g_mu_z.values_mut()[idx] += gz;
            g_lv_z.values_mut()[idx] += gz * e * 0.5 * (0.5 * lv).exp();
        }
        let mean_grads = self.encoder_mean.backward_cached(&mean_cache, &g_mu_z)?;
        let logvar_grads = self.encoder_logvar.backward_cached(&logvar_cache, &g_lv_z)?;
        let reg_grads = self.regressor_head.backward_cached(&reg_cache, &g_reg)?;
        let mut g_h = mean_grads.input.clone();
        g_h.add_assign(&logvar_grads.input)?;
        g_h.add_assign(&reg_grads.input)?;
        let (trunk_grads, _) = backward_stack(&self.trunk, &trunk_caches, g_h)?;

        let l2_scale = 2.0 * settings.lambda_l2;
        let mut idx = 0;
        let mut push = |tape: &mut GradientTape, w: &Tensor, gw: &Tensor, gb: &Tensor| -> Result<()> {
            let mut gw = gw.clone();
            if l2_scale != 0.0 {
                for (g, wv) in gw.values_mut().iter_mut().zip(w.values()) {
                    *g += l2_scale * wv;
                }
            }
            tape.accumulate(idx, &gw)?;
            tape.accumulate(idx + 1, gb)?;
            idx += 2;
            Ok(())
        };
        for (l, g) in self.trunk.iter().zip(&trunk_grads) {
            push(tape, &l.weights, &g.weights, &g.bias)?;
        }
        push(tape, &self.encoder_mean.weights, &mean_grads.weights, &mean_grads.bias)?;
        push(tape, &self.encoder_logvar.weights, &logvar_grads.weights, &logvar_grads.bias)?;
        push(tape, &self.regressor_head.weights, &reg_grads.weights, &reg_grads.bias)?;
        for (l, g) in self.decoder.iter().zip(&dec_grads) {
            push(tape, &l.weights, &g.weights, &g.bias)?;
        }
        tape.accumulate(idx, &Tensor::vector(g_u))?;
        if self.generator.learn_sigma {
            tape.accumulate(idx + 1, &Tensor::vector(vec![g_log_sigma]))?;
        }
        tape.loss += terms.total_loss;
        Ok(terms)
    }
}

impl Parameterized for VaeRegressor {
    fn parameters(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, l) in self.trunk.iter().enumerate() {
            out.push((format!("trunk.{i}.weights"), &l.weights));
            out.push((format!("trunk.{i}.bias"), &l.bias));
        }
        for (name, l) in [
            ("encoder_mean", &self.encoder_mean),
            ("encoder_logvar", &self.encoder_logvar),
            ("regressor", &self.regressor_head),
        ] {
            out.push((format!("{name}.weights"), &l.weights));
            out.push((format!("{name}.bias"), &l.bias));
        }
        for (i, l) in self.decoder.iter().enumerate() {
            out.push((format!("decoder.{i}.weights"), &l.weights));
            out.push((format!("decoder.{i}.bias"), &l.bias));
        }
        out.push(("generator.u".into(), &self.generator.u));
        if self.generator.learn_sigma {
            out.push(("generator.log_sigma".into(), &self.generator.log_sigma));
        }
        out
    }

    fn parameters_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for (i, l) in self.trunk.iter_mut().enumerate() {
            out.push((format!("trunk.{i}.weights"), &mut l.weights));
            out.push((format!("trunk.{i}.bias"), &mut l.bias));
        }
        for (name, l) in [
            ("encoder_mean", &mut self.encoder_mean),
            ("encoder_logvar", &mut self.encoder_logvar),
            ("regressor", &mut self.regressor_head),
        ] {
            out.push((format!("{name}.weights"), &mut l.weights));
            out.push((format!("{name}.bias"), &mut l.bias));
        }
        for (i, l) in self.decoder.iter_mut().enumerate() {
            out.push((format!("decoder.{i}.weights"), &mut l.weights));
            out.push((format!("decoder.{i}.bias"), &mut l.bias));
        }
        out.push(("generator.u".into(), &mut self.generator.u));
        if self.generator.learn_sigma {
            out.push(("generator.log_sigma".into(), &mut self.generator.log_sigma));
        }
        out
    }

    fn weight_norm_sq(&self) -> f64 {
        self.dense_layers().map(|l| l.weights.sum_squares()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{grad_check, GradCheckConfig};
    use crate::rng::{derive, standard_normals, Stream};

    fn small_config(learn_sigma: bool) -> ModelConfig {
        ModelConfig {
            input_dim: 5,
            hidden: vec![6, 4],
            latent_dim: 3,
            sigma: 0.8,
            learn_sigma,
            ..Default::default()
        }
    }

    struct Batch {
        x: Tensor,
        c: Vec<f64>,
        eps_z: Tensor,
        eps_c: Tensor,
    }

    fn batch(seed: u64, rows: usize, d: usize, m: usize, k: usize) -> Batch {
        let mut rng = derive(seed, Stream::Synthetic, &[]);
        Batch {
            x: Tensor::matrix(rows, d, standard_normals(&mut rng, rows * d)).unwrap(),
            c: standard_normals(&mut rng, rows),
            eps_z: Tensor::matrix(rows, m, standard_normals(&mut rng, rows * m)).unwrap(),
            eps_c: Tensor::matrix(rows, k, standard_normals(&mut rng, rows * k)).unwrap(),
        }
    }

    fn check_gradients(settings: LossSettings, learn_sigma: bool) {
        let model = VaeRegressor::new(&small_config(learn_sigma), &mut derive(21, Stream::Init, &[])).unwrap();
        let b = batch(4, 4, 5, 3, settings.kl_mode.samples().max(1));
        let mut tape = GradientTape::for_params(&model);
        model
            .loss_and_grad(&b.x, &b.c, &b.eps_z, Some(&b.eps_c), &settings, &mut tape)
            .unwrap();
        let rep = grad_check(
            |p| {
                let mut m = model.clone();
                m.load_flat(p).unwrap();
                m.loss(&b.x, &b.c, &b.eps_z, Some(&b.eps_c), &settings).unwrap().total_loss
            },
            &model.flatten(),
            &tape.flatten(),
            &GradCheckConfig::default(),
        );
        assert!(rep.passed, "{settings:?}: {rep:?}");
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        check_gradients(
            LossSettings {
                lambda_l2: 0.01,
                ..Default::default()
            },
            true,
        );
    }

    #[test]
    fn mc_gradient_matches_finite_differences() {
        check_gradients(
            LossSettings {
                kl_mode: KlMode::Mc { samples: 3 },
                ..Default::default()
            },
            true,
        );
    }

    #[test]
    fn weighted_and_vae_gradients_match_finite_differences() {
        check_gradients(
            LossSettings {
                weights: TermWeights {
                    label: 0.5,
                    recon: 2.0,
                    kl: 0.25,
                },
                ..Default::default()
            },
            false,
        );
        check_gradients(
            LossSettings {
                weights: TermWeights::traditional_vae(),
                ..Default::default()
            },
            false,
        );
    }

    #[test]
    fn zero_network_outputs() {
        let model = VaeRegressor::new(&small_config(false), &mut derive(1, Stream::Init, &[]))
            .unwrap()
            .zeroed();
        let b = batch(2, 7, 5, 3, 1);
        let q = model.encode(&b.x).unwrap();
        assert_eq!(q.mean.shape(), &[7, 3]);
        assert_eq!(q.log_var.shape(), &[7, 3]);
        assert!(q.mean.values().iter().chain(q.log_var.values()).all(|&v| v == 0.0));
        let r = model.regress(&b.x).unwrap();
        assert_eq!(r.mean.shape(), &[7, 1]);
        assert_eq!(r.log_var.shape(), &[7, 1]);
        assert!(r.mean.values().iter().all(|&v| v == 0.0));
        let xh = model.decode(&b.eps_z).unwrap();
        assert_eq!(xh.shape(), &[7, 5]);
        assert!(xh.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_errors() {
        let model = VaeRegressor::new(&small_config(false), &mut derive(1, Stream::Init, &[])).unwrap();
        assert!(model.encode(&Tensor::zeros(&[2, 4])).is_err());
        assert!(model.decode(&Tensor::zeros(&[2, 5])).is_err());
        let b = batch(2, 3, 5, 3, 1);
        assert!(model
            .loss(&b.x, &b.c[..2], &b.eps_z, None, &LossSettings::default())
            .is_err());
        let mc = LossSettings {
            kl_mode: KlMode::Mc { samples: 2 },
            ..Default::default()
        };
        assert!(model.loss(&b.x, &b.c, &b.eps_z, None, &mc).is_err());
    }

    #[test]
    fn encoding_is_deterministic() {
        let a = VaeRegressor::new(&small_config(false), &mut derive(5, Stream::Init, &[])).unwrap();
        let b = VaeRegressor::new(&small_config(false), &mut derive(5, Stream::Init, &[])).unwrap();
        let x = batch(3, 4, 5, 3, 1).x;
        assert_eq!(a.encode(&x).unwrap(), b.encode(&x).unwrap());
    }

    #[test]
    fn penalty_enters_linearly() {
        let model = VaeRegressor::new(&small_config(false), &mut derive(6, Stream::Init, &[])).unwrap();
        let b = batch(5, 4, 5, 3, 1);
        let at = |lambda| {
            let s = LossSettings {
                lambda_l2: lambda,
                ..Default::default()
            };
            model.loss(&b.x, &b.c, &b.eps_z, None, &s).unwrap()
        };
        let (t1, t2) = (at(0.3), at(0.6));
        let w = model.weight_norm_sq();
        assert!((t2.total_loss - t1.total_loss - 0.3 * w).abs() < 1e-9);
        assert!((t1.l2_penalty - 0.3 * w).abs() < 1e-12);
        let expected = -(t1.label_loglik + t1.recon_loglik - t1.expected_kl) + t1.l2_penalty;
        assert!((t1.total_loss - expected).abs() < 1e-12);
        assert!(t1.expected_kl >= 0.0);
    }

    #[test]
    fn perfect_reconstruction_leaves_only_the_constant() {
        // identity-like decoder: with hidden=[] the decoder is a single linear map M -> D
        let cfg = ModelConfig {
            input_dim: 2,
            hidden: vec![],
            latent_dim: 2,
            ..Default::default()
        };
        let mut model = VaeRegressor::new(&cfg, &mut derive(1, Stream::Init, &[])).unwrap().zeroed();
        let eye = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        model.encoder_mean.weights = eye.clone();
        model.decoder[0].weights = eye;
        let x = Tensor::from_rows(&[vec![0.5, -1.0], vec![2.0, 0.25]]).unwrap();
        let terms = model
            .loss(&x, &[0.0, 0.0], &Tensor::zeros(&[2, 2]), None, &LossSettings::default())
            .unwrap();
        assert!((terms.recon_loglik + (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
    }

    #[test]
    fn trunk_perturbation_changes_label_term() {
        let model = VaeRegressor::new(&small_config(false), &mut derive(8, Stream::Init, &[])).unwrap();
        let b = batch(6, 4, 5, 3, 1);
        let base = model.loss(&b.x, &b.c, &b.eps_z, None, &LossSettings::default()).unwrap();
        let mut bumped = model.clone();
        bumped.trunk[0].weights.values_mut()[0] += 1e-3;
        let after = bumped.loss(&b.x, &b.c, &b.eps_z, None, &LossSettings::default()).unwrap();
        assert!((after.label_loglik - base.label_loglik).abs() > 1e-9);
    }

    #[test]
    fn parameters_are_consistently_ordered() {
        let mut model = VaeRegressor::new(&small_config(true), &mut derive(2, Stream::Init, &[])).unwrap();
        let names: Vec<String> = model.parameters().into_iter().map(|(n, _)| n).collect();
        let names_mut: Vec<String> = model.parameters_mut().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, names_mut);
        assert_eq!(names.last().unwrap(), "generator.log_sigma");
        let flat = model.flatten();
        model.load_flat(&flat).unwrap();
        assert_eq!(model.flatten(), flat);
        model.validate().unwrap();
    }
}
