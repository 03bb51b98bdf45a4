//! Variational autoencoder over one-hot entity vectors.
//!
//! ```text
//! x (1600) ─ dense+ReLU ─ h (H) ─┬─ dense ─ mu (25)
//!                                └─ dense ─ logvar (25)
//! z = mu + exp(logvar/2) ⊙ ε
//! z ─ dense+ReLU ─ h' (H) ─ dense+sigmoid ─ x̂ (1600)
//! ```
//!
//! The loss is mean binary cross-entropy over the output plus `kl_weight`
//! times the closed-form KL divergence to the standard normal prior. The
//! backward pass is written out by hand for this fixed architecture.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::numkit::{
    relu, relu_grad, seeded_rng, sigmoid, AdamHyper, AdamState, Matrix, BCE_EPS,
};
use crate::onehot::{decode_vector, OneHotVec, ONEHOT_DIM};
use crate::state::EntityState;

pub const DEFAULT_HIDDEN: usize = 256;
pub const DEFAULT_LATENT: usize = 25;

/// Activation on the mean head. `Linear` is the default; `Relu` reproduces
/// a ReLU embedding layer literally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatentActivation {
    #[default]
    Linear,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VaeHyper {
    pub input_size: usize,
    pub hidden_size: usize,
    pub latent_size: usize,
    #[serde(default)]
    pub latent_activation: LatentActivation,
}

impl Default for VaeHyper {
    fn default() -> Self {
        VaeHyper {
            input_size: ONEHOT_DIM,
            hidden_size: DEFAULT_HIDDEN,
            latent_size: DEFAULT_LATENT,
            latent_activation: LatentActivation::Linear,
        }
    }
}

impl VaeHyper {
    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || self.hidden_size == 0 || self.latent_size == 0 {
            return Err(Error::Config("layer sizes must be at least 1".into()));
        }
        Ok(())
    }
}

/// A fully connected layer, `y = W·x + b` with `W` stored output-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl Dense {
    fn zeros(out: usize, inp: usize) -> Self {
        Dense { w: Matrix::zeros(out, inp), b: vec![0.0; out] }
    }

    fn init(out: usize, inp: usize, rng: &mut impl Rng) -> Self {
        Dense { w: Matrix::glorot_uniform(out, inp, rng), b: vec![0.0; out] }
    }

    fn forward_into(&self, x: &[f64], y: &mut [f64]) {
        self.w.matvec_into(x, y);
        for (yi, bi) in y.iter_mut().zip(&self.b) {
            *yi += bi;
        }
    }

    /// Accumulates `dW += dy xᵀ`, `db += dy`.
    fn accumulate(&mut self, dy: &[f64], x: &[f64]) {
        self.w.add_outer(1.0, dy, x);
        for (b, d) in self.b.iter_mut().zip(dy) {
            *b += d;
        }
    }
}

/// All trainable blocks. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeParams {
    pub enc: Dense,
    pub mu: Dense,
    pub logvar: Dense,
    pub dec_hidden: Dense,
    pub dec_out: Dense,
}

/// Block names in storage order.
pub const BLOCK_NAMES: [&str; 10] = [
    "enc_w", "enc_b", "mu_w", "mu_b", "logvar_w", "logvar_b", "dec_w1", "dec_b1", "dec_w2", "dec_b2",
];

impl VaeParams {
    fn zeros_like(h: &VaeHyper) -> Self {
        VaeParams {
            enc: Dense::zeros(h.hidden_size, h.input_size),
            mu: Dense::zeros(h.latent_size, h.hidden_size),
            logvar: Dense::zeros(h.latent_size, h.hidden_size),
            dec_hidden: Dense::zeros(h.hidden_size, h.latent_size),
            dec_out: Dense::zeros(h.input_size, h.hidden_size),
        }
    }

    fn layers(&self) -> [&Dense; 5] {
        [&self.enc, &self.mu, &self.logvar, &self.dec_hidden, &self.dec_out]
    }

    fn layers_mut(&mut self) -> [&mut Dense; 5] {
        [&mut self.enc, &mut self.mu, &mut self.logvar, &mut self.dec_hidden, &mut self.dec_out]
    }

    /// `(name, shape, data)` for each block, in [`BLOCK_NAMES`] order.
    /// Biases report shape `[n]`.
    pub fn blocks(&self) -> Vec<(&'static str, Vec<usize>, &[f64])> {
        let mut out = Vec::with_capacity(10);
        for (i, layer) in self.layers().into_iter().enumerate() {
            let (r, c) = layer.w.shape();
            out.push((BLOCK_NAMES[2 * i], vec![r, c], layer.w.data()));
            out.push((BLOCK_NAMES[2 * i + 1], vec![layer.b.len()], layer.b.as_slice()));
        }
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(10);
        for layer in self.layers_mut() {
            let Dense { w, b } = layer;
            out.push(w.data_mut());
            out.push(b.as_mut_slice());
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.blocks().iter().map(|(_, _, d)| d.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.blocks().iter().flat_map(|(_, _, d)| d.iter().copied()).collect()
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(shape_err(format!(
                "{} values for {} parameters",
                flat.len(),
                self.param_count()
            )));
        }
        let mut offset = 0;
        for block in self.blocks_mut() {
            block.copy_from_slice(&flat[offset..offset + block.len()]);
            offset += block.len();
        }
        Ok(())
    }

    fn zero(&mut self) {
        for block in self.blocks_mut() {
            block.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|(_, _, d)| d.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    pub hyper: VaeHyper,
    /// Seed the weights were initialised from.
    pub seed: u64,
    pub params: VaeParams,
}

/// A point in the latent space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentPoint(pub Vec<f64>);

impl LatentPoint {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Glorot-uniform weights and zero biases, drawn in block order from `seed`.
pub fn init_model(hyper: VaeHyper, seed: u64) -> Result<VaeModel> {
    hyper.validate()?;
    let mut rng = seeded_rng(seed);
    let VaeHyper { input_size: d, hidden_size: h, latent_size: l, .. } = hyper;
    let params = VaeParams {
        enc: Dense::init(h, d, &mut rng),
        mu: Dense::init(l, h, &mut rng),
        logvar: Dense::init(l, h, &mut rng),
        dec_hidden: Dense::init(h, l, &mut rng),
        dec_out: Dense::init(d, h, &mut rng),
    };
    Ok(VaeModel { hyper, seed, params })
}

/// Per-sample activations kept for the backward pass.
#[derive(Debug, Clone)]
struct Trace {
    h1_pre: Vec<f64>,
    h1: Vec<f64>,
    mu_pre: Vec<f64>,
    mu: Vec<f64>,
    logvar: Vec<f64>,
    z: Vec<f64>,
    h2_pre: Vec<f64>,
    h2: Vec<f64>,
    out: Vec<f64>,
    // backward scratch
    d_out: Vec<f64>,
    d_h2: Vec<f64>,
    d_z: Vec<f64>,
    d_mu: Vec<f64>,
    d_logvar: Vec<f64>,
    d_h1: Vec<f64>,
    d_h1_tmp: Vec<f64>,
}

impl Trace {
    fn new(h: &VaeHyper) -> Self {
        let (d, hid, l) = (h.input_size, h.hidden_size, h.latent_size);
        Trace {
            h1_pre: vec![0.0; hid],
            h1: vec![0.0; hid],
            mu_pre: vec![0.0; l],
            mu: vec![0.0; l],
            logvar: vec![0.0; l],
            z: vec![0.0; l],
            h2_pre: vec![0.0; hid],
            h2: vec![0.0; hid],
            out: vec![0.0; d],
            d_out: vec![0.0; d],
            d_h2: vec![0.0; hid],
            d_z: vec![0.0; l],
            d_mu: vec![0.0; l],
            d_logvar: vec![0.0; l],
            d_h1: vec![0.0; hid],
            d_h1_tmp: vec![0.0; hid],
        }
    }
}

impl VaeModel {
    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.hyper.input_size {
            return Err(shape_err(format!(
                "input of length {}, model expects {}",
                x.len(),
                self.hyper.input_size
            )));
        }
        Ok(())
    }

    fn check_latent(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.hyper.latent_size {
            return Err(shape_err(format!(
                "latent of length {}, model expects {}",
                z.len(),
                self.hyper.latent_size
            )));
        }
        Ok(())
    }

    fn encode_into(&self, x: &[f64], t: &mut Trace) {
        let p = &self.params;
        p.enc.forward_into(x, &mut t.h1_pre);
        for (a, &v) in t.h1.iter_mut().zip(&t.h1_pre) {
            *a = relu(v);
        }
        p.mu.forward_into(&t.h1, &mut t.mu_pre);
        match self.hyper.latent_activation {
            LatentActivation::Linear => t.mu.copy_from_slice(&t.mu_pre),
            LatentActivation::Relu => {
                for (m, &v) in t.mu.iter_mut().zip(&t.mu_pre) {
                    *m = relu(v);
                }
            }
        }
        p.logvar.forward_into(&t.h1, &mut t.logvar);
    }

    fn decode_into(&self, t: &mut Trace) {
        let p = &self.params;
        p.dec_hidden.forward_into(&t.z, &mut t.h2_pre);
        for (a, &v) in t.h2.iter_mut().zip(&t.h2_pre) {
            *a = relu(v);
        }
        p.dec_out.forward_into(&t.h2, &mut t.out);
        for v in t.out.iter_mut() {
            *v = sigmoid(*v);
        }
    }

    /// `(mu, logvar)` for a dense input.
    pub fn encode(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_input(x)?;
        let mut t = Trace::new(&self.hyper);
        self.encode_into(x, &mut t);
        Ok((t.mu, t.logvar))
    }

    /// The deterministic embedding (the mean) of a one-hot vector.
    pub fn embed(&self, x: &OneHotVec) -> Result<LatentPoint> {
        Ok(LatentPoint(self.encode(&x.to_dense())?.0))
    }

    /// Output probabilities for a latent point.
    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_latent(z)?;
        let mut t = Trace::new(&self.hyper);
        t.z.copy_from_slice(z);
        self.decode_into(&mut t);
        Ok(t.out)
    }

    /// Decodes a latent point and reads it back as an entity state.
    pub fn decode_state(&self, z: &[f64]) -> Result<EntityState> {
        decode_vector(&self.decode(z)?)
    }

    /// Deterministic reconstruction through the mean path.
    pub fn reconstruct(&self, x: &OneHotVec) -> Result<EntityState> {
        let mu = self.embed(x)?;
        self.decode_state(&mu.0)
    }

    /// Loss and parameter gradient for one input under a fixed noise draw.
    pub fn loss_and_grad(&self, x: &[f64], noise: &[f64], kl_weight: f64) -> Result<(LossParts, VaeParams)> {
        self.check_input(x)?;
        self.check_latent(noise)?;
        let mut grads = VaeParams::zeros_like(&self.hyper);
        let mut t = Trace::new(&self.hyper);
        let parts = self.forward_backward(x, noise, kl_weight, 1.0, &mut t, &mut grads);
        Ok((parts, grads))
    }

    /// Loss for one input under a fixed noise draw.
    pub fn loss_at(&self, x: &[f64], noise: &[f64], kl_weight: f64) -> Result<LossParts> {
        self.check_input(x)?;
        self.check_latent(noise)?;
        let mut t = Trace::new(&self.hyper);
        self.encode_into(x, &mut t);
        let z = reparameterize(&t.mu, &t.logvar, noise)?;
        t.z.copy_from_slice(&z.0);
        self.decode_into(&mut t);
        loss(x, &t.out, &t.mu, &t.logvar, kl_weight)
    }

    /// Forward pass plus gradient accumulation (scaled by `scale`) into `g`.
    fn forward_backward(
        &self,
        x: &[f64],
        noise: &[f64],
        kl_weight: f64,
        scale: f64,
        t: &mut Trace,
        g: &mut VaeParams,
    ) -> LossParts {
        let p = &self.params;
        self.encode_into(x, t);
        for j in 0..t.z.len() {
            t.z[j] = t.mu[j] + (0.5 * t.logvar[j]).exp() * noise[j];
        }
        self.decode_into(t);

        let n = x.len() as f64;
        let mut recon = 0.0;
        for i in 0..x.len() {
            let pr = t.out[i];
            let pc = pr.clamp(BCE_EPS, 1.0 - BCE_EPS);
            recon -= x[i] * pc.ln() + (1.0 - x[i]) * (1.0 - pc).ln();
            // d(bce)/d(pre-sigmoid) is (p - x)/n inside the clamp, 0 outside.
            t.d_out[i] = if pr > BCE_EPS && pr < 1.0 - BCE_EPS {
                scale * (pr - x[i]) / n
            } else {
                0.0
            };
        }
        recon /= n;
        let kl = kl_divergence(&t.mu, &t.logvar);

        g.dec_out.accumulate(&t.d_out, &t.h2);
        p.dec_out.w.matvec_t_into(&t.d_out, &mut t.d_h2);
        for (d, &pre) in t.d_h2.iter_mut().zip(&t.h2_pre) {
            *d *= relu_grad(pre);
        }
        g.dec_hidden.accumulate(&t.d_h2, &t.z);
        p.dec_hidden.w.matvec_t_into(&t.d_h2, &mut t.d_z);

        let kw = scale * kl_weight;
        for j in 0..t.z.len() {
            let std = (0.5 * t.logvar[j]).exp();
            t.d_mu[j] = t.d_z[j] + kw * t.mu[j];
            t.d_logvar[j] = t.d_z[j] * noise[j] * 0.5 * std + kw * 0.5 * (std * std - 1.0);
            if self.hyper.latent_activation == LatentActivation::Relu {
                t.d_mu[j] *= relu_grad(t.mu_pre[j]);
            }
        }
        g.mu.accumulate(&t.d_mu, &t.h1);
        g.logvar.accumulate(&t.d_logvar, &t.h1);
        p.mu.w.matvec_t_into(&t.d_mu, &mut t.d_h1);
        p.logvar.w.matvec_t_into(&t.d_logvar, &mut t.d_h1_tmp);
        for i in 0..t.d_h1.len() {
            t.d_h1[i] = (t.d_h1[i] + t.d_h1_tmp[i]) * relu_grad(t.h1_pre[i]);
        }
        g.enc.accumulate(&t.d_h1, x);

        LossParts { total: recon + kl_weight * kl, recon, kl }
    }
}

/// `z = mu + exp(logvar/2) ⊙ noise`.
pub fn reparameterize(mu: &[f64], logvar: &[f64], noise: &[f64]) -> Result<LatentPoint> {
    if mu.len() != logvar.len() || mu.len() != noise.len() {
        return Err(shape_err("mu, logvar and noise must share a length"));
    }
    Ok(LatentPoint(
        mu.iter()
            .zip(logvar)
            .zip(noise)
            .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
            .collect(),
    ))
}

/// `-½ Σ (1 + logvar - mu² - exp(logvar))`.
pub fn kl_divergence(mu: &[f64], logvar: &[f64]) -> f64 {
    -0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(m, lv)| 1.0 + lv - m * m - lv.exp())
        .sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
}

/// Reconstruction (mean BCE) plus weighted KL.
pub fn loss(x: &[f64], x_hat: &[f64], mu: &[f64], logvar: &[f64], kl_weight: f64) -> Result<LossParts> {
    if mu.len() != logvar.len() {
        return Err(shape_err("mu and logvar lengths differ"));
    }
    let recon = crate::numkit::bce_loss(x_hat, x)?;
    let kl = kl_divergence(mu, logvar);
    Ok(LossParts { total: recon + kl_weight * kl, recon, kl })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub kl_weight: f64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 500,
            batch_size: 32,
            lr: 0.001,
            seed: 0,
            kl_weight: DEFAULT_KL_WEIGHT,
            shuffle: true,
        }
    }
}

/// Default KL weight: `1/1600`, which makes the mean-reduced objective the
/// per-sample evidence lower bound divided by the input width.
pub const DEFAULT_KL_WEIGHT: f64 = 1.0 / ONEHOT_DIM as f64;

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.kl_weight >= 0.0 && self.kl_weight.is_finite()) {
            return Err(Error::Config(format!("KL weight must be ≥ 0, got {}", self.kl_weight)));
        }
        Ok(())
    }
}

/// Mean losses over one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
}

/// Trains on one-hot vectors; see [`train_dense`].
pub fn train(model: &mut VaeModel, data: &[OneHotVec], config: &TrainConfig) -> Result<Vec<EpochLoss>> {
    let dense: Vec<Vec<f64>> = data.iter().map(OneHotVec::to_dense).collect();
    train_dense(model, &dense, config)
}

/// Minibatch Adam training.
///
/// One generator seeded from `config.seed` drives the per-epoch shuffles and
/// the per-sample noise, so the result is bit-identical for identical
/// inputs. Epoch losses are sample means of the per-sample losses.
pub fn train_dense(model: &mut VaeModel, data: &[Vec<f64>], config: &TrainConfig) -> Result<Vec<EpochLoss>> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    for x in data {
        model.check_input(x)?;
    }
    let hyper = model.hyper;
    let mut rng = seeded_rng(config.seed);
    let mut adam = AdamState::new(
        &model.params.blocks().iter().map(|(_, _, d)| d.len()).collect::<Vec<_>>(),
        AdamHyper { lr: config.lr, ..AdamHyper::default() },
    );
    let mut grads = VaeParams::zeros_like(&hyper);
    let mut trace = Trace::new(&hyper);
    let mut noise = vec![0.0; hyper.latent_size];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut sums = LossParts { total: 0.0, recon: 0.0, kl: 0.0 };
        for (batch_no, batch) in order.chunks(config.batch_size).enumerate() {
            grads.zero();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                for e in noise.iter_mut() {
                    *e = rng.sample(StandardNormal);
                }
                let parts = model.forward_backward(&data[i], &noise, config.kl_weight, scale, &mut trace, &mut grads);
                if !parts.total.is_finite() {
                    return Err(Error::Numerical(format!(
                        "non-finite loss at epoch {epoch}, batch {}",
                        batch_no + 1
                    )));
                }
                sums.total += parts.total;
                sums.recon += parts.recon;
                sums.kl += parts.kl;
            }
            let grad_blocks: Vec<&[f64]> = grads.blocks().into_iter().map(|(_, _, d)| d).collect();
            adam.step(&mut model.params.blocks_mut(), &grad_blocks)?;
        }
        if !model.params.is_finite() {
            return Err(Error::Numerical(format!("non-finite weights after epoch {epoch}")));
        }
        let n = data.len() as f64;
        history.push(EpochLoss {
            epoch,
            total: sums.total / n,
            recon: sums.recon / n,
            kl: sums.kl / n,
        });
    }
    Ok(history)
}
