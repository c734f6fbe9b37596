//! GAN over fixed-length byte vectors in tanh range.
//!
//! Generator: latent -> dense(relu) -> dense(tanh, output_len).
//! Discriminator: dropout on the input -> dense(relu, output_len) -> dense(sigmoid, 1).
//! Each step makes one discriminator update on a real batch (label 1) stacked
//! on a fake batch (label 0), then one generator update through the frozen
//! discriminator with the fakes labelled 1.

use std::time::{Duration, Instant};

use rand::distributions::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::codec::{decode_bytes, encode_bytes};
use super::{Strategy, SyntheticBatch};
use crate::corpus::SeedFile;
use crate::nn::{loss_and_grad, Activation, DenseLayer, LossKind, Mlp, MlpOptimizer, OptimizerState, Tensor};
use crate::{Error, Result};

pub const DISCRIMINATOR_DROPOUT: f64 = 0.25;
/// Consecutive epochs of saturated held-out accuracy before warning about collapse.
const COLLAPSE_EPOCHS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct GanConfig {
    pub latent_dim: usize,
    /// `None` picks the median training-seed length clamped to `[16, 256]`.
    pub output_len: Option<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub generator_lr: f64,
    pub discriminator_lr: f64,
    /// Both rates are divided by `1 + lr_decay * epoch`.
    pub lr_decay: f64,
    pub rng_seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            latent_dim: 32,
            output_len: None,
            epochs: 300,
            batch_size: 64,
            generator_lr: 0.01,
            discriminator_lr: 0.0002,
            lr_decay: 0.0,
            rng_seed: 0,
        }
    }
}

/// Per-epoch training curves.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GanHistory {
    pub discriminator_loss: Vec<f64>,
    pub generator_loss: Vec<f64>,
    /// Held-out accuracy of the discriminator on one real and one fake batch.
    pub discriminator_accuracy: Vec<f64>,
    /// Epochs at which the collapse tripwire fired.
    pub collapse_warnings: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct GanModel {
    pub generator: Mlp,
    pub discriminator: Mlp,
    pub latent_dim: usize,
    pub output_len: usize,
    pub rng_seed: u64,
    pub history: GanHistory,
    pub train_time: Duration,
}

impl GanModel {
    /// Fresh, untrained networks.
    pub fn init(latent_dim: usize, output_len: usize, rng_seed: u64) -> Result<Self> {
        if latent_dim == 0 {
            return Err(Error::usage("GAN latent_dim must be positive"));
        }
        if output_len == 0 {
            return Err(Error::usage("GAN output_len must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let hidden = 4 * latent_dim;
        let generator = Mlp::new(vec![
            DenseLayer::glorot(latent_dim, hidden, Activation::Relu, &mut rng)?,
            DenseLayer::glorot(hidden, output_len, Activation::Tanh, &mut rng)?,
        ])?;
        let discriminator = Mlp::new(vec![
            DenseLayer::glorot(output_len, output_len, Activation::Relu, &mut rng)?,
            DenseLayer::glorot(output_len, 1, Activation::Sigmoid, &mut rng)?,
        ])?
        .with_input_dropout(DISCRIMINATOR_DROPOUT)?;
        Ok(Self {
            generator,
            discriminator,
            latent_dim,
            output_len,
            rng_seed,
            history: GanHistory::default(),
            train_time: Duration::ZERO,
        })
    }

    /// Rebuilds a model from stored layers `[g1, g2, d1, d2]`.
    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.len() != 4 {
            return Err(Error::Model(format!("GAN needs 4 layers, found {}", layers.len())));
        }
        let mut it = layers.into_iter();
        let generator = Mlp::new(vec![it.next().unwrap(), it.next().unwrap()])?;
        let discriminator =
            Mlp::new(vec![it.next().unwrap(), it.next().unwrap()])?.with_input_dropout(DISCRIMINATOR_DROPOUT)?;
        if discriminator.inputs() != generator.outputs() || discriminator.outputs() != 1 {
            return Err(Error::Model("GAN generator/discriminator widths disagree".into()));
        }
        Ok(Self {
            latent_dim: generator.inputs(),
            output_len: generator.outputs(),
            generator,
            discriminator,
            rng_seed: 0,
            history: GanHistory::default(),
            train_time: Duration::ZERO,
        })
    }

    pub fn layers(&self) -> Vec<DenseLayer> {
        self.generator
            .layers()
            .iter()
            .chain(self.discriminator.layers())
            .cloned()
            .collect()
    }

    fn noise<R: Rng>(&self, n: usize, rng: &mut R) -> Tensor {
        let dist = Uniform::new_inclusive(-1.0, 1.0);
        let data = (0..n * self.latent_dim).map(|_| dist.sample(rng)).collect();
        Tensor::new(vec![n, self.latent_dim], data).expect("noise shape")
    }
}

/// Median payload length clamped to `[16, 256]`.
pub fn default_output_len(corpus: &[SeedFile]) -> usize {
    let mut lens: Vec<usize> = corpus.iter().map(|s| s.data.len()).collect();
    if lens.is_empty() {
        return 16;
    }
    lens.sort_unstable();
    lens[lens.len() / 2].clamp(16, 256)
}

fn stack(a: &Tensor, b: &Tensor) -> Tensor {
    let mut data = a.data().to_vec();
    data.extend_from_slice(b.data());
    Tensor::new(vec![a.rows() + b.rows(), a.cols()], data).expect("stack shape")
}

fn labels(n: usize, value: f64) -> Tensor {
    Tensor::new(vec![n, 1], vec![value; n]).expect("label shape")
}

pub fn train_gan(corpus: &[SeedFile], config: &GanConfig) -> Result<GanModel> {
    if corpus.is_empty() {
        return Err(Error::usage("train_gan needs a non-empty corpus"));
    }
    if config.batch_size == 0 {
        return Err(Error::usage("GAN batch_size must be positive"));
    }
    if !(config.lr_decay.is_finite() && config.lr_decay >= 0.0) {
        return Err(Error::usage(format!("GAN lr_decay must be finite and >= 0, got {}", config.lr_decay)));
    }
    let start = Instant::now();
    let output_len = config.output_len.unwrap_or_else(|| default_output_len(corpus));
    let mut model = GanModel::init(config.latent_dim, output_len, config.rng_seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed ^ 0x5EED_0F_6A4E);

    let real: Vec<Vec<f64>> = corpus
        .iter()
        .map(|s| encode_bytes(&s.data, output_len).map(Tensor::into_data))
        .collect::<Result<_>>()?;

    let mut d_opt = MlpOptimizer::new(&model.discriminator, &OptimizerState::adam(config.discriminator_lr)?);
    let mut g_opt = MlpOptimizer::new(&model.generator, &OptimizerState::sgd(config.generator_lr)?);

    let mut order: Vec<usize> = (0..real.len()).collect();
    let mut step = 0u64;
    let mut saturated_run = 0usize;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let scale = 1.0 / (1.0 + config.lr_decay * epoch as f64);
        d_opt.set_learning_rate(config.discriminator_lr * scale)?;
        g_opt.set_learning_rate(config.generator_lr * scale)?;
        let (mut d_sum, mut g_sum, mut batches) = (0.0, 0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            step += 1;
            let n = chunk.len();
            let real_batch = Tensor::from_rows(&chunk.iter().map(|&i| real[i].clone()).collect::<Vec<_>>())?;

            // Discriminator: real -> 1, fake -> 0.
            let fake = model.generator.forward(&model.noise(n, &mut rng))?;
            let d_in = stack(&real_batch, &fake);
            let d_target = stack(&labels(n, 1.0), &labels(n, 0.0));
            let d_out = model.discriminator.forward_train(&d_in, &mut rng)?;
            let (d_loss, d_grad) = loss_and_grad(LossKind::BinaryCrossEntropy, &d_out, &d_target)?;
            let d_grads = model.discriminator.backward(&d_grad)?;
            model.discriminator.apply_gradients(&d_grads, &mut d_opt)?;

            // Generator: fakes labelled real, gradient through the frozen discriminator.
            let z = model.noise(n, &mut rng);
            let fake = model.generator.forward_train(&z, &mut rng)?;
            let d_out = model.discriminator.forward_train(&fake, &mut rng)?;
            let (g_loss, g_grad) = loss_and_grad(LossKind::BinaryCrossEntropy, &d_out, &labels(n, 1.0))?;
            let through_d = model.discriminator.backward(&g_grad)?;
            let g_grads = model.generator.backward(&through_d.input)?;
            model.generator.apply_gradients(&g_grads, &mut g_opt)?;

            if !d_loss.is_finite() || !g_loss.is_finite() {
                return Err(Error::Training {
                    step,
                    reason: format!("non-finite GAN loss (d={d_loss}, g={g_loss})"),
                });
            }
            if !model.generator.all_finite() || !model.discriminator.all_finite() {
                return Err(Error::Training {
                    step,
                    reason: "non-finite GAN parameters".into(),
                });
            }
            d_sum += d_loss;
            g_sum += g_loss;
            batches += 1;
        }
        model.history.discriminator_loss.push(d_sum / batches as f64);
        model.history.generator_loss.push(g_sum / batches as f64);

        let acc = held_out_accuracy(&model, &real, config.batch_size, &mut rng)?;
        model.history.discriminator_accuracy.push(acc);
        if acc == 0.0 || acc == 1.0 {
            saturated_run += 1;
            if saturated_run == COLLAPSE_EPOCHS {
                log::warn!("GAN discriminator accuracy saturated at {acc} for {COLLAPSE_EPOCHS} epochs (epoch {epoch})");
                model.history.collapse_warnings.push(epoch);
            }
        } else {
            saturated_run = 0;
        }
    }
    model.train_time = start.elapsed();
    Ok(model)
}

fn held_out_accuracy<R: Rng>(model: &GanModel, real: &[Vec<f64>], batch: usize, rng: &mut R) -> Result<f64> {
    let n = batch.min(real.len());
    let rows: Vec<Vec<f64>> = (0..n).map(|_| real[rng.gen_range(0..real.len())].clone()).collect();
    let real_batch = Tensor::from_rows(&rows)?;
    let fake = model.generator.forward(&model.noise(n, rng))?;
    let p_real = model.discriminator.forward(&real_batch)?;
    let p_fake = model.discriminator.forward(&fake)?;
    let correct = p_real.data().iter().filter(|&&p| p >= 0.5).count()
        + p_fake.data().iter().filter(|&&p| p < 0.5).count();
    Ok(correct as f64 / (2 * n) as f64)
}

/// `n` seeds of exactly `output_len` bytes.
pub fn gan_generate(model: &GanModel, n: usize, rng_seed: u64) -> Result<SyntheticBatch> {
    if n == 0 {
        return Err(Error::usage("gan_generate needs n >= 1"));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut seeds = Vec::with_capacity(n);
    let chunk = 256;
    let mut left = n;
    while left > 0 {
        let m = left.min(chunk);
        let out = model.generator.forward(&model.noise(m, &mut rng))?;
        seeds.extend(out.data().chunks(model.output_len).map(decode_bytes));
        left -= m;
    }
    Ok(SyntheticBatch {
        strategy: Strategy::Gan,
        seeds,
        generation_time: start.elapsed(),
        model_train_time: model.train_time,
    })
}
