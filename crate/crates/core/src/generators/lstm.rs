//! Next-byte LSTM over the concatenated corpus.
//!
//! One recurrent layer of `hidden_width` units (gates `[i | f | o | g]`
//! packed in a single `[256 + H, 4H]` parameter block), a relu dense layer
//! and a 256-way softmax. Training predicts the byte that follows each
//! window; sampling slides the window over its own output.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{concat_corpus, Strategy, SyntheticBatch};
use crate::corpus::SeedFile;
use crate::nn::layer::{sigmoid, softmax_in_place};
use crate::nn::tensor::matmul_into;
use crate::nn::{loss_and_grad, Activation, DenseLayer, LossKind, Mlp, MlpOptimizer, OptimizerState, Tensor};
use crate::{Error, Result};

pub const VOCAB: usize = 256;
/// Below this temperature sampling is greedy.
pub const GREEDY_TEMPERATURE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmConfig {
    pub hidden_width: usize,
    pub dense_width: usize,
    pub window: usize,
    pub stride: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Optional cap on training windows (subsampled deterministically).
    pub max_windows: Option<usize>,
    pub max_gen_len: usize,
    pub rng_seed: u64,
}

impl Default for LstmConfig {
    fn default() -> Self {
        Self {
            hidden_width: 128,
            dense_width: 128,
            window: 20,
            stride: 3,
            epochs: 20,
            batch_size: 64,
            learning_rate: 0.001,
            max_windows: None,
            max_gen_len: 40,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LstmModel {
    /// Recurrent parameters, `[256 + H, 4H]`, identity activation.
    pub cell: DenseLayer,
    /// Dense relu layer followed by the softmax projection.
    pub head: Mlp,
    pub window: usize,
    pub max_gen_len: usize,
    pub rng_seed: u64,
    /// Mean training loss per epoch.
    pub loss_history: Vec<f64>,
    pub train_time: Duration,
}

/// Per-step activations kept for backpropagation through time.
struct Step {
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

/// Gradients of the recurrent block.
pub struct CellGrad {
    pub weights: Tensor,
    pub bias: Tensor,
}

impl LstmModel {
    pub fn init(hidden_width: usize, dense_width: usize, window: usize, max_gen_len: usize, rng_seed: u64) -> Result<Self> {
        if hidden_width == 0 || dense_width == 0 {
            return Err(Error::usage("LSTM widths must be positive"));
        }
        if window == 0 || max_gen_len == 0 {
            return Err(Error::usage("LSTM window and max_gen_len must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let h = hidden_width;
        let mut cell = DenseLayer::glorot(VOCAB + h, 4 * h, Activation::Identity, &mut rng)?;
        for b in &mut cell.bias_mut().data_mut()[h..2 * h] {
            *b = 1.0;
        }
        let head = Mlp::new(vec![
            DenseLayer::glorot(h, dense_width, Activation::Relu, &mut rng)?,
            DenseLayer::glorot(dense_width, VOCAB, Activation::Softmax, &mut rng)?,
        ])?;
        Ok(Self {
            cell,
            head,
            window,
            max_gen_len,
            rng_seed,
            loss_history: Vec::new(),
            train_time: Duration::ZERO,
        })
    }

    /// Rebuilds a model from stored layers `[cell, dense, softmax]`.
    pub fn from_layers(layers: Vec<DenseLayer>, window: usize, max_gen_len: usize) -> Result<Self> {
        if layers.len() != 3 {
            return Err(Error::Model(format!("LSTM needs 3 layers, found {}", layers.len())));
        }
        let mut it = layers.into_iter();
        let cell = it.next().unwrap();
        let head = Mlp::new(it.collect())?;
        let h = cell.outputs() / 4;
        if cell.outputs() % 4 != 0 || cell.inputs() != VOCAB + h || head.inputs() != h || head.outputs() != VOCAB {
            return Err(Error::Model("LSTM layer shapes are inconsistent".into()));
        }
        if window == 0 || max_gen_len == 0 {
            return Err(Error::usage("LSTM window and max_gen_len must be positive"));
        }
        Ok(Self {
            cell,
            head,
            window,
            max_gen_len,
            rng_seed: 0,
            loss_history: Vec::new(),
            train_time: Duration::ZERO,
        })
    }

    pub fn layers(&self) -> Vec<DenseLayer> {
        std::iter::once(self.cell.clone())
            .chain(self.head.layers().iter().cloned())
            .collect()
    }

    pub fn hidden_width(&self) -> usize {
        self.cell.outputs() / 4
    }

    /// Runs equal-length byte sequences from a zero state. Returns the final
    /// hidden state `[B, H]` and, if requested, the per-step cache.
    fn run(&self, seqs: &[&[u8]], keep: bool) -> (Vec<f64>, Vec<Step>) {
        let h = self.hidden_width();
        let g4 = 4 * h;
        let b = seqs.len();
        let w = self.cell.weights().data();
        let recur = &w[VOCAB * g4..];
        let bias = self.cell.bias().data();
        let steps = seqs.first().map_or(0, |s| s.len());

        let mut hs = vec![0.0; b * h];
        let mut cs = vec![0.0; b * h];
        let mut cache = Vec::with_capacity(if keep { steps } else { 0 });
        for t in 0..steps {
            let mut z = vec![0.0; b * g4];
            for (r, seq) in seqs.iter().enumerate() {
                let x = seq[t] as usize;
                let row = &mut z[r * g4..(r + 1) * g4];
                for ((zv, wx), bv) in row.iter_mut().zip(&w[x * g4..(x + 1) * g4]).zip(bias) {
                    *zv = wx + bv;
                }
            }
            matmul_into(&hs, recur, &mut z, b, h, g4);
            let mut new_c = vec![0.0; b * h];
            let mut new_h = vec![0.0; b * h];
            let mut tanh_c = vec![0.0; b * h];
            for r in 0..b {
                let zr = &mut z[r * g4..(r + 1) * g4];
                for j in 0..h {
                    let i = sigmoid(zr[j]);
                    let f = sigmoid(zr[h + j]);
                    let o = sigmoid(zr[2 * h + j]);
                    let g = zr[3 * h + j].tanh();
                    zr[j] = i;
                    zr[h + j] = f;
                    zr[2 * h + j] = o;
                    zr[3 * h + j] = g;
                    let c = f * cs[r * h + j] + i * g;
                    let tc = c.tanh();
                    new_c[r * h + j] = c;
                    tanh_c[r * h + j] = tc;
                    new_h[r * h + j] = o * tc;
                }
            }
            if keep {
                cache.push(Step {
                    h_prev: std::mem::replace(&mut hs, new_h),
                    c_prev: std::mem::replace(&mut cs, new_c),
                    gates: z,
                    tanh_c,
                });
            } else {
                hs = new_h;
                cs = new_c;
            }
        }
        (hs, cache)
    }

    /// Backpropagation through time from `dL/dh_T`.
    fn backward(&self, seqs: &[&[u8]], cache: &[Step], dh_last: &[f64]) -> Result<CellGrad> {
        let h = self.hidden_width();
        let g4 = 4 * h;
        let b = seqs.len();
        let recur = &self.cell.weights().data()[VOCAB * g4..];
        let mut dw = vec![0.0; (VOCAB + h) * g4];
        let mut db = vec![0.0; g4];
        let mut dh = dh_last.to_vec();
        let mut dc = vec![0.0; b * h];
        let mut dz = vec![0.0; b * g4];
        for (t, step) in cache.iter().enumerate().rev() {
            for r in 0..b {
                let gates = &step.gates[r * g4..(r + 1) * g4];
                let dzr = &mut dz[r * g4..(r + 1) * g4];
                for j in 0..h {
                    let k = r * h + j;
                    let (i, f, o, g) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
                    let tc = step.tanh_c[k];
                    let d_o = dh[k] * tc;
                    let dct = dc[k] + dh[k] * o * (1.0 - tc * tc);
                    dzr[j] = dct * g * i * (1.0 - i);
                    dzr[h + j] = dct * step.c_prev[k] * f * (1.0 - f);
                    dzr[2 * h + j] = d_o * o * (1.0 - o);
                    dzr[3 * h + j] = dct * i * (1.0 - g * g);
                    dc[k] = dct * f;
                }
                let x = seqs[r][t] as usize;
                for ((d, v), bsum) in dw[x * g4..(x + 1) * g4].iter_mut().zip(dzr.iter()).zip(db.iter_mut()) {
                    *d += v;
                    *bsum += v;
                }
            }
            // dW_h += h_prevᵀ · dz
            let dwh = &mut dw[VOCAB * g4..];
            for r in 0..b {
                let dzr = &dz[r * g4..(r + 1) * g4];
                for (p, &hv) in step.h_prev[r * h..(r + 1) * h].iter().enumerate() {
                    if hv == 0.0 {
                        continue;
                    }
                    for (d, v) in dwh[p * g4..(p + 1) * g4].iter_mut().zip(dzr) {
                        *d += hv * v;
                    }
                }
            }
            // dh_prev = dz · W_hᵀ
            for r in 0..b {
                let dzr = &dz[r * g4..(r + 1) * g4];
                for p in 0..h {
                    dh[r * h + p] = dzr.iter().zip(&recur[p * g4..(p + 1) * g4]).map(|(a, w)| a * w).sum();
                }
            }
        }
        Ok(CellGrad {
            weights: Tensor::new(vec![VOCAB + h, g4], dw)?,
            bias: Tensor::new(vec![g4], db)?,
        })
    }

    /// Pre-softmax logits for the byte following each sequence.
    pub fn logits(&self, seqs: &[&[u8]]) -> Result<Tensor> {
        let (hs, _) = self.run(seqs, false);
        let hidden = Tensor::new(vec![seqs.len(), self.hidden_width()], hs)?;
        let dense = self.head.layers()[0].forward(&hidden)?;
        self.head.layers()[1].affine(&dense)
    }

    /// Next-byte distribution for each sequence.
    pub fn predict(&self, seqs: &[&[u8]]) -> Result<Tensor> {
        let (hs, _) = self.run(seqs, false);
        self.head.forward(&Tensor::new(vec![seqs.len(), self.hidden_width()], hs)?)
    }

    /// Loss and gradients (cell, head) for one batch of windows and targets.
    pub fn loss_and_gradients<R: Rng>(
        &mut self,
        seqs: &[&[u8]],
        targets: &[u8],
        rng: &mut R,
    ) -> Result<(f64, CellGrad, crate::nn::Gradients)> {
        let (hs, cache) = self.run(seqs, true);
        let hidden = Tensor::new(vec![seqs.len(), self.hidden_width()], hs)?;
        let probs = self.head.forward_train(&hidden, rng)?;
        let mut onehot = Tensor::zeros(&[seqs.len(), VOCAB]);
        for (r, &t) in targets.iter().enumerate() {
            onehot.data_mut()[r * VOCAB + t as usize] = 1.0;
        }
        let (loss, grad) = loss_and_grad(LossKind::CategoricalCrossEntropy, &probs, &onehot)?;
        let head_grads = self.head.backward(&grad)?;
        let cell_grad = self.backward(seqs, &cache, head_grads.input.data())?;
        Ok((loss, cell_grad, head_grads))
    }
}

/// Applies temperature to logits: softmax(logits / t).
pub fn temperature_distribution(logits: &[f64], temperature: f64) -> Vec<f64> {
    let mut p: Vec<f64> = logits.iter().map(|&l| l / temperature).collect();
    softmax_in_place(&mut p);
    p
}

fn sample_index<R: Rng>(logits: &[f64], temperature: f64, rng: &mut R) -> u8 {
    if temperature < GREEDY_TEMPERATURE {
        let mut best = 0;
        for (i, &l) in logits.iter().enumerate() {
            if l > logits[best] {
                best = i;
            }
        }
        return best as u8;
    }
    let p = temperature_distribution(logits, temperature);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i as u8;
        }
    }
    (p.len() - 1) as u8
}

pub fn train_lstm(corpus: &[SeedFile], config: &LstmConfig) -> Result<LstmModel> {
    let text = concat_corpus(corpus);
    if config.window == 0 || config.stride == 0 || config.batch_size == 0 {
        return Err(Error::usage("LSTM window, stride and batch_size must be positive"));
    }
    if text.len() <= config.window {
        return Err(Error::usage(format!(
            "LSTM corpus has {} bytes, needs more than the window of {}",
            text.len(),
            config.window
        )));
    }
    let start = Instant::now();
    let mut model = LstmModel::init(
        config.hidden_width,
        config.dense_width,
        config.window,
        config.max_gen_len,
        config.rng_seed,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed ^ 0x1_57A7);

    let mut starts: Vec<usize> = (0..text.len() - config.window).step_by(config.stride).collect();
    if let Some(cap) = config.max_windows {
        if starts.len() > cap {
            starts.shuffle(&mut rng);
            starts.truncate(cap.max(1));
            starts.sort_unstable();
        }
    }

    let rms = OptimizerState::rmsprop(config.learning_rate)?;
    let mut cell_w_opt = rms.clone();
    let mut cell_b_opt = rms.clone();
    let mut head_opt = MlpOptimizer::new(&model.head, &rms);

    let mut step = 0u64;
    for _ in 0..config.epochs {
        starts.shuffle(&mut rng);
        let (mut sum, mut batches) = (0.0, 0usize);
        for chunk in starts.chunks(config.batch_size) {
            step += 1;
            let seqs: Vec<&[u8]> = chunk.iter().map(|&s| &text[s..s + config.window]).collect();
            let targets: Vec<u8> = chunk.iter().map(|&s| text[s + config.window]).collect();
            let (loss, cell_grad, head_grads) = model.loss_and_gradients(&seqs, &targets, &mut rng)?;
            if !loss.is_finite() {
                return Err(Error::Training {
                    step,
                    reason: format!("non-finite LSTM loss {loss}"),
                });
            }
            cell_w_opt.step(model.cell.weights_mut(), &cell_grad.weights)?;
            cell_b_opt.step(model.cell.bias_mut(), &cell_grad.bias)?;
            model.head.apply_gradients(&head_grads, &mut head_opt)?;
            if !model.head.all_finite() || !model.cell.weights().is_finite() || !model.cell.bias().is_finite() {
                return Err(Error::Training {
                    step,
                    reason: "non-finite LSTM parameters".into(),
                });
            }
            sum += loss;
            batches += 1;
        }
        model.loss_history.push(sum / batches.max(1) as f64);
    }
    model.train_time = start.elapsed();
    Ok(model)
}

/// Continues each primer by `len` bytes, re-reading the last `window` bytes
/// of context at every step.
pub fn lstm_continue<R: Rng>(
    model: &LstmModel,
    primers: &[Vec<u8>],
    len: usize,
    temperature: f64,
    rng: &mut R,
) -> Result<Vec<Vec<u8>>> {
    if !(temperature > 0.0) {
        return Err(Error::usage(format!("temperature must be positive, got {temperature}")));
    }
    let mut contexts: Vec<Vec<u8>> = primers.to_vec();
    if contexts.iter().any(|c| c.is_empty()) {
        return Err(Error::usage("LSTM primers must be non-empty"));
    }
    let mut outputs = vec![Vec::with_capacity(len); primers.len()];
    for _ in 0..len {
        // Group by context length so each batch runs equal-length sequences.
        let span: Vec<usize> = contexts.iter().map(|c| c.len().min(model.window)).collect();
        let mut order: Vec<usize> = (0..contexts.len()).collect();
        order.sort_by_key(|&i| span[i]);
        for group in order.chunk_by(|&a, &b| span[a] == span[b]) {
            for chunk in group.chunks(256) {
                let seqs: Vec<&[u8]> = chunk
                    .iter()
                    .map(|&i| {
                        let c = &contexts[i];
                        &c[c.len().saturating_sub(model.window)..]
                    })
                    .collect();
                let logits = model.logits(&seqs)?;
                let picks: Vec<u8> = (0..chunk.len())
                    .map(|r| sample_index(logits.row(r), temperature, rng))
                    .collect();
                for (&i, b) in chunk.iter().zip(picks) {
                    contexts[i].push(b);
                    outputs[i].push(b);
                }
            }
        }
    }
    Ok(outputs)
}

/// `n` seeds, each primed with a random corpus window and sampled up to
/// `max_gen_len` bytes. Sample lengths follow the corpus seed lengths.
pub fn lstm_generate(
    model: &LstmModel,
    n: usize,
    temperature: f64,
    corpus: &[SeedFile],
    rng_seed: u64,
) -> Result<SyntheticBatch> {
    if !(temperature > 0.0) {
        return Err(Error::usage(format!("temperature must be positive, got {temperature}")));
    }
    if n == 0 {
        return Err(Error::usage("lstm_generate needs n >= 1"));
    }
    let text = concat_corpus(corpus);
    if text.len() < model.window {
        return Err(Error::usage("corpus is shorter than the LSTM priming window"));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let primers: Vec<Vec<u8>> = (0..n)
        .map(|_| {
            let s = rng.gen_range(0..=text.len() - model.window);
            text[s..s + model.window].to_vec()
        })
        .collect();
    let lengths: Vec<usize> = (0..n)
        .map(|_| corpus[rng.gen_range(0..corpus.len())].data.len().clamp(1, model.max_gen_len))
        .collect();
    let longest = *lengths.iter().max().expect("n >= 1");
    let mut seeds = lstm_continue(model, &primers, longest, temperature, &mut rng)?;
    for (s, &l) in seeds.iter_mut().zip(&lengths) {
        s.truncate(l);
    }
    Ok(SyntheticBatch {
        strategy: Strategy::Lstm,
        seeds,
        generation_time: start.elapsed(),
        model_train_time: model.train_time,
    })
}
