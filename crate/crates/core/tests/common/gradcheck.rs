//! Central finite differences against every analytic gradient path: dense
//! stacks over all activations, both losses, input dropout and the LSTM cell.
//! Each check panics on the first mismatch and returns how much it covered.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reseed_core::generators::LstmModel;
use reseed_core::nn::{dropout_forward, loss_and_grad, Activation, DenseLayer, LossKind, Mlp, Tensor};

const H: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;
const ABS_FLOOR: f64 = 1e-9;

struct Case {
    net: Mlp,
    loss: LossKind,
    input: Tensor,
    target: Tensor,
    mask_seed: u64,
}

impl Case {
    fn loss_at(&mut self, input: &Tensor) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.mask_seed);
        let out = self.net.forward_train(input, &mut rng).unwrap();
        loss_and_grad(self.loss, &out, &self.target).unwrap().0
    }

    /// Whether every relu pre-activation stays clear of its kink.
    fn kink_free(&self) -> bool {
        let mut rng = ChaCha8Rng::seed_from_u64(self.mask_seed);
        let (mut x, _) = dropout_forward(&self.input, self.net.input_dropout(), &mut rng, true).unwrap();
        for layer in self.net.layers() {
            let pre = layer.affine(&x).unwrap();
            if layer.activation() == Activation::Relu && pre.data().iter().any(|v| v.abs() < 1e-3) {
                return false;
            }
            x = layer.activation().apply(&pre);
        }
        true
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

fn random_case(rng: &mut ChaCha8Rng, hidden: Activation, last: Activation, loss: LossKind, dropout: bool) -> Case {
    let depth = rng.gen_range(1..=3);
    let mut widths = vec![rng.gen_range(1..=5)];
    for _ in 0..depth {
        widths.push(rng.gen_range(2..=5));
    }
    let layers = (0..depth)
        .map(|i| {
            let act = if i + 1 == depth { last } else { hidden };
            let mut l = DenseLayer::glorot(widths[i], widths[i + 1], act, rng).unwrap();
            let b = uniform(rng, &[widths[i + 1]], -0.5, 0.5);
            *l.bias_mut() = b;
            l
        })
        .collect();
    let mut net = Mlp::new(layers).unwrap();
    if dropout {
        net = net.with_input_dropout(0.25).unwrap();
    }
    let batch = rng.gen_range(1..=4);
    let out = *widths.last().unwrap();
    let input = uniform(rng, &[batch, widths[0]], -1.0, 1.0);
    let target = match loss {
        LossKind::BinaryCrossEntropy => uniform(rng, &[batch, out], 0.0, 1.0),
        LossKind::CategoricalCrossEntropy => {
            let mut t = uniform(rng, &[batch, out], 0.05, 1.0);
            for row in t.data_mut().chunks_mut(out) {
                let s: f64 = row.iter().sum();
                row.iter_mut().for_each(|v| *v /= s);
            }
            t
        }
    };
    Case {
        net,
        loss,
        input,
        target,
        mask_seed: rng.gen(),
    }
}

fn close(analytic: f64, numeric: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= ABS_FLOOR || diff <= REL_TOL * analytic.abs().max(numeric.abs())
}

fn central(mut f: impl FnMut(f64) -> f64, x: f64) -> f64 {
    (f(x + H) - f(x - H)) / (2.0 * H)
}

/// Returns the number of parameters checked; panics on a mismatch.
fn check_case(case: &mut Case, label: &str) -> usize {
    let input = case.input.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(case.mask_seed);
    let out = case.net.forward_train(&input, &mut rng).unwrap();
    let (_, dout) = loss_and_grad(case.loss, &out, &case.target).unwrap();
    let grads = case.net.backward(&dout).unwrap();
    let mut checked = 0;

    for li in 0..case.net.layers().len() {
        for which in 0..2 {
            let n = if which == 0 {
                case.net.layers()[li].weights().len()
            } else {
                case.net.layers()[li].bias().len()
            };
            for k in 0..n {
                let analytic = if which == 0 {
                    grads.layers[li].weights.data()[k]
                } else {
                    grads.layers[li].bias.data()[k]
                };
                let orig = param(&mut case.net, li, which, k, None);
                let numeric = central(
                    |v| {
                        param(&mut case.net, li, which, k, Some(v));
                        case.loss_at(&input)
                    },
                    orig,
                );
                param(&mut case.net, li, which, k, Some(orig));
                assert!(
                    close(analytic, numeric),
                    "{label}: layer {li} {} [{k}] analytic {analytic} numeric {numeric}",
                    if which == 0 { "weight" } else { "bias" }
                );
                checked += 1;
            }
        }
    }
    for k in 0..input.len() {
        let analytic = grads.input.data()[k];
        let numeric = central(
            |v| {
                let mut x = input.clone();
                x.data_mut()[k] = v;
                case.loss_at(&x)
            },
            input.data()[k],
        );
        assert!(close(analytic, numeric), "{label}: input [{k}] analytic {analytic} numeric {numeric}");
        checked += 1;
    }
    checked
}

fn param(net: &mut Mlp, layer: usize, which: usize, k: usize, set: Option<f64>) -> f64 {
    let l = &mut net.layers_mut()[layer];
    let t = if which == 0 { l.weights_mut() } else { l.bias_mut() };
    let old = t.data()[k];
    if let Some(v) = set {
        t.data_mut()[k] = v;
    }
    old
}

/// Returns `(nets, partial derivatives)` checked.
pub fn dense_stacks(seed: u64) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nets = 0;
    let mut params = 0;
    for hidden in Activation::ALL {
        for last in Activation::ALL {
            for loss in [LossKind::BinaryCrossEntropy, LossKind::CategoricalCrossEntropy] {
                // Both losses take probabilities.
                if !matches!(last, Activation::Sigmoid | Activation::Softmax) {
                    continue;
                }
                for dropout in [false, true] {
                    let mut done = 0;
                    while done < 3 {
                        let mut case = random_case(&mut rng, hidden, last, loss, dropout);
                        if !case.kink_free() {
                            continue;
                        }
                        let label = format!("{hidden:?}/{last:?}/{loss:?}/dropout={dropout}");
                        params += check_case(&mut case, &label);
                        done += 1;
                        nets += 1;
                    }
                }
            }
        }
    }
    (nets, params)
}

/// Non-probability activations in the last hidden layer under a sigmoid head.
pub fn sigmoid_heads(seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nets = 0;
    for last in [Activation::Identity, Activation::Tanh, Activation::Relu] {
        let mut done = 0;
        while done < 5 {
            let mut case = random_case(&mut rng, last, Activation::Sigmoid, LossKind::BinaryCrossEntropy, false);
            if case.kink_free() {
                check_case(&mut case, &format!("{last:?}->sigmoid"));
                done += 1;
                nets += 1;
            }
        }
    }
    nets
}

pub fn lstm_cells(seed: u64, trials: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for trial in 0..trials {
        let hidden = rng.gen_range(1..=4);
        let window = rng.gen_range(1..=4);
        let mut model = LstmModel::init(hidden, 3, window, 40, trial).unwrap();
        let seqs: Vec<Vec<u8>> = (0..3).map(|_| (0..window).map(|_| rng.gen_range(0..6u8)).collect()).collect();
        let refs: Vec<&[u8]> = seqs.iter().map(Vec::as_slice).collect();
        let targets: Vec<u8> = (0..3).map(|_| rng.gen_range(0..6u8)).collect();
        let loss_of = |m: &mut LstmModel| {
            let mut r = ChaCha8Rng::seed_from_u64(0);
            m.loss_and_gradients(&refs, &targets, &mut r).unwrap().0
        };
        let mut r = ChaCha8Rng::seed_from_u64(0);
        let (_, cell, head) = model.loss_and_gradients(&refs, &targets, &mut r).unwrap();

        // Rows of the input one-hot that never fire have zero gradient; sample the rest.
        let cols = model.cell.weights().cols();
        let mut rows: Vec<usize> = (0..6).chain(256..256 + hidden).collect();
        rows.sort_unstable();
        for &row in &rows {
            for col in 0..cols {
                let k = row * cols + col;
                let orig = model.cell.weights().data()[k];
                let numeric = central(
                    |v| {
                        model.cell.weights_mut().data_mut()[k] = v;
                        loss_of(&mut model)
                    },
                    orig,
                );
                model.cell.weights_mut().data_mut()[k] = orig;
                let analytic = cell.weights.data()[k];
                assert!(close(analytic, numeric), "trial {trial}: cell weight ({row},{col}) {analytic} vs {numeric}");
            }
        }
        for k in 0..model.cell.bias().len() {
            let orig = model.cell.bias().data()[k];
            let numeric = central(
                |v| {
                    model.cell.bias_mut().data_mut()[k] = v;
                    loss_of(&mut model)
                },
                orig,
            );
            model.cell.bias_mut().data_mut()[k] = orig;
            assert!(close(cell.bias.data()[k], numeric), "trial {trial}: cell bias {k}");
        }
        // One head weight per layer.
        for li in 0..head.layers.len() {
            let orig = model.head.layers()[li].weights().data()[0];
            let numeric = central(
                |v| {
                    model.head.layers_mut()[li].weights_mut().data_mut()[0] = v;
                    loss_of(&mut model)
                },
                orig,
            );
            model.head.layers_mut()[li].weights_mut().data_mut()[0] = orig;
            assert!(close(head.layers[li].weights.data()[0], numeric), "trial {trial}: head layer {li}");
        }
    }
    trials as usize
}
