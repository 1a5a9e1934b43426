//! Backpropagation and mini-batch gradient descent.
//!
//! Per-sample loss is the mean squared error over the output units; a batch
//! objective is the mean over samples plus `lambda / 2 * |W|^2` for every
//! trainable weight matrix (biases are not decayed).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Activation, LayerWeights, NnError, SaeNetwork, TrainHyperparams};

/// Reusable forward/backward buffers for a layer stack.
struct Scratch {
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Scratch {
    fn new(layers: &[LayerWeights]) -> Self {
        let mut acts = vec![vec![0.0; layers.first().map_or(0, |l| l.in_dim)]];
        acts.extend(layers.iter().map(|l| vec![0.0; l.out_dim]));
        Self {
            acts,
            deltas: layers.iter().map(|l| vec![0.0; l.out_dim]).collect(),
        }
    }

    fn forward(&mut self, layers: &[LayerWeights], x: &[f64]) -> &[f64] {
        self.acts[0].copy_from_slice(x);
        for (l, layer) in layers.iter().enumerate() {
            let (lo, hi) = self.acts.split_at_mut(l + 1);
            layer.forward_into(&lo[l], &mut hi[0]);
        }
        self.acts.last().unwrap()
    }
}

/// Gradient accumulators, one pair per layer.
struct Grads {
    w: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
}

impl Grads {
    fn new(layers: &[LayerWeights]) -> Self {
        Self {
            w: layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            b: layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    fn clear(&mut self) {
        self.w.iter_mut().chain(self.b.iter_mut()).for_each(|g| g.fill(0.0));
    }
}

fn sample_loss(y: &[f64], t: &[f64]) -> f64 {
    y.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64
}

/// Forward + backward for one sample, accumulating into `grads` for layers
/// `first_trainable..`. Returns the sample loss.
fn accumulate(
    layers: &[LayerWeights],
    scratch: &mut Scratch,
    grads: &mut Grads,
    x: &[f64],
    target: &[f64],
    first_trainable: usize,
) -> f64 {
    scratch.forward(layers, x);
    let top = layers.len() - 1;
    let out = &scratch.acts[top + 1];
    let loss = sample_loss(out, target);
    let scale = 2.0 / out.len() as f64;
    let act = layers[top].activation;
    for ((d, &y), &t) in scratch.deltas[top].iter_mut().zip(out).zip(target) {
        *d = scale * (y - t) * act.derivative_from_output(y);
    }
    for l in (first_trainable..=top).rev() {
        let layer = &layers[l];
        let input = &scratch.acts[l];
        let delta = &scratch.deltas[l];
        for (o, &d) in delta.iter().enumerate() {
            grads.b[l][o] += d;
            let row = &mut grads.w[l][o * layer.in_dim..(o + 1) * layer.in_dim];
            for (g, &a) in row.iter_mut().zip(input) {
                *g += d * a;
            }
        }
        if l > first_trainable {
            let below_act = layers[l - 1].activation;
            let (lo, hi) = scratch.deltas.split_at_mut(l);
            let below = &mut lo[l - 1];
            for (i, db) in below.iter_mut().enumerate() {
                let back: f64 = hi[0]
                    .iter()
                    .enumerate()
                    .map(|(o, &d)| d * layer.weights[o * layer.in_dim + i])
                    .sum();
                *db = back * below_act.derivative_from_output(scratch.acts[l][i]);
            }
        }
    }
    loss
}

/// Mean per-sample loss over a dataset (no regularization term).
fn dataset_loss(layers: &[LayerWeights], scratch: &mut Scratch, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> f64 {
    inputs
        .iter()
        .zip(targets)
        .map(|(x, t)| sample_loss(scratch.forward(layers, x), t))
        .sum::<f64>()
        / inputs.len() as f64
}

/// Mini-batch gradient descent on `layers[first_trainable..]`. Returns the
/// full-dataset loss after every epoch.
fn fit_stack(
    layers: &mut [LayerWeights],
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    first_trainable: usize,
    hp: &TrainHyperparams,
) -> Result<Vec<f64>, NnError> {
    hp.validate()?;
    if inputs.is_empty() {
        return Err(NnError::EmptyData);
    }
    let in_dim = layers[0].in_dim;
    if let Some(x) = inputs.iter().find(|x| x.len() != in_dim) {
        return Err(NnError::DimensionMismatch {
            expected: in_dim,
            actual: x.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut scratch = Scratch::new(layers);
    let mut grads = Grads::new(layers);
    let mut curve = Vec::with_capacity(hp.epochs);
    for epoch in 0..hp.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(hp.batch_size) {
            grads.clear();
            for &i in batch {
                accumulate(layers, &mut scratch, &mut grads, &inputs[i], &targets[i], first_trainable);
            }
            let inv = 1.0 / batch.len() as f64;
            for l in first_trainable..layers.len() {
                let layer = &mut layers[l];
                for (w, g) in layer.weights.iter_mut().zip(&grads.w[l]) {
                    *w -= hp.learning_rate * (g * inv + hp.l2_lambda * *w);
                }
                for (b, g) in layer.bias.iter_mut().zip(&grads.b[l]) {
                    *b -= hp.learning_rate * g * inv;
                }
            }
        }
        let loss = dataset_loss(layers, &mut scratch, inputs, targets);
        if !loss.is_finite() {
            return Err(NnError::NonFiniteLoss { epoch });
        }
        curve.push(loss);
    }
    Ok(curve)
}

/// One trained autoencoder layer.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderFit {
    pub encoder: LayerWeights,
    /// Reconstruction MSE with the initial weights.
    pub initial_mse: f64,
    pub final_mse: f64,
    pub loss_curve: Vec<f64>,
}

/// Trains a sigmoid encoder and an untied sigmoid decoder to reconstruct
/// `data`, and keeps the encoder half.
pub fn train_autoencoder_layer(
    data: &[Vec<f64>],
    hidden_size: usize,
    hp: &TrainHyperparams,
) -> Result<AutoencoderFit, NnError> {
    let in_dim = data.first().ok_or(NnError::EmptyData)?.len();
    if in_dim == 0 || hidden_size == 0 {
        return Err(NnError::InvalidArchitecture("zero-width autoencoder".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut layers = vec![
        LayerWeights::glorot(in_dim, hidden_size, Activation::Sigmoid, &mut rng),
        LayerWeights::glorot(hidden_size, in_dim, Activation::Sigmoid, &mut rng),
    ];
    if let Some(x) = data.iter().find(|x| x.len() != in_dim) {
        return Err(NnError::DimensionMismatch {
            expected: in_dim,
            actual: x.len(),
        });
    }
    let initial_mse = dataset_loss(&layers, &mut Scratch::new(&layers), data, data);
    let loss_curve = fit_stack(&mut layers, data, data, 0, hp)?;
    let final_mse = loss_curve.last().copied().unwrap_or(initial_mse);
    layers.truncate(1);
    Ok(AutoencoderFit {
        encoder: layers.pop().unwrap(),
        initial_mse,
        final_mse,
        loss_curve,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainedStack {
    pub layers: Vec<LayerWeights>,
    pub fits: Vec<AutoencoderFit>,
}

impl PretrainedStack {
    pub fn encode(&self, x: &[f64]) -> Vec<f64> {
        self.layers.iter().fold(x.to_vec(), |h, l| l.forward(&h))
    }
}

/// Seed for the `i`-th layer of a stack.
fn layer_seed(seed: u64, i: usize) -> u64 {
    seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Greedy layer-wise pretraining: each layer is an autoencoder trained on the
/// encodings produced by the layers below it.
pub fn pretrain_sae(data: &[Vec<f64>], layer_sizes: &[usize], hp: &TrainHyperparams) -> Result<PretrainedStack, NnError> {
    if data.is_empty() {
        return Err(NnError::EmptyData);
    }
    let mut current = data.to_vec();
    let mut stack = PretrainedStack {
        layers: Vec::with_capacity(layer_sizes.len()),
        fits: Vec::with_capacity(layer_sizes.len()),
    };
    for (i, &size) in layer_sizes.iter().enumerate() {
        let fit = train_autoencoder_layer(&current, size, &hp.with_seed(layer_seed(hp.seed, i)))?;
        log::debug!(
            "pretrained layer {i} ({size} units): mse {:.3e} -> {:.3e}",
            fit.initial_mse,
            fit.final_mse
        );
        current = current.iter().map(|x| fit.encoder.forward(x)).collect();
        stack.layers.push(fit.encoder.clone());
        stack.fits.push(fit);
    }
    Ok(stack)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorFit {
    pub network: SaeNetwork,
    pub loss_curve: Vec<f64>,
}

/// Supervised training on `(inputs, targets)`. Gradients always reach the
/// head; they reach the encoder only with `fine_tune_encoder`.
pub fn train_predictor(
    net: SaeNetwork,
    inputs: &[Vec<f64>],
    targets: &[f64],
    hp: &TrainHyperparams,
    fine_tune_encoder: bool,
) -> Result<PredictorFit, NnError> {
    if inputs.len() != targets.len() {
        return Err(NnError::DimensionMismatch {
            expected: inputs.len(),
            actual: targets.len(),
        });
    }
    if inputs.is_empty() {
        return Err(NnError::EmptyData);
    }
    let t: Vec<Vec<f64>> = targets.iter().map(|&v| vec![v]).collect();
    if fine_tune_encoder {
        let mut layers = net.into_layers();
        let loss_curve = fit_stack(&mut layers, inputs, &t, 0, hp)?;
        return Ok(PredictorFit {
            network: SaeNetwork::from_layers(layers),
            loss_curve,
        });
    }
    // Frozen encoder: encode once and train the head alone.
    let encoded = inputs
        .iter()
        .map(|x| net.encode(x))
        .collect::<Result<Vec<_>, _>>()?;
    let SaeNetwork {
        encoder,
        head_hidden,
        head_output,
    } = net;
    let mut head = vec![head_hidden, head_output];
    let loss_curve = fit_stack(&mut head, &encoded, &t, 0, hp)?;
    let head_output = head.pop().unwrap();
    let head_hidden = head.pop().unwrap();
    Ok(PredictorFit {
        network: SaeNetwork {
            encoder,
            head_hidden,
            head_output,
        },
        loss_curve,
    })
}

/// Objective and analytic gradient for a single sample over all parameters,
/// flattened layer by layer as (weights, bias).
fn analytic_gradient(layers: &[LayerWeights], x: &[f64], target: &[f64], lambda: f64) -> Vec<f64> {
    let mut scratch = Scratch::new(layers);
    let mut grads = Grads::new(layers);
    accumulate(layers, &mut scratch, &mut grads, x, target, 0);
    let mut out = Vec::new();
    for (l, layer) in layers.iter().enumerate() {
        out.extend(grads.w[l].iter().zip(&layer.weights).map(|(g, w)| g + lambda * w));
        out.extend_from_slice(&grads.b[l]);
    }
    out
}

/// `sigmoid(a) - sigmoid(b)` for `a - b = delta`, without cancellation.
fn sigmoid_difference(a: f64, b: f64, delta: f64) -> f64 {
    let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
    sig(b) * sig(-a) * delta.exp_m1()
}

fn activation_difference(act: Activation, a: f64, b: f64, delta: f64) -> f64 {
    match act {
        Activation::Sigmoid => sigmoid_difference(a, b, delta),
        Activation::Linear => delta,
    }
}

/// Central difference `(f(p + eps) - f(p - eps)) / (2 eps)` for parameter
/// `k` (same flattening as [`analytic_gradient`]).
///
/// Rather than subtracting two forward passes, the pair `(h+, h+ - h-)` is
/// carried through the network, so gradients far below the loss scale do not
/// drown in rounding error. In exact arithmetic this is the plain central
/// difference.
fn central_difference(layers: &[LayerWeights], x: &[f64], target: &[f64], lambda: f64, mut k: usize, eps: f64) -> f64 {
    let mut layer = 0;
    while k >= layers[layer].weights.len() + layers[layer].bias.len() {
        k -= layers[layer].weights.len() + layers[layer].bias.len();
        layer += 1;
    }
    let input = layers[..layer].iter().fold(x.to_vec(), |h, l| l.forward(&h));
    let lw = &layers[layer];
    let (unit, scale, reg) = if k < lw.weights.len() {
        let w = lw.weights[k];
        (k / lw.in_dim, input[k % lw.in_dim], 2.0 * lambda * w * eps)
    } else {
        (k - lw.weights.len(), 1.0, 0.0)
    };

    let mut plus = vec![0.0; lw.out_dim];
    let mut diff = vec![0.0; lw.out_dim];
    for o in 0..lw.out_dim {
        let z = lw.bias[o] + lw.row(o).iter().zip(&input).map(|(w, v)| w * v).sum::<f64>();
        if o == unit {
            let dz = 2.0 * eps * scale;
            let (zp, zm) = (z + eps * scale, z - eps * scale);
            plus[o] = lw.activation.apply(zp);
            diff[o] = activation_difference(lw.activation, zp, zm, dz);
        } else {
            plus[o] = lw.activation.apply(z);
        }
    }
    for l in &layers[layer + 1..] {
        let mut np = vec![0.0; l.out_dim];
        let mut nd = vec![0.0; l.out_dim];
        for o in 0..l.out_dim {
            let row = l.row(o);
            let zp = l.bias[o] + row.iter().zip(&plus).map(|(w, v)| w * v).sum::<f64>();
            let dz: f64 = row.iter().zip(&diff).map(|(w, d)| w * d).sum();
            np[o] = l.activation.apply(zp);
            nd[o] = activation_difference(l.activation, zp, zp - dz, dz);
        }
        plus = np;
        diff = nd;
    }
    // (y+ - t)^2 - (y- - t)^2 = dy * (2 (y+ - t) - dy)
    let data: f64 = plus
        .iter()
        .zip(&diff)
        .zip(target)
        .map(|((&y, &dy), &t)| dy * (2.0 * (y - t) - dy))
        .sum::<f64>()
        / plus.len() as f64;
    (data + reg) / (2.0 * eps)
}

pub(crate) fn gradient_check_layers(
    layers: &[LayerWeights],
    x: &[f64],
    target: &[f64],
    epsilon: f64,
    lambda: f64,
) -> f64 {
    analytic_gradient(layers, x, target, lambda)
        .iter()
        .enumerate()
        .map(|(k, &a)| {
            let n = central_difference(layers, x, target, lambda, k, epsilon);
            (a - n).abs() / a.abs().max(n.abs()).max(1e-12)
        })
        .fold(0.0, f64::max)
}

/// Largest relative error `|a - n| / max(|a|, |n|, 1e-12)` between backprop
/// and central finite differences of `(net(x) - target)^2`, over every
/// parameter.
pub fn gradient_check(net: &SaeNetwork, x: &[f64], target: f64, epsilon: f64) -> f64 {
    let layers: Vec<LayerWeights> = net.layers().cloned().collect();
    gradient_check_layers(&layers, x, &[target], epsilon, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_network, Architecture};
    use rand::Rng;

    fn memorizable(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let protos: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..dim).map(|_| rng.random_range(0.1..0.9)).collect())
            .collect();
        (0..n).map(|i| protos[i % 3].clone()).collect()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let arch = Architecture {
            input_dim: 5,
            encoder_sizes: vec![4, 3],
            head_hidden: 3,
        };
        let net = init_network(&arch, 7).unwrap();
        let x = [0.2, 0.9, 0.4, 0.1, 0.7];
        assert!(gradient_check(&net, &x, 0.6, 1e-5) < 1e-6);
        let layers: Vec<LayerWeights> = net.layers().cloned().collect();
        assert!(gradient_check_layers(&layers, &x, &[0.6], 1e-5, 0.3) < 1e-6);
        // Autoencoder pair with a vector target.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ae = vec![
            LayerWeights::glorot(5, 2, Activation::Sigmoid, &mut rng),
            LayerWeights::glorot(2, 5, Activation::Sigmoid, &mut rng),
        ];
        assert!(gradient_check_layers(&ae, &x, &x, 1e-5, 0.0) < 1e-6);
    }

    #[test]
    fn propagated_difference_matches_two_pass_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let layers = vec![
            LayerWeights::glorot(3, 4, Activation::Sigmoid, &mut rng),
            LayerWeights::glorot(4, 2, Activation::Sigmoid, &mut rng),
            LayerWeights::glorot(2, 1, Activation::Linear, &mut rng),
        ];
        let (x, t, eps, lambda) = ([0.3, 0.6, 0.9], [0.2], 1e-4, 0.1);
        let loss = |ls: &[LayerWeights]| {
            let y = ls.iter().fold(x.to_vec(), |h, l| l.forward(&h))[0];
            let reg: f64 = ls.iter().flat_map(|l| &l.weights).map(|w| w * w).sum();
            (y - t[0]).powi(2) + 0.5 * lambda * reg
        };
        let mut k = 0;
        for l in 0..layers.len() {
            for slot in 0..layers[l].weights.len() + layers[l].bias.len() {
                let bump = |d: f64| {
                    let mut ls = layers.clone();
                    let n = ls[l].weights.len();
                    if slot < n {
                        ls[l].weights[slot] += d;
                    } else {
                        ls[l].bias[slot - n] += d;
                    }
                    loss(&ls)
                };
                let naive = (bump(eps) - bump(-eps)) / (2.0 * eps);
                let fast = central_difference(&layers, &x, &t, lambda, k, eps);
                assert!((naive - fast).abs() < 1e-9, "param {k}: {naive} vs {fast}");
                k += 1;
            }
        }
    }

    #[test]
    fn sigmoid_difference_is_exact_for_small_steps() {
        let s = |z: f64| 1.0 / (1.0 + (-z).exp());
        assert!((sigmoid_difference(0.7, 0.2, 0.5) - (s(0.7) - s(0.2))).abs() < 1e-15);
        // Derivative limit: sigmoid'(0) = 1/4.
        assert!((sigmoid_difference(1e-9, -1e-9, 2e-9) / 2e-9 - 0.25).abs() < 1e-12);
    }

    #[test]
    fn flat_parameters_do_not_false_alarm() {
        // Zero output weights: encoder gradients are exactly zero analytically
        // and numerically ~0; the 1e-12 floor keeps them from dominating.
        let mut net = init_network(
            &Architecture {
                input_dim: 3,
                encoder_sizes: vec![2],
                head_hidden: 2,
            },
            1,
        )
        .unwrap();
        net.head_output.weights.fill(0.0);
        assert!(gradient_check(&net, &[0.3, 0.5, 0.7], 0.4, 1e-5) < 1e-6);
    }

    #[test]
    fn memorizes_single_vector() {
        let data = vec![vec![0.2, 0.8, 0.5, 0.3]; 20];
        let hp = TrainHyperparams {
            learning_rate: 0.5,
            epochs: 300,
            batch_size: 4,
            l2_lambda: 0.0,
            seed: 1,
        };
        let fit = train_autoencoder_layer(&data, 3, &hp).unwrap();
        assert!(fit.final_mse < 1e-3, "mse {}", fit.final_mse);
        assert_eq!(fit.encoder.out_dim, 3);
        assert_eq!(fit.encoder.in_dim, 4);
    }

    #[test]
    fn descent_reduces_reconstruction_error() {
        let data = memorizable(30, 6, 5);
        let fit = train_autoencoder_layer(&data, 6, &TrainHyperparams::pretraining()).unwrap();
        assert!(fit.final_mse < fit.initial_mse);
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let data = memorizable(10, 4, 2);
        let hp = TrainHyperparams {
            learning_rate: 0.0,
            epochs: 5,
            ..TrainHyperparams::pretraining()
        };
        let fit = train_autoencoder_layer(&data, 3, &hp).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
        let fresh = LayerWeights::glorot(4, 3, Activation::Sigmoid, &mut rng);
        assert_eq!(fit.encoder, fresh);
        assert!(fit.loss_curve.iter().all(|&l| l == fit.initial_mse));
    }

    #[test]
    fn loss_curve_monotone_on_memorizable_fixture() {
        // Full-batch descent; lr 0.5 verified stable on this fixture.
        let data = memorizable(12, 5, 9);
        let hp = TrainHyperparams {
            learning_rate: 0.5,
            epochs: 400,
            batch_size: 12,
            l2_lambda: 0.0,
            seed: 4,
        };
        let fit = train_autoencoder_layer(&data, 4, &hp).unwrap();
        assert!(fit.loss_curve.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn pretrain_stack_shapes_and_determinism() {
        let data = memorizable(50, 8, 11);
        let hp = TrainHyperparams {
            learning_rate: 0.5,
            epochs: 1000,
            batch_size: 10,
            l2_lambda: 0.0,
            seed: 2,
        };
        let a = pretrain_sae(&data, &[6, 4], &hp).unwrap();
        assert_eq!(a.layers.len(), 2);
        assert_eq!((a.layers[0].in_dim, a.layers[0].out_dim), (8, 6));
        assert_eq!((a.layers[1].in_dim, a.layers[1].out_dim), (6, 4));
        for f in &a.fits {
            assert!(f.final_mse < 1e-2, "{}", f.final_mse);
        }
        assert_eq!(a, pretrain_sae(&data, &[6, 4], &hp).unwrap());
        let empty = pretrain_sae(&data, &[], &hp).unwrap();
        assert!(empty.layers.is_empty());
        assert_eq!(empty.encode(&data[0]), data[0]);
    }

    #[test]
    fn constant_target_is_fit() {
        let inputs = memorizable(40, 4, 3);
        let targets = vec![0.63; 40];
        let net = init_network(
            &Architecture {
                input_dim: 4,
                encoder_sizes: vec![3],
                head_hidden: 3,
            },
            5,
        )
        .unwrap();
        let hp = TrainHyperparams {
            learning_rate: 0.3,
            epochs: 500,
            batch_size: 8,
            l2_lambda: 0.0,
            seed: 1,
        };
        let fit = train_predictor(net, &inputs, &targets, &hp, true).unwrap();
        assert!(*fit.loss_curve.last().unwrap() < 1e-4, "{:?}", fit.loss_curve.last());
        assert_eq!(fit.loss_curve.len(), 500);
    }

    #[test]
    fn frozen_encoder_is_bitwise_unchanged() {
        let inputs = memorizable(40, 4, 3);
        let targets: Vec<f64> = inputs.iter().map(|x| x[0] * 0.5 + 0.2).collect();
        let net = init_network(
            &Architecture {
                input_dim: 4,
                encoder_sizes: vec![3, 3],
                head_hidden: 2,
            },
            5,
        )
        .unwrap();
        let before = net.encoder.clone();
        let fit = train_predictor(net.clone(), &inputs, &targets, &TrainHyperparams::supervised(), false).unwrap();
        assert_eq!(fit.network.encoder, before);
        assert_ne!(fit.network.head_hidden, net.head_hidden);
        let tuned = train_predictor(net, &inputs, &targets, &TrainHyperparams::supervised(), true).unwrap();
        assert_ne!(tuned.network.encoder, before);
    }

    #[test]
    fn zero_epochs_is_identity() {
        let inputs = memorizable(5, 4, 3);
        let net = init_network(
            &Architecture {
                input_dim: 4,
                encoder_sizes: vec![3],
                head_hidden: 2,
            },
            5,
        )
        .unwrap();
        let hp = TrainHyperparams {
            epochs: 0,
            ..TrainHyperparams::supervised()
        };
        let fit = train_predictor(net.clone(), &inputs, &[0.5; 5], &hp, true).unwrap();
        assert_eq!(fit.network, net);
        assert!(fit.loss_curve.is_empty());
    }

    #[test]
    fn divergence_is_reported() {
        let inputs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * 1e3, 1.0]).collect();
        let targets: Vec<f64> = (0..20).map(|i| i as f64 * 1e6).collect();
        let net = init_network(
            &Architecture {
                input_dim: 2,
                encoder_sizes: vec![2],
                head_hidden: 2,
            },
            5,
        )
        .unwrap();
        let hp = TrainHyperparams {
            learning_rate: 10.0,
            epochs: 50,
            batch_size: 4,
            l2_lambda: 0.0,
            seed: 0,
        };
        assert!(matches!(
            train_predictor(net, &inputs, &targets, &hp, true),
            Err(NnError::NonFiniteLoss { .. })
        ));
    }

    #[test]
    fn training_is_deterministic() {
        let inputs = memorizable(30, 4, 8);
        let targets: Vec<f64> = inputs.iter().map(|x| 0.3 + 0.4 * x[1]).collect();
        let net = init_network(
            &Architecture {
                input_dim: 4,
                encoder_sizes: vec![3],
                head_hidden: 3,
            },
            5,
        )
        .unwrap();
        let a = train_predictor(net.clone(), &inputs, &targets, &TrainHyperparams::supervised(), true).unwrap();
        let b = train_predictor(net, &inputs, &targets, &TrainHyperparams::supervised(), true).unwrap();
        assert_eq!(a, b);
    }
}
