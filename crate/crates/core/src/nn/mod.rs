//! Dense networks built from scratch: a stack of sigmoid encoder layers
//! (pretrained greedily as autoencoders) feeding a one-hidden-layer
//! regression head with a linear scalar output.

mod model;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use model::TrainedModel;
pub use train::{
    gradient_check, pretrain_sae, train_autoencoder_layer, train_predictor, AutoencoderFit,
    PretrainedStack, PredictorFit,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("expected input of length {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("loss became non-finite in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("training set is empty")]
    EmptyData,
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Linear,
}

impl Activation {
    pub(crate) fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Linear => 1.0,
        }
    }
}

/// Fully connected layer, `out = act(W x + b)` with `W` stored row-major
/// (`out_dim` rows of `in_dim`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl LayerWeights {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    /// Glorot-uniform weights in `±sqrt(6 / (in + out))`, zero biases.
    pub fn glorot(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        let s = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let mut layer = Self::zeros(in_dim, out_dim, activation);
        for w in &mut layer.weights {
            *w = rng.random_range(-s..=s);
        }
        layer
    }

    pub fn row(&self, o: usize) -> &[f64] {
        &self.weights[o * self.in_dim..(o + 1) * self.in_dim]
    }

    pub(crate) fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, y) in out.iter_mut().enumerate() {
            let z = self.bias[o] + self.row(o).iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            *y = self.activation.apply(z);
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.out_dim];
        self.forward_into(x, &mut out);
        out
    }

    fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }
}

/// Layer widths: input, encoder stack, head hidden layer. The head output is
/// always a single linear unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub encoder_sizes: Vec<usize>,
    pub head_hidden: usize,
}

impl Architecture {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.encoder_sizes.is_empty() {
            return Err(NnError::InvalidArchitecture("need at least one encoder layer".into()));
        }
        if self.input_dim == 0 || self.head_hidden == 0 || self.encoder_sizes.contains(&0) {
            return Err(NnError::InvalidArchitecture(format!("zero-width layer in {self:?}")));
        }
        Ok(())
    }

    /// Short label such as `24x12-h8`.
    pub fn label(&self) -> String {
        let enc: Vec<String> = self.encoder_sizes.iter().map(usize::to_string).collect();
        format!("{}-h{}", enc.join("x"), self.head_hidden)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaeNetwork {
    pub encoder: Vec<LayerWeights>,
    pub head_hidden: LayerWeights,
    pub head_output: LayerWeights,
}

/// Glorot-initialized network; identical seeds give bitwise-identical weights.
pub fn init_network(arch: &Architecture, seed: u64) -> Result<SaeNetwork, NnError> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut encoder = Vec::with_capacity(arch.encoder_sizes.len());
    let mut prev = arch.input_dim;
    for &size in &arch.encoder_sizes {
        encoder.push(LayerWeights::glorot(prev, size, Activation::Sigmoid, &mut rng));
        prev = size;
    }
    let head_hidden = LayerWeights::glorot(prev, arch.head_hidden, Activation::Sigmoid, &mut rng);
    let head_output = LayerWeights::glorot(arch.head_hidden, 1, Activation::Linear, &mut rng);
    Ok(SaeNetwork {
        encoder,
        head_hidden,
        head_output,
    })
}

impl SaeNetwork {
    /// Puts a freshly initialized head on top of a pretrained encoder stack.
    pub fn with_encoder(encoder: Vec<LayerWeights>, head_hidden: usize, seed: u64) -> Result<Self, NnError> {
        let top = encoder
            .last()
            .map(|l| l.out_dim)
            .ok_or_else(|| NnError::InvalidArchitecture("empty encoder".into()))?;
        if head_hidden == 0 {
            return Err(NnError::InvalidArchitecture("zero-width head".into()));
        }
        for w in encoder.windows(2) {
            if w[0].out_dim != w[1].in_dim {
                return Err(NnError::InvalidArchitecture("encoder layer widths do not chain".into()));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            head_hidden: LayerWeights::glorot(top, head_hidden, Activation::Sigmoid, &mut rng),
            head_output: LayerWeights::glorot(head_hidden, 1, Activation::Linear, &mut rng),
            encoder,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.first().unwrap_or(&self.head_hidden).in_dim
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            input_dim: self.input_dim(),
            encoder_sizes: self.encoder.iter().map(|l| l.out_dim).collect(),
            head_hidden: self.head_hidden.out_dim,
        }
    }

    /// All layers bottom to top.
    pub fn layers(&self) -> impl Iterator<Item = &LayerWeights> {
        self.encoder.iter().chain([&self.head_hidden, &self.head_output])
    }

    pub(crate) fn into_layers(self) -> Vec<LayerWeights> {
        let mut v = self.encoder;
        v.push(self.head_hidden);
        v.push(self.head_output);
        v
    }

    pub(crate) fn from_layers(mut layers: Vec<LayerWeights>) -> Self {
        let head_output = layers.pop().expect("head output layer");
        let head_hidden = layers.pop().expect("head hidden layer");
        Self {
            encoder: layers,
            head_hidden,
            head_output,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers().all(LayerWeights::is_finite)
    }

    /// Output of the encoder stack.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        self.check_input(x)?;
        Ok(self.encoder.iter().fold(x.to_vec(), |h, l| l.forward(&h)))
    }

    /// Predicted (normalized) speed for one input vector.
    pub fn forward(&self, x: &[f64]) -> Result<f64, NnError> {
        let h = self.encode(x)?;
        Ok(self.head_output.forward(&self.head_hidden.forward(&h))[0])
    }

    fn check_input(&self, x: &[f64]) -> Result<(), NnError> {
        if x.len() != self.input_dim() {
            return Err(NnError::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }
}

/// Optimizer settings for one training phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainHyperparams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2_lambda: f64,
    pub seed: u64,
}

impl TrainHyperparams {
    pub fn pretraining() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 200,
            batch_size: 16,
            l2_lambda: 1e-4,
            seed: 0,
        }
    }

    pub fn supervised() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 500,
            batch_size: 16,
            l2_lambda: 1e-4,
            seed: 0,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: &str| Err(NnError::InvalidHyperparams(m.into()));
        // A zero rate is allowed: it freezes the weights.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be >= 0");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be > 0");
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return bad("l2_lambda must be >= 0");
        }
        Ok(())
    }
}

impl Default for TrainHyperparams {
    fn default() -> Self {
        Self::supervised()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sigmoid(z: f64) -> f64 {
        1.0 / (1.0 + (-z).exp())
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let arch = Architecture {
            input_dim: 9,
            encoder_sizes: vec![4],
            head_hidden: 3,
        };
        let a = init_network(&arch, 42).unwrap();
        let b = init_network(&arch, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_network(&arch, 43).unwrap());
        assert!(a.layers().all(|l| l.bias.iter().all(|&b| b == 0.0)));
        let enc = &a.encoder[0];
        assert_eq!((enc.out_dim, enc.in_dim, enc.weights.len()), (4, 9, 36));
        let bound = (6.0f64 / 13.0).sqrt();
        assert!(enc.weights.iter().all(|w| w.abs() <= bound));
        assert!(enc.weights.iter().any(|w| w.abs() > bound / 2.0));
    }

    #[test]
    fn invalid_architectures() {
        let bad = |enc: Vec<usize>, h| Architecture {
            input_dim: 5,
            encoder_sizes: enc,
            head_hidden: h,
        };
        assert!(init_network(&bad(vec![], 3), 0).is_err());
        assert!(init_network(&bad(vec![4, 0], 3), 0).is_err());
        assert!(init_network(&bad(vec![4], 0), 0).is_err());
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = SaeNetwork {
            encoder: vec![LayerWeights::zeros(6, 4, Activation::Sigmoid)],
            head_hidden: LayerWeights::zeros(4, 3, Activation::Sigmoid),
            head_output: LayerWeights::zeros(3, 1, Activation::Linear),
        };
        assert_eq!(net.encode(&[3.0; 6]).unwrap(), vec![0.5; 4]);
        assert_eq!(net.forward(&[-7.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(), 0.0);
        assert!(matches!(
            net.forward(&[1.0; 5]),
            Err(NnError::DimensionMismatch { expected: 6, actual: 5 })
        ));
    }

    #[test]
    fn single_sigmoid_unit() {
        let l = LayerWeights::zeros(1, 1, Activation::Sigmoid);
        assert_eq!(l.forward(&[123.0]), vec![0.5]);
    }

    #[test]
    fn hand_computed_forward() {
        // 2 inputs -> 2 sigmoid (encoder) -> 1 sigmoid (head) -> linear.
        let net = SaeNetwork {
            encoder: vec![LayerWeights {
                in_dim: 2,
                out_dim: 2,
                weights: vec![0.5, -1.0, 0.25, 2.0],
                bias: vec![0.1, -0.3],
                activation: Activation::Sigmoid,
            }],
            head_hidden: LayerWeights {
                in_dim: 2,
                out_dim: 1,
                weights: vec![1.5, -0.75],
                bias: vec![0.2],
                activation: Activation::Sigmoid,
            },
            head_output: LayerWeights {
                in_dim: 1,
                out_dim: 1,
                weights: vec![3.0],
                bias: vec![-1.0],
                activation: Activation::Linear,
            },
        };
        let x = [0.8, 0.3];
        // z1 = 0.5*0.8 - 1.0*0.3 + 0.1 = 0.2 ; z2 = 0.25*0.8 + 2.0*0.3 - 0.3 = 0.5
        let (h1, h2) = (sigmoid(0.2), sigmoid(0.5));
        let g = sigmoid(1.5 * h1 - 0.75 * h2 + 0.2);
        let expected = 3.0 * g - 1.0;
        // sigmoid(0.2) = 0.549833997312478, sigmoid(0.5) = 0.6224593312018546
        assert!((h1 - 0.549_833_997_312_478).abs() < 1e-15);
        assert!((h2 - 0.622_459_331_201_854_6).abs() < 1e-15);
        assert!((net.forward(&x).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn hyperparam_validation() {
        assert!(TrainHyperparams::supervised().validate().is_ok());
        let mut hp = TrainHyperparams::supervised();
        hp.batch_size = 0;
        assert!(hp.validate().is_err());
        hp = TrainHyperparams::supervised();
        hp.learning_rate = -1.0;
        assert!(hp.validate().is_err());
    }

    #[test]
    fn architecture_label() {
        let a = Architecture {
            input_dim: 33,
            encoder_sizes: vec![24, 12],
            head_hidden: 8,
        };
        assert_eq!(a.label(), "24x12-h8");
    }
}
