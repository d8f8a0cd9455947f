//! Desk-scale differentiable sequence classifiers.
//!
//! Every model scores a relaxed one-hot matrix (`max_len x |V|`) and can
//! differentiate its loss back to that input, which drives both the
//! gradient-guided position search and the finite-difference checks in the
//! test suite. All math is f64.

mod attention;
mod autoencoder;
mod checkpoint;
mod conv;
mod defense;
mod linear;
pub(crate) mod optim;
mod recurrent;
mod train;

pub use attention::AttentionNet;
pub use autoencoder::AutoencoderNet;
pub use checkpoint::{load_model, save_model};
pub use conv::ConvNet;
pub use defense::{
    adversarial_retrain, default_squeeze_map, fit_squeezed, squeeze, SqueezeMap,
};
pub use linear::LinearScorer;
pub use optim::Adam;
pub use recurrent::RecurrentNet;
pub use train::{accuracy, distill_surrogate, fit, DistillReport, TrainConfig};

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seq::{encode_tokens, Label, TokenId, Vocabulary};

/// Loss probabilities are floored here so cross-entropy stays bounded.
pub const PROBABILITY_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Recurrent,
    Convolutional,
    Attention,
    Autoencoder,
    /// Fixed-weight linear scorer used as a controllable stand-in target.
    Linear,
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Architecture::Recurrent => "recurrent",
            Architecture::Convolutional => "convolutional",
            Architecture::Attention => "attention",
            Architecture::Autoencoder => "autoencoder",
            Architecture::Linear => "linear",
        };
        write!(f, "{s}")
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "recurrent" | "lstm" | "rnn" => Ok(Architecture::Recurrent),
            "convolutional" | "cnn" => Ok(Architecture::Convolutional),
            "attention" | "transformer" => Ok(Architecture::Attention),
            "autoencoder" => Ok(Architecture::Autoencoder),
            "linear" => Ok(Architecture::Linear),
            other => Err(Error::Config(format!("unknown architecture {other:?}"))),
        }
    }
}

/// Shape and provenance shared by every model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub max_len: usize,
    /// Total vocabulary size, pad included.
    pub vocab_size: usize,
    pub pad_id: TokenId,
    pub vocab_hash: String,
    pub seed: u64,
    /// Held-out accuracy stamped by training; `None` marks an untrained net.
    pub trained_accuracy: Option<f64>,
}

impl ModelMeta {
    pub fn new(vocab: &Vocabulary, max_len: usize, seed: u64) -> Self {
        ModelMeta {
            max_len,
            vocab_size: vocab.len(),
            pad_id: vocab.pad_id(),
            vocab_hash: vocab.hash_hex(),
            seed,
            trained_accuracy: None,
        }
    }
}

/// Differentiable two-class sequence scorer. Class 0 is benign, class 1
/// malicious.
pub trait SequenceScorer: Send + Sync {
    fn architecture(&self) -> Architecture;
    fn meta(&self) -> &ModelMeta;

    /// Class probabilities from a relaxed one-hot input; both non-negative,
    /// summing to 1.
    fn proba_matrix(&self, x: &Array2<f64>) -> (f64, f64);

    /// Gradient of `loss_matrix(x, y)` with respect to the input.
    fn input_gradient_matrix(&self, x: &Array2<f64>, y: usize) -> Array2<f64>;

    fn max_len(&self) -> usize {
        self.meta().max_len
    }

    fn trained_accuracy(&self) -> Option<f64> {
        self.meta().trained_accuracy
    }

    /// One-hot view of a token list at this model's shape.
    fn encode(&self, tokens: &[TokenId]) -> Result<Array2<f64>> {
        let meta = self.meta();
        let mut out = Array2::zeros((meta.max_len, meta.vocab_size));
        for row in 0..meta.max_len {
            let col = if row < tokens.len() {
                let id = tokens[row];
                if id >= meta.vocab_size || id == meta.pad_id {
                    return Err(Error::InvalidToken {
                        id,
                        vocab_size: meta.vocab_size,
                        pad_id: meta.pad_id,
                    });
                }
                id
            } else {
                meta.pad_id
            };
            out[[row, col]] = 1.0;
        }
        Ok(out)
    }

    fn predict_proba(&self, tokens: &[TokenId]) -> Result<(f64, f64)> {
        Ok(self.proba_matrix(&self.encode(tokens)?))
    }

    fn predict_label(&self, tokens: &[TokenId]) -> Result<Label> {
        let (p_benign, p_malicious) = self.predict_proba(tokens)?;
        Ok(if p_malicious > p_benign {
            Label::Malicious
        } else {
            Label::Benign
        })
    }

    /// Cross-entropy against class `y` with the probability floor applied.
    fn loss_matrix(&self, x: &Array2<f64>, y: usize) -> f64 {
        let (p0, p1) = self.proba_matrix(x);
        let p_y = if y == 0 { p0 } else { p1 };
        -p_y.max(PROBABILITY_FLOOR).ln()
    }

    fn loss(&self, tokens: &[TokenId], y: usize) -> Result<f64> {
        Ok(self.loss_matrix(&self.encode(tokens)?, y))
    }

    /// Per-position gradient magnitude (L2 over the vocabulary axis) of the
    /// loss at the one-hot input. Pad positions report 0. The result always
    /// has `max_len` entries.
    fn position_gradients(&self, tokens: &[TokenId], y: usize) -> Result<Vec<f64>> {
        let x = self.encode(tokens)?;
        let grad = self.input_gradient_matrix(&x, y);
        let view_len = tokens.len().min(self.meta().max_len);
        let out = (0..self.meta().max_len)
            .map(|i| {
                if i < view_len {
                    grad.row(i).iter().map(|g| g * g).sum::<f64>().sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        Ok(out)
    }

    /// Index of the non-pad position with the largest gradient magnitude;
    /// ties resolve to the lowest index.
    fn vulnerable_position(&self, tokens: &[TokenId], y: usize) -> Result<usize> {
        let view_len = tokens.len().min(self.meta().max_len);
        if view_len == 0 {
            return Err(Error::NoPosition(
                "sequence view is all padding; no position to rank".into(),
            ));
        }
        let grads = self.position_gradients(tokens, y)?;
        let mut best = 0usize;
        for (i, &g) in grads.iter().enumerate().take(view_len).skip(1) {
            if g > grads[best] {
                best = i;
            }
        }
        Ok(best)
    }
}

/// Numerically stable softmax.
pub(crate) fn softmax(z: &Array1<f64>) -> Array1<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Array1<f64> = z.mapv(|v| (v - max).exp());
    let sum = exp.sum();
    exp / sum
}

/// Gradient of the floored cross-entropy w.r.t. two-class logits; `None`
/// when the probability sits below the floor (loss is flat there).
pub(crate) fn ce_logit_gradient(probs: (f64, f64), y: usize) -> Option<Array1<f64>> {
    let p_y = if y == 0 { probs.0 } else { probs.1 };
    if p_y <= PROBABILITY_FLOOR {
        return None;
    }
    let mut dz = Array1::from(vec![probs.0, probs.1]);
    dz[y] -= 1.0;
    Some(dz)
}

/// Xavier-uniform weight matrix.
pub(crate) fn init_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-limit..limit))
}

/// Pad-masked mean pool: positions are weighted by their non-pad input
/// mass, so readouts average over the true sequence, not the padded frame.
pub(crate) struct MaskedPool {
    pub weights: Array1<f64>,
    pub weight_sum: f64,
    pub pooled: Array1<f64>,
}

const POOL_EPS: f64 = 1e-9;

pub(crate) fn masked_mean(states: &Array2<f64>, x: &Array2<f64>, pad_id: usize) -> MaskedPool {
    let weights: Array1<f64> = x.column(pad_id).mapv(|p| 1.0 - p);
    let weight_sum: f64 = weights.sum();
    let pooled = if weight_sum < POOL_EPS {
        Array1::zeros(states.ncols())
    } else {
        let mut acc = Array1::zeros(states.ncols());
        for (t, row) in states.rows().into_iter().enumerate() {
            acc.scaled_add(weights[t], &row);
        }
        acc / weight_sum
    };
    MaskedPool {
        weights,
        weight_sum,
        pooled,
    }
}

/// Gradients of the masked mean: per-state gradient plus the per-position
/// weight gradient (to be folded into the pad column as its negation).
pub(crate) fn masked_mean_backward(
    pool: &MaskedPool,
    states: &Array2<f64>,
    d_pooled: &Array1<f64>,
) -> (Array2<f64>, Array1<f64>) {
    let rows = states.nrows();
    if pool.weight_sum < POOL_EPS {
        return (Array2::zeros(states.raw_dim()), Array1::zeros(rows));
    }
    let mut d_states = Array2::zeros(states.raw_dim());
    let mut d_weights = Array1::zeros(rows);
    for t in 0..rows {
        let scale = pool.weights[t] / pool.weight_sum;
        d_states.row_mut(t).assign(&(d_pooled * scale));
        let centered: f64 = d_pooled
            .iter()
            .zip(states.row(t).iter().zip(pool.pooled.iter()))
            .map(|(&dp, (&s, &p))| dp * (s - p))
            .sum();
        d_weights[t] = centered / pool.weight_sum;
    }
    (d_states, d_weights)
}

/// Dispatch wrapper so pipelines can hold any trained model uniformly.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "architecture", content = "weights", rename_all = "snake_case")]
pub enum AnyModel {
    Recurrent(RecurrentNet),
    Convolutional(ConvNet),
    Attention(AttentionNet),
    Autoencoder(AutoencoderNet),
    Linear(LinearScorer),
    /// A model trained on squeezed data that squeezes its input at
    /// inference time.
    Squeezed {
        inner: Box<AnyModel>,
        map: SqueezeMap,
    },
}

impl AnyModel {
    fn as_scorer(&self) -> &dyn SequenceScorer {
        match self {
            AnyModel::Recurrent(m) => m,
            AnyModel::Convolutional(m) => m,
            AnyModel::Attention(m) => m,
            AnyModel::Autoencoder(m) => m,
            AnyModel::Linear(m) => m,
            AnyModel::Squeezed { .. } => self,
        }
    }
}

impl SequenceScorer for AnyModel {
    fn architecture(&self) -> Architecture {
        match self {
            AnyModel::Squeezed { inner, .. } => inner.architecture(),
            other => other.as_scorer().architecture(),
        }
    }

    fn meta(&self) -> &ModelMeta {
        match self {
            AnyModel::Squeezed { inner, .. } => inner.meta(),
            other => other.as_scorer().meta(),
        }
    }

    fn proba_matrix(&self, x: &Array2<f64>) -> (f64, f64) {
        match self {
            AnyModel::Squeezed { inner, map } => inner.proba_matrix(&map.apply_matrix(x)),
            other => other.as_scorer().proba_matrix(x),
        }
    }

    fn input_gradient_matrix(&self, x: &Array2<f64>, y: usize) -> Array2<f64> {
        match self {
            AnyModel::Squeezed { inner, map } => {
                let inner_grad = inner.input_gradient_matrix(&map.apply_matrix(x), y);
                map.pull_back_gradient(&inner_grad)
            }
            other => other.as_scorer().input_gradient_matrix(x, y),
        }
    }
}

/// Black-box target contract: callers observe hard labels only.
pub trait HardLabelOracle: Send + Sync {
    fn hard_label(&self, tokens: &[TokenId]) -> Result<Label>;
}

impl<T: SequenceScorer> HardLabelOracle for T {
    fn hard_label(&self, tokens: &[TokenId]) -> Result<Label> {
        self.predict_label(tokens)
    }
}

pub(crate) fn encode_dataset(
    data: &[crate::seq::BehaviorSequence],
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<Vec<(Array2<f64>, usize)>> {
    data.iter()
        .map(|seq| {
            Ok((
                encode_tokens(seq.tokens(), vocab, max_len)?,
                seq.label().class_index(),
            ))
        })
        .collect()
}
