//! Fixed-weight linear scorer: the malicious logit is a per-token weight
//! summed over positions. Used as a controllable target in tests and as
//! the rigged environment for DQN convergence checks (one token carries a
//! strongly benign weight, so inserting it flips the verdict).

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::model::{Architecture, ModelMeta, SequenceScorer, PROBABILITY_FLOOR};
use crate::seq::{TokenId, Vocabulary};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearScorer {
    /// Per-token contribution to the malicious logit, indexed by id.
    token_weights: Vec<f64>,
    bias: f64,
    meta: ModelMeta,
}

impl LinearScorer {
    pub fn new(vocab: &Vocabulary, max_len: usize, token_weights: Vec<f64>, bias: f64) -> Self {
        assert_eq!(token_weights.len(), vocab.len());
        let mut meta = ModelMeta::new(vocab, max_len, 0);
        meta.trained_accuracy = Some(1.0);
        LinearScorer {
            token_weights,
            bias,
            meta,
        }
    }

    /// Classifies everything malicious with the given logit margin.
    pub fn constant_malicious(vocab: &Vocabulary, max_len: usize, margin: f64) -> Self {
        Self::new(vocab, max_len, vec![0.0; vocab.len()], margin.abs())
    }

    /// Classifies everything benign with the given logit margin.
    pub fn constant_benign(vocab: &Vocabulary, max_len: usize, margin: f64) -> Self {
        Self::new(vocab, max_len, vec![0.0; vocab.len()], -margin.abs())
    }

    /// Malicious by default; any occurrence of `flip_token` drives the
    /// verdict benign.
    pub fn rigged(vocab: &Vocabulary, max_len: usize, flip_token: TokenId) -> Self {
        let mut weights = vec![0.0; vocab.len()];
        weights[flip_token] = -6.0;
        Self::new(vocab, max_len, weights, 2.0)
    }

    fn malicious_logit(&self, x: &Array2<f64>) -> f64 {
        let mut logit = self.bias;
        for row in x.rows() {
            for (v, &mass) in row.iter().enumerate() {
                logit += mass * self.token_weights[v];
            }
        }
        logit
    }
}

impl SequenceScorer for LinearScorer {
    fn architecture(&self) -> Architecture {
        Architecture::Linear
    }

    fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    fn proba_matrix(&self, x: &Array2<f64>) -> (f64, f64) {
        let p_mal = 1.0 / (1.0 + (-self.malicious_logit(x)).exp());
        (1.0 - p_mal, p_mal)
    }

    fn input_gradient_matrix(&self, x: &Array2<f64>, y: usize) -> Array2<f64> {
        let (p0, p1) = self.proba_matrix(x);
        let p_y = if y == 0 { p0 } else { p1 };
        if p_y <= PROBABILITY_FLOOR {
            return Array2::zeros(x.raw_dim());
        }
        // d loss / d logit = p_mal - y
        let d_logit = p1 - y as f64;
        Array2::from_shape_fn(x.raw_dim(), |(_, v)| d_logit * self.token_weights[v])
    }
}
