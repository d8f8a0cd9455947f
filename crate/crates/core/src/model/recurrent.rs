//! Single-layer tanh recurrence with a mean-pooled linear readout.
//!
//! Doubles as the DQN value network: `out_dim` is 2 for the classifier
//! role and one-per-action for the Q role.

use ndarray::{Array1, Array2, ArrayD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{
    ce_logit_gradient, init_matrix, softmax, Architecture, ModelMeta, SequenceScorer,
};

pub const HIDDEN: usize = 32;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecurrentNet {
    w_xh: Array2<f64>, // V x H
    w_hh: Array2<f64>, // H x H
    b_h: Array1<f64>,
    w_out: Array2<f64>, // H x D
    b_out: Array1<f64>,
    meta: ModelMeta,
}

pub(crate) struct RecCache {
    pub hidden: Array2<f64>, // L x H
    pub pooled: Array1<f64>,
    pub logits: Array1<f64>,
    pub weights: Array1<f64>, // non-pad mass per position
    pub weight_sum: f64,
}

pub(crate) struct RecGrads {
    pub w_xh: Array2<f64>,
    pub w_hh: Array2<f64>,
    pub b_h: Array1<f64>,
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
    pub input: Array2<f64>,
}

impl RecurrentNet {
    pub fn new(meta: ModelMeta, out_dim: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(meta.seed);
        RecurrentNet {
            w_xh: init_matrix(&mut rng, meta.vocab_size, HIDDEN),
            w_hh: init_matrix(&mut rng, HIDDEN, HIDDEN),
            b_h: Array1::zeros(HIDDEN),
            w_out: init_matrix(&mut rng, HIDDEN, out_dim),
            b_out: Array1::zeros(out_dim),
            meta,
        }
    }

    pub fn out_dim(&self) -> usize {
        self.b_out.len()
    }

    pub(crate) fn forward(&self, x: &Array2<f64>) -> RecCache {
        let steps = x.nrows();
        let mut hidden = Array2::zeros((steps, HIDDEN));
        let mut h_prev = Array1::zeros(HIDDEN);
        for t in 0..steps {
            let pre = x.row(t).dot(&self.w_xh) + h_prev.dot(&self.w_hh) + &self.b_h;
            let h_t = pre.mapv(f64::tanh);
            hidden.row_mut(t).assign(&h_t);
            h_prev = h_t;
        }
        let pool = crate::model::masked_mean(&hidden, x, self.meta.pad_id);
        let logits = pool.pooled.dot(&self.w_out) + &self.b_out;
        RecCache {
            hidden,
            pooled: pool.pooled,
            logits,
            weights: pool.weights,
            weight_sum: pool.weight_sum,
        }
    }

    /// Backpropagates `d_logits` through the readout and the recurrence.
    pub(crate) fn backward(
        &self,
        x: &Array2<f64>,
        cache: &RecCache,
        d_logits: &Array1<f64>,
    ) -> RecGrads {
        let steps = x.nrows();
        let d_w_out = outer(&cache.pooled, d_logits);
        let d_b_out = d_logits.clone();
        let d_pooled = self.w_out.dot(d_logits);
        let pool = crate::model::MaskedPool {
            weights: cache.weights.clone(),
            weight_sum: cache.weight_sum,
            pooled: cache.pooled.clone(),
        };
        let (d_hidden_pool, d_weights) =
            crate::model::masked_mean_backward(&pool, &cache.hidden, &d_pooled);

        let mut d_w_xh = Array2::zeros(self.w_xh.raw_dim());
        let mut d_w_hh = Array2::zeros(self.w_hh.raw_dim());
        let mut d_b_h = Array1::zeros(HIDDEN);
        let mut d_input = Array2::zeros(x.raw_dim());
        let mut carry: Array1<f64> = Array1::zeros(HIDDEN);
        for t in (0..steps).rev() {
            let h_t = cache.hidden.row(t);
            let total = &carry + &d_hidden_pool.row(t);
            let d_pre: Array1<f64> = total
                .iter()
                .zip(h_t.iter())
                .map(|(&d, &h)| d * (1.0 - h * h))
                .collect();
            d_w_xh += &outer(&x.row(t).to_owned(), &d_pre);
            if t > 0 {
                d_w_hh += &outer(&cache.hidden.row(t - 1).to_owned(), &d_pre);
            }
            d_b_h += &d_pre;
            d_input.row_mut(t).assign(&self.w_xh.dot(&d_pre));
            carry = self.w_hh.dot(&d_pre);
        }
        // Pool weights are 1 - x[t, pad].
        for t in 0..steps {
            d_input[[t, self.meta.pad_id]] -= d_weights[t];
        }
        RecGrads {
            w_xh: d_w_xh,
            w_hh: d_w_hh,
            b_h: d_b_h,
            w_out: d_w_out,
            b_out: d_b_out,
            input: d_input,
        }
    }

    pub(crate) fn params_mut(&mut self) -> Vec<ndarray::ArrayViewMutD<'_, f64>> {
        vec![
            self.w_xh.view_mut().into_dyn(),
            self.w_hh.view_mut().into_dyn(),
            self.b_h.view_mut().into_dyn(),
            self.w_out.view_mut().into_dyn(),
            self.b_out.view_mut().into_dyn(),
        ]
    }

    pub(crate) fn grads_flat(grads: RecGrads) -> (Vec<ArrayD<f64>>, Array2<f64>) {
        (
            vec![
                grads.w_xh.into_dyn(),
                grads.w_hh.into_dyn(),
                grads.b_h.into_dyn(),
                grads.w_out.into_dyn(),
                grads.b_out.into_dyn(),
            ],
            grads.input,
        )
    }

    /// Raw output vector; Q-values when used as the value network.
    pub fn output_values(&self, x: &Array2<f64>) -> Array1<f64> {
        self.forward(x).logits
    }

    pub(crate) fn loss_gradients(
        &self,
        x: &Array2<f64>,
        y: usize,
    ) -> Option<(Vec<ArrayD<f64>>, Array2<f64>)> {
        let cache = self.forward(x);
        let probs = softmax(&cache.logits);
        let dz = ce_logit_gradient((probs[0], probs[1]), y)?;
        Some(Self::grads_flat(self.backward(x, &cache, &dz)))
    }

    /// Training gradients against arbitrary soft targets.
    pub(crate) fn target_gradients(
        &self,
        x: &Array2<f64>,
        targets: &Array1<f64>,
    ) -> Vec<ArrayD<f64>> {
        let cache = self.forward(x);
        let dz = softmax(&cache.logits) - targets;
        Self::grads_flat(self.backward(x, &cache, &dz)).0
    }

    /// Backpropagates an arbitrary output gradient; used by the Q-learning
    /// update where the loss is squared TD error on one action output.
    pub(crate) fn output_gradients(
        &self,
        x: &Array2<f64>,
        d_logits: &Array1<f64>,
    ) -> Vec<ArrayD<f64>> {
        let cache = self.forward(x);
        Self::grads_flat(self.backward(x, &cache, d_logits)).0
    }

    pub(crate) fn meta_mut(&mut self) -> &mut ModelMeta {
        &mut self.meta
    }
}

pub(crate) fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let a2 = a.view().insert_axis(ndarray::Axis(1));
    let b2 = b.view().insert_axis(ndarray::Axis(0));
    a2.dot(&b2)
}

impl SequenceScorer for RecurrentNet {
    fn architecture(&self) -> Architecture {
        Architecture::Recurrent
    }

    fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    fn proba_matrix(&self, x: &Array2<f64>) -> (f64, f64) {
        debug_assert_eq!(self.out_dim(), 2, "classifier role requires two outputs");
        let p = softmax(&self.forward(x).logits);
        (p[0], p[1])
    }

    fn input_gradient_matrix(&self, x: &Array2<f64>, y: usize) -> Array2<f64> {
        let cache = self.forward(x);
        let probs = softmax(&cache.logits);
        match ce_logit_gradient((probs[0], probs[1]), y) {
            Some(dz) => self.backward(x, &cache, &dz).input,
            None => Array2::zeros(x.raw_dim()),
        }
    }
}
