//! Two stacked one-dimensional convolutions (widths 3 and 5, 16 filters,
//! tanh, same padding) with mean pooling and a linear head.

use ndarray::{Array1, Array2, Array3, ArrayD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{
    ce_logit_gradient, init_matrix, softmax, Architecture, ModelMeta, SequenceScorer,
};

pub const FILTERS: usize = 16;
const WIDTH1: usize = 3;
const WIDTH2: usize = 5;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvNet {
    kernel1: Array3<f64>, // WIDTH1 x V x F
    bias1: Array1<f64>,
    kernel2: Array3<f64>, // WIDTH2 x F x F
    bias2: Array1<f64>,
    w_out: Array2<f64>, // F x 2
    b_out: Array1<f64>,
    meta: ModelMeta,
}

struct ConvCache {
    act1: Array2<f64>, // L x F
    act2: Array2<f64>, // L x F
    pooled: Array1<f64>,
    logits: Array1<f64>,
    weights: Array1<f64>,
    weight_sum: f64,
}

impl ConvNet {
    pub fn new(meta: ModelMeta) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(meta.seed);
        let v = meta.vocab_size;
        let mut kernel1 = Array3::zeros((WIDTH1, v, FILTERS));
        for d in 0..WIDTH1 {
            kernel1
                .index_axis_mut(ndarray::Axis(0), d)
                .assign(&init_matrix(&mut rng, v, FILTERS));
        }
        let mut kernel2 = Array3::zeros((WIDTH2, FILTERS, FILTERS));
        for d in 0..WIDTH2 {
            kernel2
                .index_axis_mut(ndarray::Axis(0), d)
                .assign(&init_matrix(&mut rng, FILTERS, FILTERS));
        }
        ConvNet {
            kernel1,
            bias1: Array1::zeros(FILTERS),
            kernel2,
            bias2: Array1::zeros(FILTERS),
            w_out: init_matrix(&mut rng, FILTERS, 2),
            b_out: Array1::zeros(2),
            meta,
        }
    }

    fn forward(&self, x: &Array2<f64>) -> ConvCache {
        let steps = x.nrows();
        let offset1 = (WIDTH1 / 2) as isize;
        let mut act1 = Array2::zeros((steps, FILTERS));
        for t in 0..steps {
            let mut pre = self.bias1.clone();
            for d in 0..WIDTH1 {
                let src = t as isize + d as isize - offset1;
                if src < 0 || src >= steps as isize {
                    continue;
                }
                pre += &x
                    .row(src as usize)
                    .dot(&self.kernel1.index_axis(ndarray::Axis(0), d));
            }
            act1.row_mut(t).assign(&pre.mapv(f64::tanh));
        }

        let offset2 = (WIDTH2 / 2) as isize;
        let mut act2 = Array2::zeros((steps, FILTERS));
        for t in 0..steps {
            let mut pre = self.bias2.clone();
            for d in 0..WIDTH2 {
                let src = t as isize + d as isize - offset2;
                if src < 0 || src >= steps as isize {
                    continue;
                }
                pre += &act1
                    .row(src as usize)
                    .dot(&self.kernel2.index_axis(ndarray::Axis(0), d));
            }
            act2.row_mut(t).assign(&pre.mapv(f64::tanh));
        }

        let pool = crate::model::masked_mean(&act2, x, self.meta.pad_id);
        let logits = pool.pooled.dot(&self.w_out) + &self.b_out;
        ConvCache {
            act1,
            act2,
            pooled: pool.pooled,
            logits,
            weights: pool.weights,
            weight_sum: pool.weight_sum,
        }
    }

    fn backward(&self, x: &Array2<f64>, cache: &ConvCache, d_logits: &Array1<f64>) -> ConvGrads {
        let steps = x.nrows();
        let d_w_out = super::recurrent::outer(&cache.pooled, d_logits);
        let d_b_out = d_logits.clone();
        let d_pooled = self.w_out.dot(d_logits);
        let pool = crate::model::MaskedPool {
            weights: cache.weights.clone(),
            weight_sum: cache.weight_sum,
            pooled: cache.pooled.clone(),
        };
        let (d_act2_pool, d_weights) =
            crate::model::masked_mean_backward(&pool, &cache.act2, &d_pooled);

        // Layer 2 backward.
        let offset2 = (WIDTH2 / 2) as isize;
        let mut d_kernel2 = Array3::zeros(self.kernel2.raw_dim());
        let mut d_bias2 = Array1::zeros(FILTERS);
        let mut d_act1 = Array2::zeros((steps, FILTERS));
        for t in 0..steps {
            let a2 = cache.act2.row(t);
            let d_pre: Array1<f64> = d_act2_pool
                .row(t)
                .iter()
                .zip(a2.iter())
                .map(|(&d, &a)| d * (1.0 - a * a))
                .collect();
            d_bias2 += &d_pre;
            for d in 0..WIDTH2 {
                let src = t as isize + d as isize - offset2;
                if src < 0 || src >= steps as isize {
                    continue;
                }
                let src = src as usize;
                d_kernel2
                    .index_axis_mut(ndarray::Axis(0), d)
                    .scaled_add(1.0, &super::recurrent::outer(&cache.act1.row(src).to_owned(), &d_pre));
                let back = self.kernel2.index_axis(ndarray::Axis(0), d).dot(&d_pre);
                d_act1.row_mut(src).scaled_add(1.0, &back);
            }
        }

        // Layer 1 backward.
        let offset1 = (WIDTH1 / 2) as isize;
        let mut d_kernel1 = Array3::zeros(self.kernel1.raw_dim());
        let mut d_bias1 = Array1::zeros(FILTERS);
        let mut d_input = Array2::zeros(x.raw_dim());
        for t in 0..steps {
            let a1 = cache.act1.row(t);
            let d_here = d_act1.row(t);
            let d_pre: Array1<f64> = d_here
                .iter()
                .zip(a1.iter())
                .map(|(&d, &a)| d * (1.0 - a * a))
                .collect();
            d_bias1 += &d_pre;
            for d in 0..WIDTH1 {
                let src = t as isize + d as isize - offset1;
                if src < 0 || src >= steps as isize {
                    continue;
                }
                let src = src as usize;
                d_kernel1
                    .index_axis_mut(ndarray::Axis(0), d)
                    .scaled_add(1.0, &super::recurrent::outer(&x.row(src).to_owned(), &d_pre));
                let back = self.kernel1.index_axis(ndarray::Axis(0), d).dot(&d_pre);
                d_input.row_mut(src).scaled_add(1.0, &back);
            }
        }
        for t in 0..steps {
            d_input[[t, self.meta.pad_id]] -= d_weights[t];
        }

        ConvGrads {
            kernel1: d_kernel1,
            bias1: d_bias1,
            kernel2: d_kernel2,
            bias2: d_bias2,
            w_out: d_w_out,
            b_out: d_b_out,
            input: d_input,
        }
    }

    pub(crate) fn params_mut(&mut self) -> Vec<ndarray::ArrayViewMutD<'_, f64>> {
        vec![
            self.kernel1.view_mut().into_dyn(),
            self.bias1.view_mut().into_dyn(),
            self.kernel2.view_mut().into_dyn(),
            self.bias2.view_mut().into_dyn(),
            self.w_out.view_mut().into_dyn(),
            self.b_out.view_mut().into_dyn(),
        ]
    }

    /// Training gradients against arbitrary soft targets.
    pub(crate) fn target_gradients(
        &self,
        x: &Array2<f64>,
        targets: &Array1<f64>,
    ) -> Vec<ArrayD<f64>> {
        let cache = self.forward(x);
        let dz = softmax(&cache.logits) - targets;
        flatten(self.backward(x, &cache, &dz)).0
    }

    pub(crate) fn loss_gradients(
        &self,
        x: &Array2<f64>,
        y: usize,
    ) -> Option<(Vec<ArrayD<f64>>, Array2<f64>)> {
        let cache = self.forward(x);
        let probs = softmax(&cache.logits);
        let dz = ce_logit_gradient((probs[0], probs[1]), y)?;
        Some(flatten(self.backward(x, &cache, &dz)))
    }

    pub(crate) fn meta_mut(&mut self) -> &mut ModelMeta {
        &mut self.meta
    }
}

struct ConvGrads {
    kernel1: Array3<f64>,
    bias1: Array1<f64>,
    kernel2: Array3<f64>,
    bias2: Array1<f64>,
    w_out: Array2<f64>,
    b_out: Array1<f64>,
    input: Array2<f64>,
}

fn flatten(grads: ConvGrads) -> (Vec<ArrayD<f64>>, Array2<f64>) {
    (
        vec![
            grads.kernel1.into_dyn(),
            grads.bias1.into_dyn(),
            grads.kernel2.into_dyn(),
            grads.bias2.into_dyn(),
            grads.w_out.into_dyn(),
            grads.b_out.into_dyn(),
        ],
        grads.input,
    )
}

impl SequenceScorer for ConvNet {
    fn architecture(&self) -> Architecture {
        Architecture::Convolutional
    }

    fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    fn proba_matrix(&self, x: &Array2<f64>) -> (f64, f64) {
        let p = softmax(&self.forward(x).logits);
        (p[0], p[1])
    }

    fn input_gradient_matrix(&self, x: &Array2<f64>, y: usize) -> Array2<f64> {
        match self.loss_gradients(x, y) {
            Some((_, input)) => input,
            None => Array2::zeros(x.raw_dim()),
        }
    }
}
