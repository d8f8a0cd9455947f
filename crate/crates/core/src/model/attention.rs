//! One transformer encoder block (2 heads, width 32, feed-forward 64) with
//! fixed sinusoidal positions, mean pooling and a linear head. No layer
//! norm at this scale.

use ndarray::{s, Array1, Array2, ArrayD, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{
    ce_logit_gradient, init_matrix, softmax, Architecture, ModelMeta, SequenceScorer,
};

pub const MODEL_DIM: usize = 32;
pub const HEADS: usize = 2;
const HEAD_DIM: usize = MODEL_DIM / HEADS;
const FF_DIM: usize = 64;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttentionNet {
    w_embed: Array2<f64>, // V x dm
    w_query: Array2<f64>, // dm x dm
    w_key: Array2<f64>,
    w_value: Array2<f64>,
    w_output: Array2<f64>, // dm x dm
    w_ff1: Array2<f64>,    // dm x dff
    b_ff1: Array1<f64>,
    w_ff2: Array2<f64>, // dff x dm
    b_ff2: Array1<f64>,
    w_head: Array2<f64>, // dm x 2
    b_head: Array1<f64>,
    positions: Array2<f64>, // L x dm, fixed
    meta: ModelMeta,
}

struct AttnCache {
    embedded: Array2<f64>,           // E
    attn_weights: Vec<Array2<f64>>,  // A_h per head
    head_values: Vec<Array2<f64>>,   // V_h per head
    head_queries: Vec<Array2<f64>>,  // Q_h
    head_keys: Vec<Array2<f64>>,     // K_h
    mixed: Array2<f64>,              // concat(O_h)
    post_attn: Array2<f64>,          // E2 = E + mixed W_o
    ff_hidden: Array2<f64>,          // tanh(E2 W1 + b1)
    final_states: Array2<f64>,       // E3
    pooled: Array1<f64>,
    logits: Array1<f64>,
    weights: Array1<f64>,
    weight_sum: f64,
}

fn sinusoidal_positions(len: usize, dim: usize) -> Array2<f64> {
    Array2::from_shape_fn((len, dim), |(t, i)| {
        let rate = 10000f64.powf((2 * (i / 2)) as f64 / dim as f64);
        let angle = t as f64 / rate;
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

impl AttentionNet {
    pub fn new(meta: ModelMeta) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(meta.seed);
        let v = meta.vocab_size;
        AttentionNet {
            w_embed: init_matrix(&mut rng, v, MODEL_DIM),
            w_query: init_matrix(&mut rng, MODEL_DIM, MODEL_DIM),
            w_key: init_matrix(&mut rng, MODEL_DIM, MODEL_DIM),
            w_value: init_matrix(&mut rng, MODEL_DIM, MODEL_DIM),
            w_output: init_matrix(&mut rng, MODEL_DIM, MODEL_DIM),
            w_ff1: init_matrix(&mut rng, MODEL_DIM, FF_DIM),
            b_ff1: Array1::zeros(FF_DIM),
            w_ff2: init_matrix(&mut rng, FF_DIM, MODEL_DIM),
            b_ff2: Array1::zeros(MODEL_DIM),
            w_head: init_matrix(&mut rng, MODEL_DIM, 2),
            b_head: Array1::zeros(2),
            positions: sinusoidal_positions(meta.max_len, MODEL_DIM),
            meta,
        }
    }

    fn forward(&self, x: &Array2<f64>) -> AttnCache {
        let len = x.nrows();
        let embedded = x.dot(&self.w_embed) + self.positions.slice(s![..len, ..]);
        let queries = embedded.dot(&self.w_query);
        let keys = embedded.dot(&self.w_key);
        let values = embedded.dot(&self.w_value);

        let scale = 1.0 / (HEAD_DIM as f64).sqrt();
        let mut mixed = Array2::zeros((len, MODEL_DIM));
        let mut attn_weights = Vec::with_capacity(HEADS);
        let mut head_values = Vec::with_capacity(HEADS);
        let mut head_queries = Vec::with_capacity(HEADS);
        let mut head_keys = Vec::with_capacity(HEADS);
        for h in 0..HEADS {
            let cols = s![.., h * HEAD_DIM..(h + 1) * HEAD_DIM];
            let q_h = queries.slice(cols).to_owned();
            let k_h = keys.slice(cols).to_owned();
            let v_h = values.slice(cols).to_owned();
            let scores = q_h.dot(&k_h.t()) * scale;
            let mut weights = Array2::zeros((len, len));
            for (i, row) in scores.axis_iter(Axis(0)).enumerate() {
                weights.row_mut(i).assign(&softmax(&row.to_owned()));
            }
            let out_h = weights.dot(&v_h);
            mixed.slice_mut(cols).assign(&out_h);
            attn_weights.push(weights);
            head_values.push(v_h);
            head_queries.push(q_h);
            head_keys.push(k_h);
        }

        let post_attn = &embedded + &mixed.dot(&self.w_output);
        let ff_hidden = (post_attn.dot(&self.w_ff1) + &self.b_ff1).mapv(f64::tanh);
        let final_states = &post_attn + &(ff_hidden.dot(&self.w_ff2) + &self.b_ff2);
        let pool = crate::model::masked_mean(&final_states, x, self.meta.pad_id);
        let logits = pool.pooled.dot(&self.w_head) + &self.b_head;
        AttnCache {
            embedded,
            attn_weights,
            head_values,
            head_queries,
            head_keys,
            mixed,
            post_attn,
            ff_hidden,
            final_states,
            pooled: pool.pooled,
            logits,
            weights: pool.weights,
            weight_sum: pool.weight_sum,
        }
    }

    fn backward(&self, x: &Array2<f64>, cache: &AttnCache, d_logits: &Array1<f64>) -> AttnGrads {
        let len = x.nrows();
        let d_w_head = super::recurrent::outer(&cache.pooled, d_logits);
        let d_b_head = d_logits.clone();
        let d_pooled = self.w_head.dot(d_logits);
        let pool = crate::model::MaskedPool {
            weights: cache.weights.clone(),
            weight_sum: cache.weight_sum,
            pooled: cache.pooled.clone(),
        };
        let (d_final, d_weights) =
            crate::model::masked_mean_backward(&pool, &cache.final_states, &d_pooled);

        // Feed-forward with residual.
        let d_ff_out = d_final.clone();
        let d_w_ff2 = cache.ff_hidden.t().dot(&d_ff_out);
        let d_b_ff2 = d_ff_out.sum_axis(Axis(0));
        let d_ff_hidden = d_ff_out.dot(&self.w_ff2.t());
        let d_ff_pre = &d_ff_hidden * &cache.ff_hidden.mapv(|h| 1.0 - h * h);
        let d_w_ff1 = cache.post_attn.t().dot(&d_ff_pre);
        let d_b_ff1 = d_ff_pre.sum_axis(Axis(0));
        let d_post_attn = &d_final + &d_ff_pre.dot(&self.w_ff1.t());

        // Attention mix with residual.
        let d_mix_out = d_post_attn.clone();
        let d_w_output = cache.mixed.t().dot(&d_mix_out);
        let d_mixed = d_mix_out.dot(&self.w_output.t());

        let scale = 1.0 / (HEAD_DIM as f64).sqrt();
        let mut d_queries = Array2::zeros((len, MODEL_DIM));
        let mut d_keys = Array2::zeros((len, MODEL_DIM));
        let mut d_values = Array2::zeros((len, MODEL_DIM));
        for h in 0..HEADS {
            let cols = s![.., h * HEAD_DIM..(h + 1) * HEAD_DIM];
            let d_out_h = d_mixed.slice(cols).to_owned();
            let weights = &cache.attn_weights[h];
            let d_weights = d_out_h.dot(&cache.head_values[h].t());
            let d_v_h = weights.t().dot(&d_out_h);
            // Row-wise softmax backward.
            let mut d_scores = Array2::zeros((len, len));
            for i in 0..len {
                let a = weights.row(i);
                let da = d_weights.row(i);
                let dot: f64 = a.iter().zip(da.iter()).map(|(&w, &g)| w * g).sum();
                let ds: Array1<f64> = a
                    .iter()
                    .zip(da.iter())
                    .map(|(&w, &g)| w * (g - dot))
                    .collect();
                d_scores.row_mut(i).assign(&ds);
            }
            let d_q_h = d_scores.dot(&cache.head_keys[h]) * scale;
            let d_k_h = d_scores.t().dot(&cache.head_queries[h]) * scale;
            d_queries.slice_mut(cols).assign(&d_q_h);
            d_keys.slice_mut(cols).assign(&d_k_h);
            d_values.slice_mut(cols).assign(&d_v_h);
        }

        let embedded = &cache.embedded;
        let d_w_query = embedded.t().dot(&d_queries);
        let d_w_key = embedded.t().dot(&d_keys);
        let d_w_value = embedded.t().dot(&d_values);
        let d_embedded = &d_post_attn
            + &(d_queries.dot(&self.w_query.t())
                + d_keys.dot(&self.w_key.t())
                + d_values.dot(&self.w_value.t()));
        let d_w_embed = x.t().dot(&d_embedded);
        let mut d_input = d_embedded.dot(&self.w_embed.t());
        for t in 0..len {
            d_input[[t, self.meta.pad_id]] -= d_weights[t];
        }

        AttnGrads {
            w_embed: d_w_embed,
            w_query: d_w_query,
            w_key: d_w_key,
            w_value: d_w_value,
            w_output: d_w_output,
            w_ff1: d_w_ff1,
            b_ff1: d_b_ff1,
            w_ff2: d_w_ff2,
            b_ff2: d_b_ff2,
            w_head: d_w_head,
            b_head: d_b_head,
            input: d_input,
        }
    }

    pub(crate) fn params_mut(&mut self) -> Vec<ndarray::ArrayViewMutD<'_, f64>> {
        vec![
            self.w_embed.view_mut().into_dyn(),
            self.w_query.view_mut().into_dyn(),
            self.w_key.view_mut().into_dyn(),
            self.w_value.view_mut().into_dyn(),
            self.w_output.view_mut().into_dyn(),
            self.w_ff1.view_mut().into_dyn(),
            self.b_ff1.view_mut().into_dyn(),
            self.w_ff2.view_mut().into_dyn(),
            self.b_ff2.view_mut().into_dyn(),
            self.w_head.view_mut().into_dyn(),
            self.b_head.view_mut().into_dyn(),
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

struct AttnGrads {
    w_embed: Array2<f64>,
    w_query: Array2<f64>,
    w_key: Array2<f64>,
    w_value: Array2<f64>,
    w_output: Array2<f64>,
    w_ff1: Array2<f64>,
    b_ff1: Array1<f64>,
    w_ff2: Array2<f64>,
    b_ff2: Array1<f64>,
    w_head: Array2<f64>,
    b_head: Array1<f64>,
    input: Array2<f64>,
}

fn flatten(g: AttnGrads) -> (Vec<ArrayD<f64>>, Array2<f64>) {
    (
        vec![
            g.w_embed.into_dyn(),
            g.w_query.into_dyn(),
            g.w_key.into_dyn(),
            g.w_value.into_dyn(),
            g.w_output.into_dyn(),
            g.w_ff1.into_dyn(),
            g.b_ff1.into_dyn(),
            g.w_ff2.into_dyn(),
            g.b_ff2.into_dyn(),
            g.w_head.into_dyn(),
            g.b_head.into_dyn(),
        ],
        g.input,
    )
}

impl SequenceScorer for AttentionNet {
    fn architecture(&self) -> Architecture {
        Architecture::Attention
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
