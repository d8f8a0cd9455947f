//! Window-level embedding-bottleneck autoencoder. The whole window is
//! compressed into one bottleneck code (masked mean of token embeddings);
//! the decoder reproduces the window's token distribution from the code.
//! Reconstruction error is the cross-entropy between the window's actual
//! token mix and the decoded distribution, so tokens the benign corpus
//! never contained reconstruct badly. Trained on benign sequences only;
//! classification thresholds the error, smoothed through a logistic so
//! the scorer stays differentiable.

use ndarray::{Array1, Array2, ArrayD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::recurrent::outer;
use crate::model::{init_matrix, Architecture, ModelMeta, SequenceScorer, PROBABILITY_FLOOR};

pub const BOTTLENECK: usize = 4;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AutoencoderNet {
    w_enc: Array2<f64>, // V x B
    b_enc: Array1<f64>,
    w_dec: Array2<f64>, // B x V
    b_dec: Array1<f64>,
    /// Reconstruction-error decision threshold (95th percentile of benign
    /// validation error after training).
    threshold: f64,
    /// Logistic temperature converting error margin into probability.
    temperature: f64,
    meta: ModelMeta,
}

struct AeCache {
    weights: Array1<f64>, // non-pad mass per position
    weight_sum: f64,
    mix: Array1<f64>,       // q: masked mean token distribution (V)
    embed_mean: Array1<f64>, // masked mean of X W_enc (B)
    code: Array1<f64>,      // tanh bottleneck (B)
    log_probs: Array1<f64>, // log softmax decode (V)
    probs: Array1<f64>,
    error: f64,
}

impl AutoencoderNet {
    pub fn new(meta: ModelMeta) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(meta.seed);
        let v = meta.vocab_size;
        AutoencoderNet {
            w_enc: init_matrix(&mut rng, v, BOTTLENECK),
            b_enc: Array1::zeros(BOTTLENECK),
            w_dec: init_matrix(&mut rng, BOTTLENECK, v),
            b_dec: Array1::zeros(v),
            threshold: 3.5,
            temperature: 0.25,
            meta,
        }
    }

    fn forward(&self, x: &Array2<f64>) -> AeCache {
        let v = x.ncols();
        let weights: Array1<f64> = x.column(self.meta.pad_id).mapv(|p| 1.0 - p);
        let weight_sum = weights.sum();
        let (mix, embed_mean) = if weight_sum < 1e-9 {
            (Array1::zeros(v), Array1::zeros(BOTTLENECK))
        } else {
            let mut mix = Array1::zeros(v);
            for (t, row) in x.rows().into_iter().enumerate() {
                mix.scaled_add(weights[t], &row);
            }
            mix /= weight_sum;
            (mix.clone(), mix.dot(&self.w_enc))
        };
        let code = (&embed_mean + &self.b_enc).mapv(f64::tanh);
        let logits = code.dot(&self.w_dec) + &self.b_dec;
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let logsum = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
        let log_probs = logits.mapv(|l| l - logsum);
        let probs = log_probs.mapv(f64::exp);
        let error = -mix.dot(&log_probs);
        AeCache {
            weights,
            weight_sum,
            mix,
            embed_mean,
            code,
            log_probs,
            probs,
            error,
        }
    }

    /// Cross-entropy between the window's token mix and its decoded
    /// distribution.
    pub fn reconstruction_error(&self, x: &Array2<f64>) -> f64 {
        self.forward(x).error
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Stamps the decision threshold and probability temperature from
    /// benign validation errors.
    pub(crate) fn calibrate(&mut self, threshold: f64, temperature: f64) {
        self.threshold = threshold;
        self.temperature = temperature.max(1e-3);
    }

    /// Gradients of the reconstruction error: parameter list plus input.
    fn error_gradients(&self, x: &Array2<f64>, cache: &AeCache) -> (Vec<ArrayD<f64>>, Array2<f64>) {
        if cache.weight_sum < 1e-9 {
            return (
                vec![
                    Array2::<f64>::zeros(self.w_enc.raw_dim()).into_dyn(),
                    Array1::<f64>::zeros(self.b_enc.raw_dim()).into_dyn(),
                    Array2::<f64>::zeros(self.w_dec.raw_dim()).into_dyn(),
                    Array1::<f64>::zeros(self.b_dec.raw_dim()).into_dyn(),
                ],
                Array2::zeros(x.raw_dim()),
            );
        }
        // err = -q . log softmax(code W_dec + b_dec), q = mix.
        let mix_mass: f64 = cache.mix.sum();
        let d_logits: Array1<f64> = &cache.probs * mix_mass - &cache.mix;
        let d_w_dec = outer(&cache.code, &d_logits);
        let d_b_dec = d_logits.clone();
        let d_code = self.w_dec.dot(&d_logits);
        let d_embed: Array1<f64> = d_code
            .iter()
            .zip(cache.code.iter())
            .map(|(&d, &c)| d * (1.0 - c * c))
            .collect();
        // embed_mean = q W_enc, so dW_enc = q^T d_embed.
        let d_w_enc = outer(&cache.mix, &d_embed);
        let d_b_enc = d_embed.clone();

        // d err / d q: the target side plus the encoder side.
        let d_mix: Array1<f64> = cache
            .log_probs
            .iter()
            .zip(self.w_enc.rows())
            .map(|(&lp, enc_row)| -lp + enc_row.dot(&d_embed))
            .collect();
        // q_v = sum_t w_t x_tv / W.
        let mut d_input = Array2::zeros(x.raw_dim());
        for t in 0..x.nrows() {
            let w_scale = cache.weights[t] / cache.weight_sum;
            for v in 0..x.ncols() {
                d_input[[t, v]] = d_mix[v] * w_scale;
            }
            // Weight path: w_t = 1 - x[t, pad];
            // dq_v / dw_t = (x_tv - q_v) / W.
            let centered: f64 = d_mix
                .iter()
                .zip(x.row(t).iter().zip(cache.mix.iter()))
                .map(|(&dm, (&xv, &qv))| dm * (xv - qv))
                .sum();
            d_input[[t, self.meta.pad_id]] -= centered / cache.weight_sum;
        }
        (
            vec![
                d_w_enc.into_dyn(),
                d_b_enc.into_dyn(),
                d_w_dec.into_dyn(),
                d_b_dec.into_dyn(),
            ],
            d_input,
        )
    }

    /// Reconstruction-only gradients for benign training.
    pub(crate) fn recon_gradients(&self, x: &Array2<f64>) -> Vec<ArrayD<f64>> {
        let cache = self.forward(x);
        self.error_gradients(x, &cache).0
    }

    pub(crate) fn params_mut(&mut self) -> Vec<ndarray::ArrayViewMutD<'_, f64>> {
        vec![
            self.w_enc.view_mut().into_dyn(),
            self.b_enc.view_mut().into_dyn(),
            self.w_dec.view_mut().into_dyn(),
            self.b_dec.view_mut().into_dyn(),
        ]
    }

    pub(crate) fn meta_mut(&mut self) -> &mut ModelMeta {
        &mut self.meta
    }

    fn malicious_proba(&self, error: f64) -> f64 {
        let u = (error - self.threshold) / self.temperature;
        1.0 / (1.0 + (-u).exp())
    }
}

impl SequenceScorer for AutoencoderNet {
    fn architecture(&self) -> Architecture {
        Architecture::Autoencoder
    }

    fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    fn proba_matrix(&self, x: &Array2<f64>) -> (f64, f64) {
        let p_mal = self.malicious_proba(self.forward(x).error);
        (1.0 - p_mal, p_mal)
    }

    fn input_gradient_matrix(&self, x: &Array2<f64>, y: usize) -> Array2<f64> {
        let cache = self.forward(x);
        let p_mal = self.malicious_proba(cache.error);
        let p_y = if y == 0 { 1.0 - p_mal } else { p_mal };
        if p_y <= PROBABILITY_FLOOR {
            return Array2::zeros(x.raw_dim());
        }
        // loss = -ln p_y; d loss / d u = p_mal - y.
        let d_u = p_mal - y as f64;
        let d_error = d_u / self.temperature;
        let (_, d_input) = self.error_gradients(x, &cache);
        d_input * d_error
    }
}
