//! Training, evaluation and black-box surrogate distillation.

use ndarray::{Array1, Array2, ArrayD, ArrayViewMutD};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::par_map;
use crate::model::optim::{accumulate, scale, Adam};
use crate::model::{
    encode_dataset, AnyModel, Architecture, AttentionNet, AutoencoderNet, ConvNet,
    HardLabelOracle, ModelMeta, RecurrentNet, SequenceScorer,
};
use crate::seq::{BehaviorSequence, Vocabulary};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub holdout_frac: f64,
    /// Label smoothing for classifier training; bounds decision margins
    /// without moving the boundary. Ignored by the autoencoder role.
    pub label_smoothing: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 4,
            batch_size: 32,
            learning_rate: 0.003,
            seed: 7,
            holdout_frac: 0.2,
            label_smoothing: 0.1,
        }
    }
}

impl TrainConfig {
    /// Per-role training budgets tuned for the synthetic task: enough to
    /// clear 95% held-out accuracy without saturating decision margins.
    /// The autoencoder needs far more reconstruction epochs; the attention
    /// block converges fastest and gets the smallest budget.
    pub fn recommended_for(arch: Architecture) -> Self {
        let base = TrainConfig::default();
        match arch {
            Architecture::Recurrent => TrainConfig { epochs: 8, ..base },
            Architecture::Convolutional => TrainConfig { epochs: 4, ..base },
            Architecture::Attention => TrainConfig {
                epochs: 5,
                learning_rate: 0.002,
                ..base
            },
            Architecture::Autoencoder => TrainConfig {
                epochs: 30,
                learning_rate: 0.01,
                ..base
            },
            Architecture::Linear => base,
        }
    }
}

/// Uniform view over the three softmax classifiers for the epoch loop.
trait ClassifierNet {
    fn target_gradients(&self, x: &Array2<f64>, targets: &Array1<f64>) -> Vec<ArrayD<f64>>;
    fn params_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>>;
}

impl ClassifierNet for RecurrentNet {
    fn target_gradients(&self, x: &Array2<f64>, targets: &Array1<f64>) -> Vec<ArrayD<f64>> {
        RecurrentNet::target_gradients(self, x, targets)
    }
    fn params_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        RecurrentNet::params_mut(self)
    }
}

impl ClassifierNet for ConvNet {
    fn target_gradients(&self, x: &Array2<f64>, targets: &Array1<f64>) -> Vec<ArrayD<f64>> {
        ConvNet::target_gradients(self, x, targets)
    }
    fn params_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        ConvNet::params_mut(self)
    }
}

impl ClassifierNet for AttentionNet {
    fn target_gradients(&self, x: &Array2<f64>, targets: &Array1<f64>) -> Vec<ArrayD<f64>> {
        AttentionNet::target_gradients(self, x, targets)
    }
    fn params_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        AttentionNet::params_mut(self)
    }
}

fn smoothed_target(y: usize, smoothing: f64) -> Array1<f64> {
    let eps = smoothing.clamp(0.0, 0.5);
    let mut t = Array1::from(vec![eps / 2.0, eps / 2.0]);
    t[y] += 1.0 - eps;
    t
}

fn train_epochs<N: ClassifierNet>(
    net: &mut N,
    encoded: &[(Array2<f64>, usize)],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) {
    let mut opt = Adam::new(cfg.learning_rate);
    let targets = [smoothed_target(0, cfg.label_smoothing), smoothed_target(1, cfg.label_smoothing)];
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let mut grads: Vec<ArrayD<f64>> = Vec::new();
            for &idx in chunk {
                let (x, y) = &encoded[idx];
                accumulate(&mut grads, net.target_gradients(x, &targets[*y]));
            }
            scale(&mut grads, chunk.len());
            opt.step(net.params_mut(), &grads);
        }
    }
}

fn train_autoencoder(
    net: &mut AutoencoderNet,
    benign: &[Array2<f64>],
    validation_benign: &[Array2<f64>],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) {
    let mut opt = Adam::new(cfg.learning_rate);
    let mut order: Vec<usize> = (0..benign.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let mut grads: Vec<ArrayD<f64>> = Vec::new();
            for &idx in chunk {
                accumulate(&mut grads, net.recon_gradients(&benign[idx]));
            }
            scale(&mut grads, chunk.len());
            opt.step(net.params_mut(), &grads);
        }
    }
    let mut errors: Vec<f64> = validation_benign
        .iter()
        .map(|x| net.reconstruction_error(x))
        .collect();
    errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((errors.len() as f64 * 0.95).ceil() as usize).clamp(1, errors.len()) - 1;
    let threshold = errors[rank];
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    let var = errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / errors.len() as f64;
    net.calibrate(threshold, var.sqrt().max(0.02 * threshold.abs()));
}

fn shuffled_split(n: usize, frac: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let holdout_n = ((n as f64 * frac).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let holdout = order.split_off(n - holdout_n);
    (order, holdout)
}

fn build_and_train(
    arch: Architecture,
    train_set: &[(Array2<f64>, usize)],
    validation: &[(Array2<f64>, usize)],
    meta: ModelMeta,
    cfg: &TrainConfig,
    require_both_classes: bool,
) -> Result<AnyModel> {
    let has = |set: &[(Array2<f64>, usize)], class: usize| set.iter().any(|(_, y)| *y == class);
    if require_both_classes && !(has(train_set, 0) && has(train_set, 1)) {
        return Err(Error::Training(
            "training split holds a single class; both labels are required".into(),
        ));
    }
    // Batch-order RNG is decorrelated from the split/init RNGs.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SHUFFLE_WHITEN);

    match arch {
        Architecture::Recurrent => {
            let mut net = RecurrentNet::new(meta, 2);
            train_epochs(&mut net, train_set, cfg, &mut rng);
            Ok(AnyModel::Recurrent(net))
        }
        Architecture::Convolutional => {
            let mut net = ConvNet::new(meta);
            train_epochs(&mut net, train_set, cfg, &mut rng);
            Ok(AnyModel::Convolutional(net))
        }
        Architecture::Attention => {
            let mut net = AttentionNet::new(meta);
            train_epochs(&mut net, train_set, cfg, &mut rng);
            Ok(AnyModel::Attention(net))
        }
        Architecture::Autoencoder => {
            let benign: Vec<Array2<f64>> = train_set
                .iter()
                .filter(|(_, y)| *y == 0)
                .map(|(x, _)| x.clone())
                .collect();
            let val_benign: Vec<Array2<f64>> = validation
                .iter()
                .filter(|(_, y)| *y == 0)
                .map(|(x, _)| x.clone())
                .collect();
            if benign.is_empty() || val_benign.is_empty() {
                return Err(Error::Training(
                    "autoencoder training needs benign sequences in both splits".into(),
                ));
            }
            let mut net = AutoencoderNet::new(meta);
            train_autoencoder(&mut net, &benign, &val_benign, cfg, &mut rng);
            Ok(AnyModel::Autoencoder(net))
        }
        Architecture::Linear => Err(Error::Config(
            "the linear scorer is fixed-weight and cannot be trained".into(),
        )),
    }
}

fn stamp_accuracy(model: &mut AnyModel, value: f64) {
    match model {
        AnyModel::Recurrent(m) => m.meta_mut().trained_accuracy = Some(value),
        AnyModel::Convolutional(m) => m.meta_mut().trained_accuracy = Some(value),
        AnyModel::Attention(m) => m.meta_mut().trained_accuracy = Some(value),
        AnyModel::Autoencoder(m) => m.meta_mut().trained_accuracy = Some(value),
        AnyModel::Linear(_) => {}
        AnyModel::Squeezed { inner, .. } => stamp_accuracy(inner, value),
    }
}

fn eval_encoded(model: &AnyModel, set: &[(Array2<f64>, usize)]) -> f64 {
    if set.is_empty() {
        return 0.0;
    }
    let hits = set
        .iter()
        .filter(|(x, y)| {
            let (p0, p1) = model.proba_matrix(x);
            let predicted = usize::from(p1 > p0);
            predicted == *y
        })
        .count();
    hits as f64 / set.len() as f64
}

/// Trains a classifier of the given role and reports held-out accuracy.
///
/// Deterministic under `cfg.seed`: identical data and config reproduce the
/// model bit for bit. The autoencoder role trains reconstruction on benign
/// sequences only and thresholds reconstruction error.
pub fn fit(
    arch: Architecture,
    data: &[BehaviorSequence],
    vocab: &Vocabulary,
    max_len: usize,
    cfg: &TrainConfig,
) -> Result<(AnyModel, f64)> {
    if data.is_empty() {
        return Err(Error::Training("training data is empty".into()));
    }
    let encoded = encode_dataset(data, vocab, max_len)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (train_idx, holdout_idx) = shuffled_split(encoded.len(), cfg.holdout_frac, &mut rng);
    let train_set: Vec<(Array2<f64>, usize)> =
        train_idx.iter().map(|&i| encoded[i].clone()).collect();
    let holdout: Vec<(Array2<f64>, usize)> =
        holdout_idx.iter().map(|&i| encoded[i].clone()).collect();

    let meta = ModelMeta::new(vocab, max_len, cfg.seed);
    let mut model = build_and_train(arch, &train_set, &holdout, meta, cfg, true)?;
    let acc = eval_encoded(&model, &holdout);
    stamp_accuracy(&mut model, acc);
    Ok((model, acc))
}

/// Fraction of sequences the model labels correctly.
pub fn accuracy(model: &dyn SequenceScorer, data: &[BehaviorSequence]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::UndefinedMetric("accuracy over zero sequences".into()));
    }
    let verdicts: Vec<Result<bool>> = par_map(data, |seq| {
        Ok(model.predict_label(seq.tokens())? == seq.label())
    });
    let mut hits = 0usize;
    for v in verdicts {
        if v? {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}

#[derive(Debug)]
pub struct DistillReport {
    pub model: AnyModel,
    /// Agreement with the target on held-out probes.
    pub agreement: f64,
    /// Hard-label queries spent against the target.
    pub queries: usize,
}

/// Trains a surrogate on the target's hard labels over probe sequences.
///
/// The target is consulted once per probe; agreement is measured on a
/// held-out probe split that never enters training.
pub fn distill_surrogate(
    target: &dyn HardLabelOracle,
    probes: &[BehaviorSequence],
    arch: Architecture,
    vocab: &Vocabulary,
    max_len: usize,
    cfg: &TrainConfig,
) -> Result<DistillReport> {
    if probes.is_empty() {
        return Err(Error::Config("probe budget is zero".into()));
    }
    let mut queries = 0usize;
    let mut labeled: Vec<(Array2<f64>, usize)> = Vec::with_capacity(probes.len());
    for probe in probes {
        let label = target.hard_label(probe.tokens())?;
        queries += 1;
        labeled.push((
            crate::seq::encode_tokens(probe.tokens(), vocab, max_len)?,
            label.class_index(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (train_idx, holdout_idx) = shuffled_split(labeled.len(), cfg.holdout_frac, &mut rng);
    let train_set: Vec<(Array2<f64>, usize)> =
        train_idx.iter().map(|&i| labeled[i].clone()).collect();
    let holdout: Vec<(Array2<f64>, usize)> =
        holdout_idx.iter().map(|&i| labeled[i].clone()).collect();

    let meta = ModelMeta::new(vocab, max_len, cfg.seed);
    // Distillation tolerates single-class targets (e.g. a constant oracle).
    let mut model = build_and_train(arch, &train_set, &holdout, meta, cfg, false)?;
    let agreement = eval_encoded(&model, &holdout);
    stamp_accuracy(&mut model, agreement);
    Ok(DistillReport {
        model,
        agreement,
        queries,
    })
}

const SHUFFLE_WHITEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LinearScorer;
    use crate::seq::Label;

    fn toy_vocab() -> Vocabulary {
        Vocabulary::new((0..10).map(|i| format!("b{i}"))).unwrap()
    }

    /// Tokens 0-4 benign-flavored, 5-9 malicious-flavored; trivially
    /// separable.
    fn toy_data(vocab: &Vocabulary, flip: bool) -> Vec<BehaviorSequence> {
        let mut out = Vec::new();
        for i in 0..40 {
            let benign_tokens = vec![i % 5, (i + 1) % 5, (i + 2) % 5, 3, 4];
            let malicious_tokens = vec![5 + i % 5, 5 + (i + 1) % 5, 5, 6, 7];
            let (benign_label, malicious_label) = if flip {
                (Label::Malicious, Label::Benign)
            } else {
                (Label::Benign, Label::Malicious)
            };
            out.push(BehaviorSequence::new(benign_tokens, benign_label, vocab).unwrap());
            out.push(BehaviorSequence::new(malicious_tokens, malicious_label, vocab).unwrap());
        }
        out
    }

    #[test]
    fn fit_is_deterministic_and_separates_toy_data() {
        let vocab = toy_vocab();
        let data = toy_data(&vocab, false);
        let cfg = TrainConfig {
            epochs: 6,
            ..TrainConfig::default()
        };
        let (m1, acc1) = fit(Architecture::Recurrent, &data, &vocab, 10, &cfg).unwrap();
        let (m2, acc2) = fit(Architecture::Recurrent, &data, &vocab, 10, &cfg).unwrap();
        assert_eq!(acc1, acc2);
        assert!(acc1 >= 0.9, "toy accuracy {acc1}");
        let probe = vec![5, 6, 7];
        assert_eq!(
            m1.predict_proba(&probe).unwrap(),
            m2.predict_proba(&probe).unwrap()
        );
    }

    #[test]
    fn zero_epochs_is_near_chance_on_balanced_data() {
        use crate::seq::{synth_dataset, SynthConfig};
        let synth = synth_dataset(&SynthConfig {
            n_benign: 100,
            n_malicious: 100,
            ..SynthConfig::default()
        })
        .unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let (_, acc) = fit(
            Architecture::Recurrent,
            &synth.sequences,
            &synth.vocab,
            40,
            &cfg,
        )
        .unwrap();
        assert!((acc - 0.5).abs() <= 0.1, "untrained accuracy {acc}");
    }

    #[test]
    fn relabeling_flips_predictions() {
        let vocab = toy_vocab();
        let cfg = TrainConfig {
            epochs: 8,
            ..TrainConfig::default()
        };
        let (normal, _) = fit(
            Architecture::Recurrent,
            &toy_data(&vocab, false),
            &vocab,
            10,
            &cfg,
        )
        .unwrap();
        let (flipped, _) = fit(
            Architecture::Recurrent,
            &toy_data(&vocab, true),
            &vocab,
            10,
            &cfg,
        )
        .unwrap();
        let probe = vec![5, 6, 7, 5, 6];
        let a = normal.predict_label(&probe).unwrap();
        let b = flipped.predict_label(&probe).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn single_class_training_errors() {
        let vocab = toy_vocab();
        let data: Vec<BehaviorSequence> = toy_data(&vocab, false)
            .into_iter()
            .filter(|s| s.label() == Label::Benign)
            .collect();
        let err = fit(
            Architecture::Recurrent,
            &data,
            &vocab,
            10,
            &TrainConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Training(_)));
    }

    #[test]
    fn constant_target_distills_to_constant_surrogate() {
        let vocab = toy_vocab();
        let target = LinearScorer::constant_benign(&vocab, 10, 8.0);
        let probes = toy_data(&vocab, false);
        let report = distill_surrogate(
            &target,
            &probes,
            Architecture::Recurrent,
            &vocab,
            10,
            &TrainConfig {
                epochs: 4,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        assert_eq!(report.queries, probes.len());
        assert_eq!(report.agreement, 1.0);
        for probe in probes.iter().take(10) {
            assert_eq!(
                report.model.predict_label(probe.tokens()).unwrap(),
                Label::Benign
            );
        }
    }
}
