//! Analytic input gradients must match central finite differences for
//! every architecture, on random models, inputs and labels.

mod common;

use common::{finite_difference_error, random_relaxed_input, rng};
use rand::Rng;
use seqevade_core::model::{
    Architecture, AttentionNet, AutoencoderNet, ConvNet, LinearScorer, ModelMeta, RecurrentNet,
    SequenceScorer,
};
use seqevade_core::seq::Vocabulary;

const MAX_LEN: usize = 12;
const TRIALS: usize = 20;
const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn vocab() -> Vocabulary {
    Vocabulary::new((0..10).map(|i| format!("b{i}"))).unwrap()
}

fn check_architecture(arch: Architecture) {
    let vocab = vocab();
    let mut sampler = rng(0xACCE55 + arch as u64);
    for trial in 0..TRIALS {
        let meta = ModelMeta::new(&vocab, MAX_LEN, 1000 + trial as u64);
        let model: Box<dyn SequenceScorer> = match arch {
            Architecture::Recurrent => Box::new(RecurrentNet::new(meta, 2)),
            Architecture::Convolutional => Box::new(ConvNet::new(meta)),
            Architecture::Attention => Box::new(AttentionNet::new(meta)),
            Architecture::Autoencoder => Box::new(AutoencoderNet::new(meta)),
            Architecture::Linear => unreachable!(),
        };
        let x = random_relaxed_input(MAX_LEN, vocab.len(), &mut sampler);
        let y = usize::from(sampler.gen_bool(0.5));
        let err = finite_difference_error(model.as_ref(), &x, y, STEP);
        assert!(
            err < TOL,
            "{arch} trial {trial}: relative gradient error {err:.3e} >= {TOL:e}"
        );
    }
}

#[test]
fn recurrent_gradients_match_finite_differences() {
    check_architecture(Architecture::Recurrent);
}

#[test]
fn convolutional_gradients_match_finite_differences() {
    check_architecture(Architecture::Convolutional);
}

#[test]
fn attention_gradients_match_finite_differences() {
    check_architecture(Architecture::Attention);
}

#[test]
fn autoencoder_gradients_match_finite_differences() {
    check_architecture(Architecture::Autoencoder);
}

#[test]
fn linear_scorer_gradients_match_finite_differences() {
    let vocab = vocab();
    let mut sampler = rng(0xE11);
    for flip in 0..5 {
        let model = LinearScorer::rigged(&vocab, MAX_LEN, flip);
        let x = random_relaxed_input(MAX_LEN, vocab.len(), &mut sampler);
        let err = finite_difference_error(&model, &x, 0, STEP);
        assert!(err < TOL, "linear trial {flip}: error {err:.3e}");
    }
}

#[test]
fn constant_readout_gives_zero_gradient() {
    // A scorer whose logit ignores the input has an identically zero
    // input gradient.
    let vocab = vocab();
    let model = LinearScorer::constant_malicious(&vocab, MAX_LEN, 3.0);
    let mut sampler = rng(3);
    let x = random_relaxed_input(MAX_LEN, vocab.len(), &mut sampler);
    let grad = model.input_gradient_matrix(&x, 1);
    assert!(grad.iter().all(|&g| g == 0.0));
}
