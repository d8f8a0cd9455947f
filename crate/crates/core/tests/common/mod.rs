//! Shared helpers for integration tests: independent oracles kept apart
//! from the implementation paths they check.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seqevade_core::model::SequenceScorer;

/// Central-difference gradient of `loss_matrix` at a relaxed input,
/// compared entry-wise against the analytic input gradient. Returns the
/// relative L2 error over all entries.
pub fn finite_difference_error(
    model: &dyn SequenceScorer,
    x: &Array2<f64>,
    y: usize,
    step: f64,
) -> f64 {
    let analytic = model.input_gradient_matrix(x, y);
    let mut numeric = Array2::zeros(x.raw_dim());
    let mut probe = x.clone();
    for row in 0..x.nrows() {
        for col in 0..x.ncols() {
            let orig = probe[[row, col]];
            probe[[row, col]] = orig + step;
            let plus = model.loss_matrix(&probe, y);
            probe[[row, col]] = orig - step;
            let minus = model.loss_matrix(&probe, y);
            probe[[row, col]] = orig;
            numeric[[row, col]] = (plus - minus) / (2.0 * step);
        }
    }
    let diff = &numeric - &analytic;
    let denom = numeric.iter().map(|v| v * v).sum::<f64>().sqrt();
    let num = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
    num / denom.max(1e-12)
}

/// Random relaxed input: positive entries with roughly unit row mass, the
/// regime one-hot rows live in.
pub fn random_relaxed_input(len: usize, vocab_size: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut x = Array2::from_shape_fn((len, vocab_size), |_| rng.gen_range(0.0..1.0));
    for mut row in x.rows_mut() {
        let sum: f64 = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    x
}

/// Deterministic RNG for test fixtures.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
