//! Diagnostic: measures how flippable the surrogate actually is, using an
//! unconstrained greedy best-insertion oracle (no graphs, no DQN). This
//! bounds what the full search can hope to reach.

use seqevade_core::model::{distill_surrogate, fit, Architecture, SequenceScorer, TrainConfig};
use seqevade_core::seq::{synth_dataset, BehaviorSequence, SynthConfig};

fn env_usize(name: &str, default: usize) -> usize {
    std::env::var(name).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn env_f64(name: &str, default: f64) -> f64 {
    std::env::var(name).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn main() {
    let max_len = 40;
    let train_data = synth_dataset(&SynthConfig {
        seed: 17,
        n_benign: 400,
        n_malicious: 400,
        ..SynthConfig::default()
    })
    .unwrap();
    let probe_data = synth_dataset(&SynthConfig {
        seed: 23,
        n_benign: 1000,
        n_malicious: 1000,
        ..SynthConfig::default()
    })
    .unwrap();
    let eval_data = synth_dataset(&SynthConfig {
        seed: 99,
        n_benign: 0,
        n_malicious: 120,
        ..SynthConfig::default()
    })
    .unwrap();
    let vocab = train_data.vocab.clone();

    let target_cfg = TrainConfig {
        epochs: env_usize("RECURRENT_EPOCHS", 8),
        learning_rate: env_f64("RECURRENT_LR", 0.003),
        label_smoothing: env_f64("SMOOTH", 0.1),
        ..TrainConfig::default()
    };
    let (target, acc) = fit(
        Architecture::Recurrent,
        &train_data.sequences,
        &vocab,
        max_len,
        &target_cfg,
    )
    .unwrap();
    let distill_cfg = TrainConfig {
        epochs: env_usize("DISTILL_EPOCHS", 4),
        learning_rate: env_f64("DISTILL_LR", 0.003),
        label_smoothing: env_f64("SMOOTH", 0.1),
        ..TrainConfig::default()
    };
    let probes: Vec<BehaviorSequence> = probe_data.sequences.iter().take(2000).cloned().collect();
    let distilled =
        distill_surrogate(&target, &probes, Architecture::Recurrent, &vocab, max_len, &distill_cfg)
            .unwrap();
    println!(
        "[setup] target acc {acc:.3} surrogate agreement {:.3}",
        distilled.agreement
    );
    let surrogate = distilled.model;

    // p_malicious percentiles on eval windows.
    let mut p_mal: Vec<f64> = eval_data
        .malicious()
        .iter()
        .map(|s| surrogate.predict_proba(s.tokens()).unwrap().1)
        .collect();
    p_mal.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pct = |q: f64| p_mal[((p_mal.len() - 1) as f64 * q) as usize];
    println!(
        "[margin] p_mal percentiles p05 {:.3} p25 {:.3} p50 {:.3} p75 {:.3} p95 {:.3}",
        pct(0.05),
        pct(0.25),
        pct(0.5),
        pct(0.75),
        pct(0.95)
    );

    // Unconstrained greedy best-insertion oracle.
    let budget = env_usize("ORACLE_STEPS", 6);
    let benign_tokens = &train_data.benign_tokens;
    let mut flipped = 0usize;
    let mut steps_used: Vec<usize> = Vec::new();
    let windows = eval_data.malicious();
    for seq in &windows {
        let mut tokens = seq.tokens().to_vec();
        let (_, mut best_p) = surrogate.predict_proba(&tokens).unwrap();
        if best_p <= 0.5 {
            continue; // not detected
        }
        let mut ok = false;
        for step in 1..=budget {
            let mut best_move: Option<(usize, usize, f64)> = None;
            for &tok in benign_tokens {
                for pos in 0..=tokens.len() {
                    let mut trial = tokens.clone();
                    trial.insert(pos, tok);
                    let (_, p) = surrogate.predict_proba(&trial).unwrap();
                    if best_move.map_or(true, |(_, _, bp)| p < bp) {
                        best_move = Some((tok, pos, p));
                    }
                }
            }
            let (tok, pos, p) = best_move.unwrap();
            tokens.insert(pos, tok);
            best_p = p;
            if p <= 0.5 {
                ok = true;
                steps_used.push(step);
                break;
            }
        }
        if ok {
            flipped += 1;
        }
    }
    let detected = windows
        .iter()
        .filter(|s| surrogate.predict_proba(s.tokens()).unwrap().1 > 0.5)
        .count();
    println!(
        "[oracle] detected {detected}/{} flipped {flipped} ({:.3}) within {budget} greedy inserts; mean steps {:.2}",
        windows.len(),
        flipped as f64 / detected.max(1) as f64,
        steps_used.iter().sum::<usize>() as f64 / steps_used.len().max(1) as f64
    );

    // Variant A: position forced to the k-th best gradient position of the
    // current sequence; token still chosen by brute force.
    let mut flipped_a = 0usize;
    for seq in &windows {
        let mut tokens = seq.tokens().to_vec();
        let (_, p0) = surrogate.predict_proba(&tokens).unwrap();
        if p0 <= 0.5 {
            continue;
        }
        for step in 1..=budget {
            let grads = surrogate.position_gradients(&tokens, 0).unwrap();
            let view = tokens.len().min(40);
            let mut order: Vec<usize> = (0..view).collect();
            order.sort_by(|&a, &b| grads[b].partial_cmp(&grads[a]).unwrap().then(a.cmp(&b)));
            let Some(&pos) = order.get(step - 1) else { break };
            let mut best: Option<(usize, f64)> = None;
            for &tok in benign_tokens {
                let mut trial = tokens.clone();
                trial.insert(pos, tok);
                let (_, p) = surrogate.predict_proba(&trial).unwrap();
                if best.map_or(true, |(_, bp)| p < bp) {
                    best = Some((tok, p));
                }
            }
            let (tok, p) = best.unwrap();
            tokens.insert(pos, tok);
            if p <= 0.5 {
                flipped_a += 1;
                break;
            }
        }
    }
    println!(
        "[variant-A kth-position] flipped {flipped_a} ({:.3})",
        flipped_a as f64 / detected.max(1) as f64
    );

    // Variant B: best position each step (rank-1), token brute force.
    let mut flipped_b = 0usize;
    for seq in &windows {
        let mut tokens = seq.tokens().to_vec();
        let (_, p0) = surrogate.predict_proba(&tokens).unwrap();
        if p0 <= 0.5 {
            continue;
        }
        for _ in 1..=budget {
            let grads = surrogate.position_gradients(&tokens, 0).unwrap();
            let view = tokens.len().min(40);
            let pos = (0..view)
                .max_by(|&a, &b| grads[a].partial_cmp(&grads[b]).unwrap().then(b.cmp(&a)))
                .unwrap();
            let mut best: Option<(usize, f64)> = None;
            for &tok in benign_tokens {
                let mut trial = tokens.clone();
                trial.insert(pos, tok);
                let (_, p) = surrogate.predict_proba(&trial).unwrap();
                if best.map_or(true, |(_, bp)| p < bp) {
                    best = Some((tok, p));
                }
            }
            let (tok, p) = best.unwrap();
            tokens.insert(pos, tok);
            if p <= 0.5 {
                flipped_b += 1;
                break;
            }
        }
    }
    println!(
        "[variant-B best-position] flipped {flipped_b} ({:.3})",
        flipped_b as f64 / detected.max(1) as f64
    );
}
