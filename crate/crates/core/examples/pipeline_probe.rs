//! End-to-end pipeline probe used to sanity-check defaults: synth ->
//! mine -> train targets -> distill -> train DQN -> attack -> transfer and
//! defense deltas. Stage knobs come from environment variables so sweeps
//! don't rebuild the library.

use std::time::Instant;

use seqevade_core::attack::{
    evaluate_defenses, run_campaign, summarize, transfer_success_rate, AttackBudget,
    DefenseEvalConfig,
};
use seqevade_core::dqn::{train as train_dqn, QAgent, QHyperparams};
use seqevade_core::mine::{merge_graphs, mine_frequent, MinerConfig};
use seqevade_core::model::{
    default_squeeze_map, distill_surrogate, fit, Architecture, TrainConfig,
};
use seqevade_core::seq::{synth_dataset, BehaviorSequence, SynthConfig};

fn env_usize(name: &str, default: usize) -> usize {
    std::env::var(name).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn env_f64(name: &str, default: f64) -> f64 {
    std::env::var(name).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn main() {
    let t0 = Instant::now();
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
        n_benign: 50,
        n_malicious: 250,
        ..SynthConfig::default()
    })
    .unwrap();
    let vocab = train_data.vocab.clone();

    let miner_cfg = MinerConfig {
        min_support: env_f64("MINE_DELTA", 0.2),
        max_pattern_len: env_usize("MINE_MAXLEN", 5),
    };
    let patterns = mine_frequent(
        &train_data.benign(),
        miner_cfg.min_support,
        miner_cfg.max_pattern_len,
    )
    .unwrap();
    let graphs = merge_graphs(&patterns, miner_cfg).unwrap();
    let mean_edges: f64 = graphs.graphs().iter().map(|g| g.edge_count() as f64).sum::<f64>()
        / graphs.len() as f64;
    println!(
        "[mine] {} patterns -> {} graphs (mean edges {mean_edges:.1})",
        patterns.len(),
        graphs.len()
    );

    let mut targets = Vec::new();
    for arch in [
        Architecture::Recurrent,
        Architecture::Convolutional,
        Architecture::Attention,
        Architecture::Autoencoder,
    ] {
        let mut cfg = TrainConfig::recommended_for(arch);
        let tag = format!("{arch}").to_uppercase();
        cfg.epochs = env_usize(&format!("{tag}_EPOCHS"), cfg.epochs);
        cfg.learning_rate = env_f64(&format!("{tag}_LR"), cfg.learning_rate);
        cfg.label_smoothing = env_f64("SMOOTH", cfg.label_smoothing);
        let t = Instant::now();
        let (model, acc) = fit(arch, &train_data.sequences, &vocab, max_len, &cfg).unwrap();
        println!(
            "[fit] {arch} epochs {} lr {} acc {acc:.3} ({:.1?})",
            cfg.epochs,
            cfg.learning_rate,
            t.elapsed()
        );
        targets.push((arch, model));
    }

    let t = Instant::now();
    let probes: Vec<BehaviorSequence> = probe_data
        .sequences
        .iter()
        .take(env_usize("PROBES", 2000))
        .cloned()
        .collect();
    let distill_cfg = TrainConfig {
        epochs: env_usize("DISTILL_EPOCHS", 4),
        learning_rate: env_f64("DISTILL_LR", 0.003),
        label_smoothing: env_f64("DISTILL_SMOOTH", env_f64("SMOOTH", 0.1)),
        ..TrainConfig::default()
    };
    let distilled = distill_surrogate(
        &targets[0].1,
        &probes,
        Architecture::Recurrent,
        &vocab,
        max_len,
        &distill_cfg,
    )
    .unwrap();
    println!(
        "[distill] agreement {:.3} queries {} ({:.1?})",
        distilled.agreement,
        distilled.queries,
        t.elapsed()
    );
    let surrogate = distilled.model;

    let t = Instant::now();
    let hp = QHyperparams {
        learning_rate: env_f64("DQN_LR", 0.005),
        batch_size: env_usize("DQN_BATCH", 32),
        target_sync_period: env_usize("DQN_SYNC", 100),
        epsilon_end: env_f64("DQN_EPS_END", 0.1),
        ..QHyperparams::default()
    };
    let mut agent = QAgent::new(&vocab, max_len, hp, 5);
    let dqn_train: Vec<BehaviorSequence> = train_data
        .malicious()
        .into_iter()
        .take(env_usize("DQN_SEQS", 32))
        .collect();
    let episodes = env_usize("DQN_EPISODES", 40);
    let log = train_dqn(&mut agent, &surrogate, &dqn_train, episodes, 42).unwrap();
    let tail: Vec<_> = log.iter().rev().take(100).collect();
    let tail_success: f64 =
        tail.iter().map(|r| r.success as u8 as f64).sum::<f64>() / tail.len().max(1) as f64;
    println!(
        "[dqn] episodes {episodes} rollouts {} tail-success(100) {tail_success:.2} ({:.1?})",
        log.len(),
        t.elapsed()
    );

    // Variant C: DQN token choice at k-th-best positions, no graph
    // constraint. Separates agent quality from graph-walk restrictions.
    {
        use seqevade_core::model::SequenceScorer;
        let windows = eval_data.malicious();
        let budget_steps = env_usize("MOD_LIMIT", 6);
        let all_actions: Vec<usize> = train_data.benign_tokens.clone();
        let mut detected = 0usize;
        let mut flipped = 0usize;
        for seq in &windows {
            let mut tokens = seq.tokens().to_vec();
            let (_, p0) = surrogate.predict_proba(&tokens).unwrap();
            if p0 <= 0.5 {
                continue;
            }
            detected += 1;
            for step in 1..=budget_steps {
                let grads = surrogate.position_gradients(&tokens, 0).unwrap();
                let view = tokens.len().min(max_len);
                let mut order: Vec<usize> = (0..view).collect();
                order.sort_by(|&a, &b| grads[b].partial_cmp(&grads[a]).unwrap().then(a.cmp(&b)));
                let Some(&pos) = order.get(step - 1) else { break };
                let ranked = agent.greedy_ranking(&tokens, &all_actions).unwrap();
                tokens.insert(pos, ranked[0]);
                let (_, p) = surrogate.predict_proba(&tokens).unwrap();
                if p <= 0.5 {
                    flipped += 1;
                    break;
                }
            }
        }
        println!(
            "[variant-C dqn-no-graphs] detected {detected} flipped {flipped} ({:.3})",
            flipped as f64 / detected.max(1) as f64
        );
    }

    let t = Instant::now();
    let windows = eval_data.malicious();
    let budget = AttackBudget {
        max_step: env_usize("MAX_STEP", 120),
        mod_limit: env_usize("MOD_LIMIT", 6),
        query_cap: env_usize("QUERY_CAP", 400),
    };
    let results = run_campaign(&windows, &surrogate, &agent, &graphs, &budget).unwrap();
    {
        use seqevade_core::attack::AttemptEnd;
        let mut by_end = std::collections::BTreeMap::new();
        let mut insert_hist = [0usize; 12];
        for r in &results {
            for a in &r.attempts {
                *by_end.entry(format!("{:?}", a.end)).or_insert(0usize) += 1;
                insert_hist[a.insertions.min(11)] += 1;
            }
        }
        let _ = AttemptEnd::Success;
        println!("[attempts] ends {by_end:?}");
        println!("[attempts] insertions histogram {insert_hist:?}");
    }
    let summary = summarize(&results).unwrap();
    println!(
        "[attack] attacked {} skipped {} SR(surrogate) {:.3} PR {:?} meanq {:.1} ({:.1?})",
        summary.attacked,
        summary.skipped_already_benign,
        summary.success_rate,
        summary.perturbation_rate,
        summary.mean_queries,
        t.elapsed()
    );

    for (arch, model) in &targets {
        match transfer_success_rate(&results, model) {
            Ok(sr) => println!("[transfer] {arch}: {sr:.3}"),
            Err(e) => println!("[transfer] {arch}: undefined ({e})"),
        }
    }

    if env_usize("SKIP_DEFENSES", 0) == 0 {
        let t = Instant::now();
        let def_cfg = DefenseEvalConfig {
            surrogate_arch: Architecture::Recurrent,
            distill: distill_cfg.clone(),
            retrain: TrainConfig::recommended_for(targets[0].0),
            budget,
        };
        let squeeze = default_squeeze_map(&vocab, &train_data.benign_tokens);
        let (baseline_sr, outcomes) = evaluate_defenses(
            &windows,
            &train_data.sequences,
            &probes,
            &targets[0].1,
            &results,
            &agent,
            &graphs,
            &squeeze,
            &vocab,
            &def_cfg,
        )
        .unwrap();
        println!(
            "[defense] baseline SR vs target {baseline_sr:.3} ({:.1?})",
            t.elapsed()
        );
        for o in outcomes {
            println!(
                "[defense] {}: attack_sr {:.3} delta {:+.3} replay {:.3} clean_acc {:.3} agree {:.3}",
                o.defense, o.attack_sr, o.delta_vs_baseline, o.replay_sr, o.clean_accuracy, o.surrogate_agreement
            );
        }
    }

    println!("[total] {:.1?}", t0.elapsed());
}
