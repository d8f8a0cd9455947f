//! The DQN training loop: per sequence, identify the vulnerable position,
//! insert an epsilon-greedy action, reward from the surrogate, store the
//! transition, descend on a replay minibatch, and sync the target network
//! on schedule. Episodes end early once the surrogate reads the sequence
//! as benign.

use ndarray::{Array1, ArrayD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::optim::{accumulate, scale, Adam};
use crate::model::SequenceScorer;
use crate::seq::{BehaviorSequence, Label};

use super::{insert, reward, QAgent, ReplayMemory, Transition};

/// One (episode, sequence) rollout summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub sequence_index: usize,
    pub steps: usize,
    pub total_reward: f64,
    pub success: bool,
}

fn epsilon_schedule(episode: usize, total_episodes: usize, start: f64, end: f64) -> f64 {
    let half = (total_episodes / 2).max(1);
    if episode >= half {
        end
    } else {
        start + (end - start) * episode as f64 / half as f64
    }
}

/// Runs Algorithm-1 style training for `episodes` passes over `sequences`.
/// Deterministic under `seed`; returns the per-rollout log.
pub fn train(
    agent: &mut QAgent,
    surrogate: &dyn SequenceScorer,
    sequences: &[BehaviorSequence],
    episodes: usize,
    seed: u64,
) -> Result<Vec<EpisodeRecord>> {
    if sequences.is_empty() {
        return Err(Error::Config("no training sequences".into()));
    }
    if surrogate.trained_accuracy().is_none() {
        return Err(Error::Config(
            "surrogate carries no accuracy marker; train or distill it first".into(),
        ));
    }

    let hp = agent.hyperparams().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut replay = ReplayMemory::new(hp.replay_capacity);
    let mut optimizer = Adam::new(hp.learning_rate);
    let mut log = Vec::with_capacity(episodes * sequences.len());

    for episode in 0..episodes {
        let epsilon = epsilon_schedule(episode, episodes, hp.epsilon_start, hp.epsilon_end);
        for (sequence_index, seq) in sequences.iter().enumerate() {
            let mut state = seq.tokens().to_vec();
            let step_cap = ((hp.step_fraction * state.len() as f64).ceil() as usize).max(1);
            let mut total_reward = 0.0;
            let mut success = false;
            let mut steps = 0usize;

            for _ in 0..step_cap {
                let position = surrogate.vulnerable_position(&state, 0)?;
                let action = agent.select_action(&state, epsilon, None, &mut rng)?;
                let next_state = insert(&state, action, position + 1, surrogate.meta().pad_id)?;
                let step_reward = reward(surrogate, &next_state, hp.reward_scale)?;
                let terminal = surrogate.predict_label(&next_state)? == Label::Benign;
                replay.push(Transition {
                    state: state.clone(),
                    action,
                    reward: step_reward,
                    next_state: next_state.clone(),
                    terminal,
                });

                learn_step(agent, &replay, &mut optimizer, &mut rng)?;

                state = next_state;
                total_reward += step_reward;
                steps += 1;
                if terminal {
                    success = true;
                    break;
                }
            }

            log.push(EpisodeRecord {
                episode,
                sequence_index,
                steps,
                total_reward,
                success,
            });
        }
    }
    Ok(log)
}

/// One minibatch descent on the squared TD error. Skipped until the buffer
/// can fill a batch.
fn learn_step(
    agent: &mut QAgent,
    replay: &ReplayMemory,
    optimizer: &mut Adam,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let hp = agent.hyperparams().clone();
    if replay.len() < hp.batch_size {
        return Ok(());
    }
    let batch = replay.sample(hp.batch_size, rng);
    let n_actions = agent.actions().len();

    // TD targets come from the frozen snapshot before any update.
    let mut grads: Vec<ArrayD<f64>> = Vec::new();
    for transition in &batch {
        let target = agent.td_target(transition.reward, &transition.next_state, transition.terminal)?;
        let x = agent.q_net().encode(&transition.state)?;
        let q = agent.q_net().output_values(&x);
        let action_idx = agent
            .actions()
            .binary_search(&transition.action)
            .map_err(|_| Error::Action(format!("stale action {} in replay", transition.action)))?;
        let mut d_logits = Array1::zeros(n_actions);
        // d/dq of (y - q)^2, averaged over the batch later.
        d_logits[action_idx] = 2.0 * (q[action_idx] - target);
        accumulate(&mut grads, agent.q_net().output_gradients(&x, &d_logits));
    }
    scale(&mut grads, batch.len());
    optimizer.step(agent.q_net_mut().params_mut(), &grads);

    let steps = agent.bump_grad_steps();
    if steps % hp.target_sync_period == 0 {
        agent.sync_target();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dqn::QHyperparams;
    use crate::model::LinearScorer;
    use crate::seq::Vocabulary;
    use rand::Rng;

    fn vocab() -> Vocabulary {
        Vocabulary::new((0..8).map(|i| format!("b{i}"))).unwrap()
    }

    fn malicious_sequences(vocab: &Vocabulary, count: usize, seed: u64) -> Vec<BehaviorSequence> {
        // Sequences over tokens 0..4; the rigged flip token (7) never
        // appears naturally.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let len = rng.gen_range(5..9);
                let tokens = (0..len).map(|_| rng.gen_range(0..5)).collect();
                BehaviorSequence::new(tokens, Label::Malicious, vocab).unwrap()
            })
            .collect()
    }

    #[test]
    fn epsilon_anneals_linearly_then_floors() {
        assert_eq!(epsilon_schedule(0, 100, 1.0, 0.1), 1.0);
        let mid = epsilon_schedule(25, 100, 1.0, 0.1);
        assert!((mid - 0.55).abs() < 1e-12);
        assert_eq!(epsilon_schedule(50, 100, 1.0, 0.1), 0.1);
        assert_eq!(epsilon_schedule(99, 100, 1.0, 0.1), 0.1);
    }

    #[test]
    fn zero_episodes_leaves_agent_at_initialization() {
        let v = vocab();
        let surrogate = LinearScorer::rigged(&v, 16, 7);
        let mut agent = QAgent::new(&v, 16, QHyperparams::default(), 5);
        let fresh = QAgent::new(&v, 16, QHyperparams::default(), 5);
        let seqs = malicious_sequences(&v, 4, 1);
        let log = train(&mut agent, &surrogate, &seqs, 0, 99).unwrap();
        assert!(log.is_empty());
        assert_eq!(
            agent.q_values(&[0, 1, 2]).unwrap(),
            fresh.q_values(&[0, 1, 2]).unwrap()
        );
    }

    #[test]
    fn small_replay_skips_learning_without_crash() {
        let v = vocab();
        let surrogate = LinearScorer::rigged(&v, 16, 7);
        let hp = QHyperparams {
            batch_size: 1_000_000, // never reached
            ..QHyperparams::default()
        };
        let mut agent = QAgent::new(&v, 16, hp, 5);
        let fresh = agent.clone();
        let seqs = malicious_sequences(&v, 3, 2);
        train(&mut agent, &surrogate, &seqs, 2, 99).unwrap();
        // No gradient step ever ran.
        assert_eq!(agent.grad_steps(), 0);
        assert_eq!(
            agent.q_values(&[0, 1]).unwrap(),
            fresh.q_values(&[0, 1]).unwrap()
        );
    }

    #[test]
    fn untrained_surrogate_is_rejected() {
        let v = vocab();
        // RecurrentNet fresh from the constructor has no accuracy marker.
        let untrained = crate::model::RecurrentNet::new(crate::model::ModelMeta::new(&v, 16, 1), 2);
        let mut agent = QAgent::new(&v, 16, QHyperparams::default(), 5);
        let seqs = malicious_sequences(&v, 3, 2);
        let err = train(&mut agent, &untrained, &seqs, 1, 0).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn training_is_deterministic_under_seed() {
        let v = vocab();
        let surrogate = LinearScorer::rigged(&v, 16, 7);
        let hp = QHyperparams {
            replay_capacity: 256,
            batch_size: 8,
            ..QHyperparams::default()
        };
        let seqs = malicious_sequences(&v, 6, 3);
        let mut a = QAgent::new(&v, 16, hp.clone(), 5);
        let mut b = QAgent::new(&v, 16, hp, 5);
        let log_a = train(&mut a, &surrogate, &seqs, 8, 42).unwrap();
        let log_b = train(&mut b, &surrogate, &seqs, 8, 42).unwrap();
        assert_eq!(log_a, log_b);
        assert_eq!(a.q_values(&[0, 1]).unwrap(), b.q_values(&[0, 1]).unwrap());
    }

    #[test]
    fn rigged_surrogate_teaches_the_flip_token() {
        let v = vocab();
        let flip = 7;
        let surrogate = LinearScorer::rigged(&v, 16, flip);
        let hp = QHyperparams {
            replay_capacity: 512,
            batch_size: 16,
            target_sync_period: 25,
            ..QHyperparams::default()
        };
        let mut agent = QAgent::new(&v, 16, hp, 5);
        let train_seqs = malicious_sequences(&v, 8, 3);
        train(&mut agent, &surrogate, &train_seqs, 40, 42).unwrap();

        let held_out = malicious_sequences(&v, 40, 1234);
        let mut hits = 0;
        for seq in &held_out {
            let ranked = agent.greedy_ranking(seq.tokens(), agent.actions()).unwrap();
            if ranked[0] == flip {
                hits += 1;
            }
        }
        assert!(hits >= 36, "flip token ranked first in only {hits}/40 states");
    }
}
