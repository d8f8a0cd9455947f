//! Deep Q-learning over insertion actions: the state is the working
//! sequence, an action is the behavior id to insert, and the reward pulls
//! the surrogate's benign-class loss down. Experience replay and a
//! periodically synced target network stabilize training.

mod train;

pub use train::{train, EpisodeRecord};

use std::collections::VecDeque;
use std::fs;
use std::path::Path;

use ndarray::Array1;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelMeta, RecurrentNet, SequenceScorer};
use crate::seq::{TokenId, Vocabulary};

/// One environment step stored for replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<TokenId>,
    pub action: TokenId,
    pub reward: f64,
    pub next_state: Vec<TokenId>,
    pub terminal: bool,
}

/// Bounded FIFO buffer; pushing past capacity evicts the oldest entry.
#[derive(Debug, Clone, Default)]
pub struct ReplayMemory {
    buffer: VecDeque<Transition>,
    capacity: usize,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        ReplayMemory {
            buffer: VecDeque::with_capacity(capacity.min(4096)),
            capacity,
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn oldest(&self) -> Option<&Transition> {
        self.buffer.front()
    }

    /// Uniform sample of `k` distinct stored transitions.
    pub fn sample(&self, k: usize, rng: &mut ChaCha8Rng) -> Vec<&Transition> {
        let k = k.min(self.buffer.len());
        rand::seq::index::sample(rng, self.buffer.len(), k)
            .into_iter()
            .map(|i| &self.buffer[i])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QHyperparams {
    /// Discount factor, in [0, 1).
    pub discount: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    /// Target network refresh period, in gradient steps.
    pub target_sync_period: usize,
    /// Reward scale (the loss-to-reward factor).
    pub reward_scale: f64,
    /// Per-episode step cap as a fraction of sequence length (rounded up).
    pub step_fraction: f64,
    pub learning_rate: f64,
}

impl Default for QHyperparams {
    fn default() -> Self {
        QHyperparams {
            discount: 0.9,
            epsilon_start: 1.0,
            epsilon_end: 0.1,
            replay_capacity: 10_000,
            batch_size: 32,
            target_sync_period: 100,
            reward_scale: 1.0,
            step_fraction: 0.25,
            learning_rate: 0.005,
        }
    }
}

/// Eq. 4-style pure insertion: `behavior` lands at 1-based `position`,
/// everything else shifts right.
pub fn insert(
    tokens: &[TokenId],
    behavior: TokenId,
    position: usize,
    pad_id: TokenId,
) -> Result<Vec<TokenId>> {
    if behavior == pad_id {
        return Err(Error::InvalidToken {
            id: behavior,
            vocab_size: pad_id + 1,
            pad_id,
        });
    }
    if position == 0 || position > tokens.len() + 1 {
        return Err(Error::Position {
            position,
            max: tokens.len() + 1,
        });
    }
    let mut out = Vec::with_capacity(tokens.len() + 1);
    out.extend_from_slice(&tokens[..position - 1]);
    out.push(behavior);
    out.extend_from_slice(&tokens[position - 1..]);
    Ok(out)
}

/// Reward for a modified sequence: `alpha * (1 - 2 * L(s', y=benign))`,
/// positive exactly when the surrogate's benign-class loss is below 1/2.
pub fn reward(surrogate: &dyn SequenceScorer, next_tokens: &[TokenId], alpha: f64) -> Result<f64> {
    Ok(alpha * (1.0 - 2.0 * surrogate.loss(next_tokens, 0)?))
}

/// DQN agent: estimated and target value networks over insertion actions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QAgent {
    q_net: RecurrentNet,
    target_net: RecurrentNet,
    hp: QHyperparams,
    /// Action id per output index: every non-pad behavior, ascending.
    actions: Vec<TokenId>,
    grad_steps: usize,
}

impl QAgent {
    pub fn new(vocab: &Vocabulary, max_len: usize, hp: QHyperparams, seed: u64) -> Self {
        let actions: Vec<TokenId> = vocab.behavior_ids().collect();
        let meta = ModelMeta::new(vocab, max_len, seed);
        let q_net = RecurrentNet::new(meta, actions.len());
        let target_net = q_net.clone();
        QAgent {
            q_net,
            target_net,
            hp,
            actions,
            grad_steps: 0,
        }
    }

    pub fn hyperparams(&self) -> &QHyperparams {
        &self.hp
    }

    pub fn actions(&self) -> &[TokenId] {
        &self.actions
    }

    pub fn grad_steps(&self) -> usize {
        self.grad_steps
    }

    pub fn vocab_hash(&self) -> &str {
        &self.q_net.meta().vocab_hash
    }

    pub(crate) fn q_net(&self) -> &RecurrentNet {
        &self.q_net
    }

    pub(crate) fn q_net_mut(&mut self) -> &mut RecurrentNet {
        &mut self.q_net
    }

    pub(crate) fn bump_grad_steps(&mut self) -> usize {
        self.grad_steps += 1;
        self.grad_steps
    }

    pub(crate) fn sync_target(&mut self) {
        self.target_net = self.q_net.clone();
    }

    fn action_index(&self, behavior: TokenId) -> Result<usize> {
        self.actions
            .binary_search(&behavior)
            .map_err(|_| Error::Action(format!("behavior {behavior} is not an insertable action")))
    }

    /// Q-values of every action in the current state.
    pub fn q_values(&self, tokens: &[TokenId]) -> Result<Array1<f64>> {
        let x = self.q_net.encode(tokens)?;
        Ok(self.q_net.output_values(&x))
    }

    /// TD target: `r` when terminal, else `r + discount * max_a Q_target`.
    pub fn td_target(&self, reward: f64, next_tokens: &[TokenId], terminal: bool) -> Result<f64> {
        if terminal {
            return Ok(reward);
        }
        let x = self.target_net.encode(next_tokens)?;
        let q = self.target_net.output_values(&x);
        let best = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(reward + self.hp.discount * best)
    }

    /// Epsilon-greedy action choice over `allowed` (default: all actions).
    /// Exploitation breaks Q-value ties toward the lowest behavior id.
    pub fn select_action(
        &self,
        tokens: &[TokenId],
        epsilon: f64,
        allowed: Option<&[TokenId]>,
        rng: &mut ChaCha8Rng,
    ) -> Result<TokenId> {
        let pool: Vec<TokenId> = match allowed {
            Some(list) => list.to_vec(),
            None => self.actions.clone(),
        };
        if pool.is_empty() {
            return Err(Error::Action("allowed action set is empty".into()));
        }
        for &b in &pool {
            self.action_index(b)?;
        }
        if rng.gen::<f64>() < epsilon {
            return Ok(pool[rng.gen_range(0..pool.len())]);
        }
        let q = self.q_values(tokens)?;
        let mut best = pool[0];
        let mut best_q = q[self.action_index(pool[0])?];
        for &b in &pool[1..] {
            let value = q[self.action_index(b)?];
            if value > best_q || (value == best_q && b < best) {
                best = b;
                best_q = value;
            }
        }
        Ok(best)
    }

    /// `allowed` sorted by Q-value descending, ties toward lower ids.
    pub fn greedy_ranking(&self, tokens: &[TokenId], allowed: &[TokenId]) -> Result<Vec<TokenId>> {
        if allowed.is_empty() {
            return Err(Error::Action("allowed action set is empty".into()));
        }
        let q = self.q_values(tokens)?;
        let mut scored: Vec<(TokenId, f64)> = allowed
            .iter()
            .map(|&b| Ok((b, q[self.action_index(b)?])))
            .collect::<Result<_>>()?;
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        Ok(scored.into_iter().map(|(b, _)| b).collect())
    }
}

const AGENT_FORMAT: &str = "seqevade-agent/1";

#[derive(Debug, Serialize, Deserialize)]
struct AgentCheckpoint {
    format: String,
    agent: QAgent,
}

pub fn save_agent(agent: &QAgent, path: &Path) -> Result<()> {
    let checkpoint = AgentCheckpoint {
        format: AGENT_FORMAT.to_string(),
        agent: agent.clone(),
    };
    fs::write(path, serde_json::to_string(&checkpoint)?)?;
    Ok(())
}

pub fn load_agent(path: &Path, vocab: Option<&Vocabulary>) -> Result<QAgent> {
    let text = fs::read_to_string(path)?;
    let checkpoint: AgentCheckpoint = serde_json::from_str(&text)?;
    if checkpoint.format != AGENT_FORMAT {
        return Err(Error::Config(format!(
            "unsupported agent checkpoint format {:?}",
            checkpoint.format
        )));
    }
    if let Some(vocab) = vocab {
        if checkpoint.agent.vocab_hash() != vocab.hash_hex() {
            return Err(Error::Config(format!(
                "agent checkpoint {} was trained against a different vocabulary",
                path.display()
            )));
        }
    }
    Ok(checkpoint.agent)
}
