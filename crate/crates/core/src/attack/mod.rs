//! Heuristic backtracking attack over the perturbation graph set.
//!
//! Graphs are tried in order. Under one graph, up to `mod_limit`
//! insertions are made: the k-th step targets the k-th best gradient
//! position of the current sequence, and the behavior is the highest-Q
//! graph-legal candidate (all nodes on the first step, successors of the
//! last inserted behavior afterwards). A benign verdict ends the search;
//! a dead end or exhausted limit discards the graph's insertions and
//! falls through to the next graph.

mod campaign;

pub use campaign::{
    evaluate_defenses, run_campaign, run_campaign_seq, summarize, transfer_success_rate,
    CampaignSummary, DefenseEvalConfig, DefenseOutcome,
};

use serde::{Deserialize, Serialize};

use crate::dqn::QAgent;
use crate::error::{Error, Result};
use crate::mine::{successors, PerturbationGraph, PerturbationGraphSet};
use crate::model::SequenceScorer;
use crate::seq::{AttackRecord, BehaviorSequence, TokenId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackBudget {
    /// Global cap on insertions across all graph attempts.
    pub max_step: usize,
    /// Insertion cap per graph attempt.
    pub mod_limit: usize,
    /// Cap on surrogate verdict queries.
    pub query_cap: usize,
}

impl Default for AttackBudget {
    fn default() -> Self {
        AttackBudget {
            max_step: 60,
            mod_limit: 5,
            query_cap: 400,
        }
    }
}

impl AttackBudget {
    pub fn validate(&self) -> Result<()> {
        if self.max_step == 0 || self.mod_limit == 0 || self.query_cap == 0 {
            return Err(Error::Config("attack budget fields must be positive".into()));
        }
        if self.mod_limit > self.max_step {
            return Err(Error::Config(format!(
                "mod_limit {} exceeds max_step {}",
                self.mod_limit, self.max_step
            )));
        }
        Ok(())
    }
}

/// Search cursor within one graph attempt.
#[derive(Debug, Clone)]
pub struct SearchState {
    /// Working sequence (always an insertion-superset of the original).
    pub best_seq: Vec<TokenId>,
    /// Last behavior inserted under the current graph.
    pub current_node: Option<TokenId>,
    /// Index of the graph being tried.
    pub graph_index: usize,
    /// Insertions made under the current graph.
    pub steps: usize,
}

/// Candidates the graph allows next: every node on the first insertion,
/// successors of the last inserted behavior afterwards. An empty result is
/// a dead end, not an error.
pub fn candidate_behaviors(state: &SearchState, graph: &PerturbationGraph) -> Vec<TokenId> {
    match state.current_node {
        None => graph.nodes().to_vec(),
        Some(node) => successors(graph, node).unwrap_or_default(),
    }
}

/// True when every maximal run of consecutive inserted positions forms a
/// path in at least one graph (single insertions must be a node of some
/// graph).
pub fn legality_check(record: &AttackRecord, graphs: &PerturbationGraphSet) -> bool {
    runs_are_legal(
        record.adversarial.tokens(),
        &record.inserted_positions,
        graphs,
    )
}

fn runs_are_legal(
    adversarial: &[TokenId],
    inserted_positions: &[usize],
    graphs: &PerturbationGraphSet,
) -> bool {
    let mut run: Vec<TokenId> = Vec::new();
    let mut prev: Option<usize> = None;
    let check = |run: &[TokenId]| -> bool {
        run.is_empty() || graphs.graphs().iter().any(|g| g.admits_path(run))
    };
    for &pos in inserted_positions {
        match prev {
            Some(p) if pos == p + 1 => run.push(adversarial[pos]),
            _ => {
                if !check(&run) {
                    return false;
                }
                run.clear();
                run.push(adversarial[pos]);
            }
        }
        prev = Some(pos);
    }
    check(&run)
}

/// Why one graph attempt stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttemptEnd {
    /// Surrogate flipped to benign.
    Success,
    /// No graph-legal candidate continued the walk.
    DeadEnd,
    /// Per-graph insertion cap reached.
    ModLimit,
    /// Global step or query budget exhausted.
    Budget,
}

/// Per-graph search diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphAttempt {
    pub graph_index: usize,
    pub insertions: usize,
    pub end: AttemptEnd,
}

/// Full attack outcome: the spec-shaped record plus search diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub record: AttackRecord,
    /// Graph that produced the final sequence, if any insertion survived.
    pub graph_index: Option<usize>,
    /// Surrogate's malicious probability for the final sequence.
    pub p_malicious: f64,
    /// The surrogate already read the original as benign; nothing was done.
    pub already_benign: bool,
    /// One entry per graph tried, in order.
    pub attempts: Vec<GraphAttempt>,
}

struct Snapshot {
    tokens: Vec<TokenId>,
    positions: Vec<usize>,
    p_malicious: f64,
    graph_index: Option<usize>,
}

/// Runs the backtracking search on one malicious sequence.
///
/// An invalid budget or empty graph set is refused outright. A sequence
/// the surrogate already labels benign yields a no-op record with zero
/// insertions.
pub fn attack(
    seq: &BehaviorSequence,
    surrogate: &dyn SequenceScorer,
    agent: &QAgent,
    graphs: &PerturbationGraphSet,
    budget: &AttackBudget,
) -> Result<AttackResult> {
    budget.validate()?;
    if graphs.is_empty() {
        return Err(Error::Config("perturbation graph set is empty".into()));
    }

    let original = seq.tokens().to_vec();
    let mut queries = 0usize;
    let predict = |surrogate: &dyn SequenceScorer,
                       tokens: &[TokenId],
                       queries: &mut usize|
     -> Result<(f64, f64)> {
        *queries += 1;
        surrogate.predict_proba(tokens)
    };

    let (p0, p1) = predict(surrogate, &original, &mut queries)?;
    if p0 >= p1 {
        let record = AttackRecord {
            original: seq.clone(),
            adversarial: seq.clone(),
            inserted_positions: vec![],
            success: true,
            queries,
        };
        return Ok(AttackResult {
            record,
            graph_index: None,
            p_malicious: p1,
            already_benign: true,
            attempts: vec![],
        });
    }

    let mut best = Snapshot {
        tokens: original.clone(),
        positions: vec![],
        p_malicious: p1,
        graph_index: None,
    };
    let mut total_steps = 0usize;
    let max_len = surrogate.max_len();
    let mut attempts: Vec<GraphAttempt> = Vec::new();

    'graphs: for (graph_index, graph) in graphs.graphs().iter().enumerate() {
        let mut state = SearchState {
            best_seq: original.clone(),
            current_node: None,
            graph_index,
            steps: 0,
        };
        let mut positions: Vec<usize> = Vec::new();
        let mut attempt_end = AttemptEnd::ModLimit;

        for step in 1..=budget.mod_limit {
            if total_steps >= budget.max_step || queries >= budget.query_cap {
                attempt_end = AttemptEnd::Budget;
                break;
            }
            let candidates = candidate_behaviors(&state, graph);
            if candidates.is_empty() {
                attempt_end = AttemptEnd::DeadEnd;
                break;
            }

            // k-th best insertion position of the current sequence.
            let grads = surrogate.position_gradients(&state.best_seq, 0)?;
            let view_len = state.best_seq.len().min(max_len);
            let mut order: Vec<usize> = (0..view_len).collect();
            order.sort_by(|&a, &b| grads[b].partial_cmp(&grads[a]).unwrap().then(a.cmp(&b)));
            let Some(&position) = order.get(step - 1) else {
                attempt_end = AttemptEnd::DeadEnd;
                break;
            };

            // Highest-Q candidate whose insertion keeps every run legal.
            // When the slot at `position` would break a run (e.g. the new
            // behavior would land in front of its own predecessor), slide
            // right within the adjacent inserted run so the fragment stays
            // a contiguous graph path at the same vulnerable site.
            let run_extent = positions
                .iter()
                .filter(|&&p| p >= position)
                .take_while({
                    let mut expected = position;
                    move |&&p| {
                        let hit = p == expected;
                        expected += 1;
                        hit
                    }
                })
                .count();
            let ranked = agent.greedy_ranking(&state.best_seq, &candidates)?;
            let mut accepted = None;
            'candidates: for behavior in ranked {
                for slot in position..=(position + run_extent).min(state.best_seq.len()) {
                    let mut trial = state.best_seq.clone();
                    trial.insert(slot, behavior);
                    let mut trial_positions: Vec<usize> = positions
                        .iter()
                        .map(|&p| if p >= slot { p + 1 } else { p })
                        .collect();
                    let insert_at = trial_positions.partition_point(|&p| p < slot);
                    trial_positions.insert(insert_at, slot);
                    if runs_are_legal(&trial, &trial_positions, graphs) {
                        accepted = Some((behavior, trial, trial_positions));
                        break 'candidates;
                    }
                }
            }
            let Some((behavior, trial, trial_positions)) = accepted else {
                attempt_end = AttemptEnd::DeadEnd;
                break;
            };

            state.best_seq = trial;
            state.current_node = Some(behavior);
            state.steps = step;
            positions = trial_positions;
            total_steps += 1;

            let (p0, p1) = predict(surrogate, &state.best_seq, &mut queries)?;
            if p1 < best.p_malicious {
                best = Snapshot {
                    tokens: state.best_seq.clone(),
                    positions: positions.clone(),
                    p_malicious: p1,
                    graph_index: Some(graph_index),
                };
            }
            if p0 >= p1 {
                attempts.push(GraphAttempt {
                    graph_index,
                    insertions: state.steps,
                    end: AttemptEnd::Success,
                });
                let record = AttackRecord {
                    original: seq.clone(),
                    adversarial: rebuild(seq, &state.best_seq)?,
                    inserted_positions: positions,
                    success: true,
                    queries,
                };
                record.validate().map_err(internal_invariant)?;
                return Ok(AttackResult {
                    record,
                    graph_index: Some(graph_index),
                    p_malicious: p1,
                    already_benign: false,
                    attempts,
                });
            }
        }
        // Failure under this graph: insertions are discarded by starting
        // the next graph from the original sequence.
        attempts.push(GraphAttempt {
            graph_index,
            insertions: state.steps,
            end: attempt_end,
        });
        if attempt_end == AttemptEnd::Budget {
            break;
        }
    }

    let record = AttackRecord {
        original: seq.clone(),
        adversarial: rebuild(seq, &best.tokens)?,
        inserted_positions: best.positions,
        success: false,
        queries,
    };
    record.validate().map_err(internal_invariant)?;
    Ok(AttackResult {
        record,
        graph_index: best.graph_index,
        p_malicious: best.p_malicious,
        already_benign: false,
        attempts,
    })
}

fn rebuild(original: &BehaviorSequence, tokens: &[TokenId]) -> Result<BehaviorSequence> {
    Ok(BehaviorSequence::derived(original, tokens.to_vec()))
}

fn internal_invariant(e: Error) -> Error {
    Error::Config(format!("internal attack invariant violated: {e}"))
}

#[cfg(test)]
mod tests;
