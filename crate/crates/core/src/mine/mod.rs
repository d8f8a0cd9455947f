//! Frequent benign-pattern mining and the directed-graph perturbation
//! action set built from the mined patterns.
//!
//! Patterns are contiguous n-grams; support is document frequency (the
//! fraction of corpus sequences containing the gram at least once).
//! Patterns sharing a first behavior merge into one graph whose edges are
//! the union of the patterns' consecutive-pair edges; traversing a graph
//! enumerates the benign fragments that are legal to insert.

mod frequent;
mod graph;

pub use frequent::mine_frequent;
pub use graph::{
    build_graph, enumerate_paths, graph_set_from_json, graph_set_to_json, merge_graphs,
    successors,
};

use serde::{Deserialize, Serialize};

use crate::seq::TokenId;

/// A mined frequent subsequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pattern {
    pub behaviors: Vec<TokenId>,
    /// Fraction of corpus sequences containing the pattern, in (0, 1].
    pub support: f64,
}

/// Directed graph over behaviors: `adjacency[x][y]` says behavior
/// `nodes[y]` may directly follow `nodes[x]` inside an inserted fragment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationGraph {
    nodes: Vec<TokenId>,
    adjacency: Vec<Vec<bool>>,
    /// Highest support among the merged source patterns.
    support: f64,
}

impl PerturbationGraph {
    pub fn nodes(&self) -> &[TokenId] {
        &self.nodes
    }

    pub fn support(&self) -> f64 {
        self.support
    }

    pub fn node_index(&self, behavior: TokenId) -> Option<usize> {
        self.nodes.iter().position(|&n| n == behavior)
    }

    pub fn has_edge(&self, from: TokenId, to: TokenId) -> bool {
        match (self.node_index(from), self.node_index(to)) {
            (Some(x), Some(y)) => self.adjacency[x][y],
            _ => false,
        }
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency
            .iter()
            .map(|row| row.iter().filter(|&&e| e).count())
            .sum()
    }

    /// Edges as (from, to) behavior pairs, row-major.
    pub fn edges(&self) -> Vec<(TokenId, TokenId)> {
        let mut out = Vec::new();
        for (x, row) in self.adjacency.iter().enumerate() {
            for (y, &set) in row.iter().enumerate() {
                if set {
                    out.push((self.nodes[x], self.nodes[y]));
                }
            }
        }
        out
    }

    /// True when `fragment` walks existing edges at every step.
    pub fn admits_path(&self, fragment: &[TokenId]) -> bool {
        if fragment.is_empty() {
            return false;
        }
        if fragment.len() == 1 {
            return self.node_index(fragment[0]).is_some();
        }
        fragment
            .windows(2)
            .all(|pair| self.has_edge(pair[0], pair[1]))
    }
}

/// Miner configuration recorded as provenance on the graph set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinerConfig {
    /// Minimum support threshold.
    pub min_support: f64,
    /// Longest pattern mined, in tokens.
    pub max_pattern_len: usize,
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig {
            min_support: 0.2,
            max_pattern_len: 5,
        }
    }
}

/// Ordered perturbation action set. Graphs are sorted by descending
/// support, ties broken by lexicographic node list, so the backtracking
/// search visits them in a deterministic order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationGraphSet {
    graphs: Vec<PerturbationGraph>,
    provenance: MinerConfig,
}

impl PerturbationGraphSet {
    pub fn graphs(&self) -> &[PerturbationGraph] {
        &self.graphs
    }

    pub fn provenance(&self) -> &MinerConfig {
        &self.provenance
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }
}
