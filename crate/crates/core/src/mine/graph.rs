//! Graph construction from patterns, merging, traversal, and the JSON
//! graph-set interchange format.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mine::{MinerConfig, Pattern, PerturbationGraph, PerturbationGraphSet};
use crate::seq::{TokenId, Vocabulary};

/// Builds the directed graph of one pattern: nodes are the distinct
/// behaviors in first-appearance order; each consecutive pair becomes an
/// edge.
pub fn build_graph(pattern: &Pattern) -> PerturbationGraph {
    let mut nodes: Vec<TokenId> = Vec::new();
    for &b in &pattern.behaviors {
        if !nodes.contains(&b) {
            nodes.push(b);
        }
    }
    let n = nodes.len();
    let mut adjacency = vec![vec![false; n]; n];
    for pair in pattern.behaviors.windows(2) {
        let x = nodes.iter().position(|&b| b == pair[0]).unwrap();
        let y = nodes.iter().position(|&b| b == pair[1]).unwrap();
        adjacency[x][y] = true;
    }
    PerturbationGraph {
        nodes,
        adjacency,
        support: pattern.support,
    }
}

/// Merges patterns into one graph per pattern family.
///
/// A family is seeded by a starting behavior and grown to a fixpoint: any
/// pattern whose first behavior is already reachable inside the family
/// joins it, and its behaviors extend the reachable set. Edge sets union.
/// Families whose graph is contained in another family's graph (nodes and
/// edges both subsets) are dropped, so e.g. the four patterns
/// (b1,b2,b4), (b1,b3,b4), (b2,b5), (b4,b5) merge into the single
/// multi-branch example graph. Output graphs are ordered by descending
/// support with ties broken by lexicographic node list.
pub fn merge_graphs(patterns: &[Pattern], provenance: MinerConfig) -> Result<PerturbationGraphSet> {
    if patterns.is_empty() {
        return Err(Error::Config("cannot merge an empty pattern list".into()));
    }
    let mut starts: Vec<TokenId> = patterns.iter().map(|p| p.behaviors[0]).collect();
    starts.sort_unstable();
    starts.dedup();

    let mut graphs: Vec<PerturbationGraph> = starts
        .iter()
        .map(|&root| {
            // Grow the family from the root to a reachability fixpoint.
            let mut members: Vec<&Pattern> = Vec::new();
            let mut reachable: BTreeSet<TokenId> = BTreeSet::new();
            reachable.insert(root);
            loop {
                let before = (members.len(), reachable.len());
                for p in patterns {
                    if reachable.contains(&p.behaviors[0])
                        && !members.iter().any(|m| std::ptr::eq(*m, p))
                    {
                        members.push(p);
                        reachable.extend(p.behaviors.iter().copied());
                    }
                }
                if (members.len(), reachable.len()) == before {
                    break;
                }
            }

            let mut nodes: Vec<TokenId> = Vec::new();
            for p in &members {
                for &b in &p.behaviors {
                    if !nodes.contains(&b) {
                        nodes.push(b);
                    }
                }
            }
            let n = nodes.len();
            let mut adjacency = vec![vec![false; n]; n];
            for p in &members {
                for pair in p.behaviors.windows(2) {
                    let x = nodes.iter().position(|&b| b == pair[0]).unwrap();
                    let y = nodes.iter().position(|&b| b == pair[1]).unwrap();
                    adjacency[x][y] = true;
                }
            }
            let support = members
                .iter()
                .map(|p| p.support)
                .fold(f64::NEG_INFINITY, f64::max);
            PerturbationGraph {
                nodes,
                adjacency,
                support,
            }
        })
        .collect();

    // Drop graphs wholly contained in another graph; identical graphs keep
    // a single representative.
    let mut keep = vec![true; graphs.len()];
    for i in 0..graphs.len() {
        if !keep[i] {
            continue;
        }
        for j in 0..graphs.len() {
            if i == j || !keep[i] {
                continue;
            }
            if keep[j] && contains(&graphs[j], &graphs[i]) {
                if contains(&graphs[i], &graphs[j]) && i < j {
                    keep[j] = false; // identical; keep the earlier one
                } else {
                    keep[i] = false;
                }
            }
        }
    }
    let mut graphs: Vec<PerturbationGraph> = graphs
        .into_iter()
        .zip(keep)
        .filter_map(|(g, k)| k.then_some(g))
        .collect();

    graphs.sort_by(|a, b| {
        b.support
            .partial_cmp(&a.support)
            .unwrap()
            .then_with(|| a.nodes.cmp(&b.nodes))
    });
    Ok(PerturbationGraphSet { graphs, provenance })
}

/// True when `inner`'s nodes and edges are both subsets of `outer`'s.
fn contains(outer: &PerturbationGraph, inner: &PerturbationGraph) -> bool {
    inner
        .nodes
        .iter()
        .all(|n| outer.node_index(*n).is_some())
        && inner
            .edges()
            .iter()
            .all(|&(a, b)| outer.has_edge(a, b))
}

/// Behaviors reachable in one step from `node`, in node order.
pub fn successors(graph: &PerturbationGraph, node: TokenId) -> Result<Vec<TokenId>> {
    let x = graph
        .node_index(node)
        .ok_or_else(|| Error::Lookup(format!("behavior {node} is not a node of this graph")))?;
    Ok(graph
        .nodes
        .iter()
        .enumerate()
        .filter(|&(y, _)| graph.adjacency[x][y])
        .map(|(_, &b)| b)
        .collect())
}

/// All simple paths (no repeated node) with 1..=max_depth edges starting at
/// `start`, in depth-first order with successors visited in node order.
pub fn enumerate_paths(
    graph: &PerturbationGraph,
    start: TokenId,
    max_depth: usize,
) -> Result<Vec<Vec<TokenId>>> {
    if graph.node_index(start).is_none() {
        return Err(Error::Lookup(format!(
            "start behavior {start} is not a node of this graph"
        )));
    }
    if max_depth == 0 {
        return Err(Error::Config("max_depth must be >= 1".into()));
    }
    let mut out = Vec::new();
    let mut path = vec![start];
    dfs(graph, max_depth, &mut path, &mut out)?;
    Ok(out)
}

fn dfs(
    graph: &PerturbationGraph,
    max_depth: usize,
    path: &mut Vec<TokenId>,
    out: &mut Vec<Vec<TokenId>>,
) -> Result<()> {
    if path.len() > max_depth {
        return Ok(());
    }
    let current = *path.last().unwrap();
    for next in successors(graph, current)? {
        if path.contains(&next) {
            continue;
        }
        path.push(next);
        out.push(path.clone());
        dfs(graph, max_depth, path, out)?;
        path.pop();
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct GraphJson {
    nodes: Vec<String>,
    edges: Vec<[String; 2]>,
    support: f64,
}

/// Serializes the set as a JSON list of `{nodes, edges, support}` objects
/// with behavior names; ordering is preserved.
pub fn graph_set_to_json(set: &PerturbationGraphSet, vocab: &Vocabulary) -> Result<String> {
    let name = |id: TokenId| -> Result<String> {
        vocab
            .name(id)
            .map(str::to_string)
            .ok_or_else(|| Error::Lookup(format!("behavior id {id} has no name in vocabulary")))
    };
    let rows: Vec<GraphJson> = set
        .graphs
        .iter()
        .map(|g| {
            Ok(GraphJson {
                nodes: g.nodes.iter().map(|&n| name(n)).collect::<Result<_>>()?,
                edges: g
                    .edges()
                    .iter()
                    .map(|&(a, b)| Ok([name(a)?, name(b)?]))
                    .collect::<Result<_>>()?,
                support: g.support,
            })
        })
        .collect::<Result<_>>()?;
    Ok(serde_json::to_string_pretty(&rows)?)
}

pub fn graph_set_from_json(
    text: &str,
    vocab: &Vocabulary,
    provenance: MinerConfig,
) -> Result<PerturbationGraphSet> {
    let rows: Vec<GraphJson> = serde_json::from_str(text)?;
    let id = |name: &str| -> Result<TokenId> {
        vocab
            .id(name)
            .ok_or_else(|| Error::Lookup(format!("unknown behavior name {name:?}")))
    };
    let graphs: Vec<PerturbationGraph> = rows
        .iter()
        .map(|row| {
            let nodes: Vec<TokenId> = row.nodes.iter().map(|n| id(n)).collect::<Result<_>>()?;
            let n = nodes.len();
            let mut adjacency = vec![vec![false; n]; n];
            for [from, to] in &row.edges {
                let from_id = id(from)?;
                let to_id = id(to)?;
                let fx = nodes
                    .iter()
                    .position(|&b| b == from_id)
                    .ok_or_else(|| Error::Lookup(format!("edge endpoint {from:?} not in nodes")))?;
                let ty = nodes
                    .iter()
                    .position(|&b| b == to_id)
                    .ok_or_else(|| Error::Lookup(format!("edge endpoint {to:?} not in nodes")))?;
                adjacency[fx][ty] = true;
            }
            Ok(PerturbationGraph {
                nodes,
                adjacency,
                support: row.support,
            })
        })
        .collect::<Result<_>>()?;
    Ok(PerturbationGraphSet { graphs, provenance })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pat(behaviors: &[usize], support: f64) -> Pattern {
        Pattern {
            behaviors: behaviors.to_vec(),
            support,
        }
    }

    /// The five-behavior example graph: b1=1 .. b5=5 with edges
    /// 1->2, 1->3, 2->4, 2->5, 3->4, 4->5.
    fn example_graph() -> PerturbationGraph {
        let patterns = vec![
            pat(&[1, 2, 4, 5], 0.5),
            pat(&[1, 3, 4], 0.5),
            pat(&[1, 2, 5], 0.5),
        ];
        let set = merge_graphs(&patterns, MinerConfig::default()).unwrap();
        assert_eq!(set.len(), 1);
        set.graphs()[0].clone()
    }

    #[test]
    fn build_graph_linear_pattern() {
        let g = build_graph(&pat(&[0, 1, 2], 0.9)); // open, read, close
        assert_eq!(g.nodes(), &[0, 1, 2]);
        assert!(g.has_edge(0, 1));
        assert!(g.has_edge(1, 2));
        assert!(!g.has_edge(0, 2));
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn build_graph_collapses_repeated_behavior() {
        let g = build_graph(&pat(&[7, 8, 7], 0.4));
        assert_eq!(g.nodes(), &[7, 8]);
        assert!(g.has_edge(7, 8));
        assert!(g.has_edge(8, 7));
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn build_graph_minimal_pattern_is_single_edge() {
        let g = build_graph(&pat(&[3, 4], 0.2));
        assert_eq!(g.edge_count(), 1);
        assert!(g.has_edge(3, 4));
    }

    #[test]
    fn build_graph_immediate_repeat_is_self_loop() {
        let g = build_graph(&pat(&[2, 2], 0.3));
        assert_eq!(g.nodes(), &[2]);
        assert!(g.has_edge(2, 2));
    }

    #[test]
    fn merge_unions_edges_of_shared_prefix_patterns() {
        let g = example_graph();
        let expected = [(1, 2), (1, 3), (2, 4), (2, 5), (3, 4), (4, 5)];
        for (a, b) in expected {
            assert!(g.has_edge(a, b), "missing edge {a}->{b}");
        }
        assert_eq!(g.edge_count(), expected.len());
    }

    #[test]
    fn merge_closure_assembles_the_multibranch_example() {
        // Patterns with different starting behaviors whose starts are
        // reachable from b1 all fold into one graph.
        let set = merge_graphs(
            &[
                pat(&[1, 2, 4], 0.6),
                pat(&[1, 3, 4], 0.5),
                pat(&[2, 5], 0.4),
                pat(&[4, 5], 0.4),
            ],
            MinerConfig::default(),
        )
        .unwrap();
        assert_eq!(set.len(), 1);
        let g = &set.graphs()[0];
        for (a, b) in [(1, 2), (1, 3), (2, 4), (2, 5), (3, 4), (4, 5)] {
            assert!(g.has_edge(a, b), "missing edge {a}->{b}");
        }
        assert_eq!(g.edge_count(), 6);
    }

    #[test]
    fn merge_single_pattern_matches_build_graph() {
        let p = pat(&[5, 6, 7], 0.8);
        let set = merge_graphs(std::slice::from_ref(&p), MinerConfig::default()).unwrap();
        assert_eq!(set.graphs()[0], build_graph(&p));
    }

    #[test]
    fn merge_disjoint_alphabets_yields_two_graphs() {
        let set = merge_graphs(
            &[pat(&[0, 1], 0.9), pat(&[5, 6], 0.4)],
            MinerConfig::default(),
        )
        .unwrap();
        assert_eq!(set.len(), 2);
        // Descending support.
        assert_eq!(set.graphs()[0].nodes(), &[0, 1]);
        assert_eq!(set.graphs()[1].nodes(), &[5, 6]);
    }

    #[test]
    fn successors_in_node_order() {
        let g = example_graph();
        assert_eq!(successors(&g, 2).unwrap(), vec![4, 5]);
        assert_eq!(successors(&g, 5).unwrap(), Vec::<usize>::new());
        assert_eq!(successors(&g, 4).unwrap(), vec![5]);
        assert!(successors(&g, 99).is_err());
    }

    #[test]
    fn enumerate_paths_covers_the_documented_traversals() {
        let g = example_graph();
        let from_b1 = enumerate_paths(&g, 1, 4).unwrap();
        for expected in [
            vec![1, 2],
            vec![1, 2, 4],
            vec![1, 2, 4, 5],
            vec![1, 3],
            vec![1, 3, 4],
            vec![1, 3, 4, 5],
        ] {
            assert!(from_b1.contains(&expected), "missing path {expected:?}");
        }
        let from_b2 = enumerate_paths(&g, 2, 4).unwrap();
        assert!(from_b2.contains(&vec![2, 4]));
        assert!(from_b2.contains(&vec![2, 4, 5]));
        // Every emitted path is adjacency-legal.
        for path in from_b1.iter().chain(&from_b2) {
            assert!(g.admits_path(path));
        }
    }

    #[test]
    fn enumerate_paths_single_edge() {
        let g = build_graph(&pat(&[0, 1], 1.0));
        assert_eq!(enumerate_paths(&g, 0, 3).unwrap(), vec![vec![0, 1]]);
    }

    #[test]
    fn json_round_trip_preserves_order_and_edges() {
        let vocab = Vocabulary::new((0..8).map(|i| format!("b{i}"))).unwrap();
        let set = merge_graphs(
            &[pat(&[1, 2, 4], 0.7), pat(&[1, 3], 0.5), pat(&[6, 7], 0.9)],
            MinerConfig::default(),
        )
        .unwrap();
        let json = graph_set_to_json(&set, &vocab).unwrap();
        let back = graph_set_from_json(&json, &vocab, MinerConfig::default()).unwrap();
        assert_eq!(back, set);
    }
}
