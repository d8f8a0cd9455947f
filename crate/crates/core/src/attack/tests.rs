use super::*;
use crate::dqn::{train as train_dqn, QHyperparams};
use crate::mine::{merge_graphs, MinerConfig, Pattern};
use crate::model::LinearScorer;
use crate::seq::{AttackRecord, Label, Vocabulary};

fn vocab() -> Vocabulary {
    Vocabulary::new((0..8).map(|i| format!("b{i}"))).unwrap()
}

fn pat(behaviors: &[usize], support: f64) -> Pattern {
    Pattern {
        behaviors: behaviors.to_vec(),
        support,
    }
}

fn graph_set(patterns: &[Pattern]) -> PerturbationGraphSet {
    merge_graphs(patterns, MinerConfig::default()).unwrap()
}

fn example_graphs() -> PerturbationGraphSet {
    // The five-behavior example: edges 1->2, 1->3, 2->4, 2->5, 3->4, 4->5.
    graph_set(&[pat(&[1, 2, 4, 5], 0.5), pat(&[1, 3, 4], 0.5), pat(&[1, 2, 5], 0.5)])
}

fn malicious(vocab: &Vocabulary, tokens: Vec<usize>) -> BehaviorSequence {
    BehaviorSequence::new(tokens, Label::Malicious, vocab).unwrap()
}

#[test]
fn candidates_are_all_nodes_then_successors() {
    let graphs = example_graphs();
    let graph = &graphs.graphs()[0];
    let mut state = SearchState {
        best_seq: vec![0],
        current_node: None,
        graph_index: 0,
        steps: 0,
    };
    assert_eq!(candidate_behaviors(&state, graph), vec![1, 2, 4, 5, 3]);

    state.current_node = Some(2);
    assert_eq!(candidate_behaviors(&state, graph), vec![4, 5]);

    state.current_node = Some(5); // sink
    assert!(candidate_behaviors(&state, graph).is_empty());
}

#[test]
fn budget_with_mod_limit_above_max_step_is_refused() {
    let v = vocab();
    let surrogate = LinearScorer::constant_malicious(&v, 16, 4.0);
    let agent = QAgent::new(&v, 16, QHyperparams::default(), 1);
    let graphs = example_graphs();
    let bad = AttackBudget {
        max_step: 2,
        mod_limit: 5,
        query_cap: 50,
    };
    let err = attack(&malicious(&v, vec![0, 1]), &surrogate, &agent, &graphs, &bad).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn empty_graph_set_is_a_configuration_error() {
    let v = vocab();
    let surrogate = LinearScorer::constant_malicious(&v, 16, 4.0);
    let agent = QAgent::new(&v, 16, QHyperparams::default(), 1);
    let empty = crate::mine::graph_set_from_json("[]", &v, MinerConfig::default()).unwrap();
    let err = attack(
        &malicious(&v, vec![0, 1]),
        &surrogate,
        &agent,
        &empty,
        &AttackBudget::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn unsatisfiable_target_fails_with_original_recoverable() {
    let v = vocab();
    let surrogate = LinearScorer::constant_malicious(&v, 24, 6.0);
    let agent = QAgent::new(&v, 24, QHyperparams::default(), 1);
    let graphs = example_graphs();
    let seq = malicious(&v, vec![0, 6, 7]);
    let result = attack(&seq, &surrogate, &agent, &graphs, &AttackBudget::default()).unwrap();
    assert!(!result.record.success);
    assert!(!result.already_benign);
    // Constant verdicts never improve, so the best sequence is the original.
    assert_eq!(result.record.adversarial, seq);
    assert!(result.record.inserted_positions.is_empty());
    result.record.validate().unwrap();
    assert!(result.record.queries <= AttackBudget::default().query_cap);
}

#[test]
fn already_benign_sequence_is_a_noop_record() {
    let v = vocab();
    let surrogate = LinearScorer::constant_benign(&v, 16, 4.0);
    let agent = QAgent::new(&v, 16, QHyperparams::default(), 1);
    let graphs = example_graphs();
    let seq = malicious(&v, vec![0, 1, 2]);
    let result = attack(&seq, &surrogate, &agent, &graphs, &AttackBudget::default()).unwrap();
    assert!(result.already_benign);
    assert!(result.record.success);
    assert!(result.record.inserted_positions.is_empty());
    assert_eq!(result.record.queries, 1);
}

#[test]
fn rigged_surrogate_is_beaten_with_legal_insertions() {
    let v = vocab();
    let flip = 7usize;
    let surrogate = LinearScorer::rigged(&v, 24, flip);
    // Both orders are available so the search can always reach the flip
    // token by the second insertion.
    let graphs = graph_set(&[pat(&[flip, 1], 0.5), pat(&[1, flip], 0.5)]);
    let mut agent = QAgent::new(&v, 24, QHyperparams::default(), 1);
    let train_seqs: Vec<BehaviorSequence> =
        (0..6).map(|i| malicious(&v, vec![i % 5, (i + 1) % 5, 2, 3])).collect();
    train_dqn(&mut agent, &surrogate, &train_seqs, 10, 77).unwrap();

    let seq = malicious(&v, vec![0, 1, 2, 3, 4, 0]);
    let result = attack(&seq, &surrogate, &agent, &graphs, &AttackBudget::default()).unwrap();
    assert!(result.record.success, "rigged attack should succeed");
    assert!(result.record.inserted_positions.len() <= AttackBudget::default().mod_limit);
    result.record.validate().unwrap();
    assert!(legality_check(&result.record, &graphs));
    assert!(result.record.inserted_tokens().contains(&flip));
}

#[test]
fn legality_accepts_documented_insertion_and_rejects_illegal_run() {
    // Vocabulary mirroring the syscall names used in the write-ups.
    let v = Vocabulary::new([
        "mknodat", "execve", "io_cancel", "setxattr", "getuid", "lsetxattr", "read", "capset",
        "open",
    ])
    .unwrap();
    let id = |n: &str| v.id(n).unwrap();
    let graphs = graph_set(&[pat(&[id("getuid"), id("lsetxattr")], 0.6)]);

    let original = malicious(
        &v,
        vec![id("mknodat"), id("execve"), id("io_cancel"), id("setxattr")],
    );
    let adversarial = malicious(
        &v,
        vec![
            id("mknodat"),
            id("execve"),
            id("io_cancel"),
            id("getuid"),
            id("lsetxattr"),
            id("setxattr"),
        ],
    );
    let record = AttackRecord {
        original: original.clone(),
        adversarial,
        inserted_positions: vec![3, 4],
        success: true,
        queries: 2,
    };
    record.validate().unwrap();
    assert!(legality_check(&record, &graphs));

    // {read, capset, open} forms no path in any graph.
    let bad = AttackRecord {
        original: original.clone(),
        adversarial: malicious(
            &v,
            vec![
                id("mknodat"),
                id("read"),
                id("capset"),
                id("open"),
                id("execve"),
                id("io_cancel"),
                id("setxattr"),
            ],
        ),
        inserted_positions: vec![1, 2, 3],
        success: true,
        queries: 2,
    };
    bad.validate().unwrap();
    assert!(!legality_check(&bad, &graphs));

    // Zero insertions are vacuously legal.
    let noop = AttackRecord {
        original: original.clone(),
        adversarial: original,
        inserted_positions: vec![],
        success: false,
        queries: 1,
    };
    assert!(legality_check(&noop, &graphs));
}

#[test]
fn single_insertions_must_be_graph_nodes() {
    let v = vocab();
    let graphs = graph_set(&[pat(&[1, 2], 0.5)]);
    let original = malicious(&v, vec![0, 3]);
    let mut record = AttackRecord {
        original: original.clone(),
        adversarial: malicious(&v, vec![0, 1, 3]),
        inserted_positions: vec![1],
        success: true,
        queries: 1,
    };
    assert!(legality_check(&record, &graphs));
    // Token 5 is no node of any graph.
    record.adversarial = malicious(&v, vec![0, 5, 3]);
    assert!(!legality_check(&record, &graphs));
}
