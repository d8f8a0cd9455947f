//! Apriori-style contiguous n-gram mining with document-frequency support.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::exec::par_map;
use crate::mine::Pattern;
use crate::seq::{BehaviorSequence, Label, TokenId};

/// Mines every contiguous n-gram of length `2..=max_len` whose support (the
/// fraction of input sequences containing it at least once) reaches
/// `min_support`.
///
/// Candidate generation prunes on the Apriori property — an (n+1)-gram can
/// only be frequent if both its length-n prefix and suffix are — which
/// never changes the result versus brute-force enumeration.
pub fn mine_frequent(
    seqs: &[BehaviorSequence],
    min_support: f64,
    max_len: usize,
) -> Result<Vec<Pattern>> {
    if !(min_support > 0.0 && min_support <= 1.0) {
        return Err(Error::Config(format!(
            "support threshold must be in (0, 1], got {min_support}"
        )));
    }
    if max_len < 2 {
        return Err(Error::Config(format!(
            "max pattern length must be >= 2, got {max_len}"
        )));
    }
    if seqs.is_empty() {
        return Err(Error::Config("pattern corpus is empty".into()));
    }
    if let Some(bad) = seqs.iter().find(|s| s.label() != Label::Benign) {
        return Err(Error::Config(format!(
            "pattern corpus must be all-benign, found a malicious sequence ({:?})",
            bad.origin().unwrap_or("unknown origin")
        )));
    }

    let n_docs = seqs.len() as f64;
    let mut out: Vec<Pattern> = Vec::new();
    let mut frequent_prev: HashSet<Vec<TokenId>> = HashSet::new();

    for len in 2..=max_len {
        // Document frequency per gram, counted once per sequence. Counting
        // shards over sequences and merges, so corpora parallelize cleanly.
        let per_seq: Vec<HashSet<Vec<TokenId>>> = par_map(seqs, |seq| {
            seq.tokens()
                .windows(len)
                .filter(|gram| {
                    len == 2
                        || (frequent_prev.contains(&gram[..len - 1])
                            && frequent_prev.contains(&gram[1..]))
                })
                .map(|gram| gram.to_vec())
                .collect()
        });
        let mut counts: HashMap<Vec<TokenId>, usize> = HashMap::new();
        for grams in per_seq {
            for gram in grams {
                *counts.entry(gram).or_insert(0) += 1;
            }
        }

        let mut frequent_here: Vec<Pattern> = counts
            .into_iter()
            .filter_map(|(gram, count)| {
                let support = count as f64 / n_docs;
                (support >= min_support).then_some(Pattern {
                    behaviors: gram,
                    support,
                })
            })
            .collect();
        if frequent_here.is_empty() {
            break;
        }
        frequent_prev = frequent_here
            .iter()
            .map(|p| p.behaviors.clone())
            .collect();
        frequent_here.sort_by(|a, b| {
            b.support
                .partial_cmp(&a.support)
                .unwrap()
                .then_with(|| a.behaviors.cmp(&b.behaviors))
        });
        out.extend(frequent_here);
    }

    out.sort_by(|a, b| {
        b.support
            .partial_cmp(&a.support)
            .unwrap()
            .then_with(|| a.behaviors.cmp(&b.behaviors))
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seq::Vocabulary;

    fn corpus(rows: &[&[usize]]) -> Vec<BehaviorSequence> {
        let v = Vocabulary::new((0..10).map(|i| format!("b{i}"))).unwrap();
        rows.iter()
            .map(|r| BehaviorSequence::new(r.to_vec(), Label::Benign, &v).unwrap())
            .collect()
    }

    fn pattern_set(patterns: &[Pattern]) -> HashSet<(Vec<usize>, u64)> {
        patterns
            .iter()
            .map(|p| (p.behaviors.clone(), (p.support * 1e9).round() as u64))
            .collect()
    }

    #[test]
    fn two_gram_support_counts_documents() {
        // a=0 b=1 c=2 d=3
        let seqs = corpus(&[&[0, 1, 2], &[0, 1, 3], &[0, 1, 2]]);
        let got = mine_frequent(&seqs, 2.0 / 3.0, 2).unwrap();
        let expected = vec![
            Pattern {
                behaviors: vec![0, 1],
                support: 1.0,
            },
            Pattern {
                behaviors: vec![1, 2],
                support: 2.0 / 3.0,
            },
        ];
        assert_eq!(pattern_set(&got), pattern_set(&expected));
    }

    #[test]
    fn identical_corpus_yields_all_ngrams_at_full_support() {
        let seqs = corpus(&[&[4, 5, 6, 7], &[4, 5, 6, 7]]);
        let got = mine_frequent(&seqs, 1.0, 3).unwrap();
        // 2-grams: (4,5),(5,6),(6,7); 3-grams: (4,5,6),(5,6,7)
        assert_eq!(got.len(), 5);
        assert!(got.iter().all(|p| p.support == 1.0));
    }

    #[test]
    fn threshold_above_attainable_support_gives_empty() {
        let seqs = corpus(&[&[0, 1], &[2, 3]]);
        assert!(mine_frequent(&seqs, 0.75, 3).unwrap().is_empty());
    }

    #[test]
    fn repeated_gram_in_one_sequence_counts_once() {
        let seqs = corpus(&[&[0, 1, 0, 1, 0, 1], &[2, 3]]);
        let got = mine_frequent(&seqs, 0.4, 2).unwrap();
        let pair = got.iter().find(|p| p.behaviors == vec![0, 1]).unwrap();
        assert_eq!(pair.support, 0.5);
    }

    #[test]
    fn rejects_bad_threshold_and_malicious_corpus() {
        let seqs = corpus(&[&[0, 1]]);
        assert!(mine_frequent(&seqs, 0.0, 3).is_err());
        assert!(mine_frequent(&seqs, 1.5, 3).is_err());

        let v = Vocabulary::new(["a", "b"]).unwrap();
        let bad = vec![BehaviorSequence::new(vec![0, 1], Label::Malicious, &v).unwrap()];
        assert!(mine_frequent(&bad, 0.5, 3).is_err());
    }
}
