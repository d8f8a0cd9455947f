//! Dataset IO.
//!
//! Trace files hold one sequence per line as space-separated decimal ids;
//! labels live in a sidecar with the same path but a `.labels` extension,
//! one `0`/`1` per line. Vocabularies are JSON objects mapping token name
//! to id, including the `__pad__` entry.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::seq::{BehaviorSequence, Label, TokenId, Vocabulary};

/// Sidecar path for a trace file: same path with the `.labels` extension.
pub fn labels_path(trace_path: &Path) -> PathBuf {
    trace_path.with_extension("labels")
}

pub fn save_traces(seqs: &[BehaviorSequence], path: &Path) -> Result<()> {
    let mut trace_text = String::new();
    let mut label_text = String::new();
    for seq in seqs {
        let line: Vec<String> = seq.tokens().iter().map(|t| t.to_string()).collect();
        trace_text.push_str(&line.join(" "));
        trace_text.push('\n');
        label_text.push_str(&seq.label().class_index().to_string());
        label_text.push('\n');
    }
    fs::write(path, trace_text)?;
    fs::write(labels_path(path), label_text)?;
    Ok(())
}

pub fn load_traces(path: &Path, vocab: &Vocabulary) -> Result<Vec<BehaviorSequence>> {
    let display = path.display().to_string();
    let trace_text = fs::read_to_string(path)?;
    let label_text = fs::read_to_string(labels_path(path))?;
    let labels: Vec<&str> = label_text.lines().collect();
    let lines: Vec<&str> = trace_text.lines().collect();
    if lines.len() != labels.len() {
        return Err(Error::Parse {
            path: display,
            line: labels.len().min(lines.len()) + 1,
            message: format!(
                "trace has {} lines but label sidecar has {}",
                lines.len(),
                labels.len()
            ),
        });
    }

    let mut out = Vec::with_capacity(lines.len());
    for (i, (line, label_line)) in lines.iter().zip(&labels).enumerate() {
        let lineno = i + 1;
        let parse_err = |message: String| Error::Parse {
            path: display.clone(),
            line: lineno,
            message,
        };
        let mut tokens = Vec::new();
        for field in line.split_whitespace() {
            let id: TokenId = field
                .parse()
                .map_err(|_| parse_err(format!("invalid token id {field:?}")))?;
            vocab
                .check_behavior(id)
                .map_err(|e| parse_err(e.to_string()))?;
            tokens.push(id);
        }
        let label = match label_line.trim() {
            "0" => Label::Benign,
            "1" => Label::Malicious,
            other => return Err(parse_err(format!("invalid label {other:?}"))),
        };
        let seq = BehaviorSequence::new(tokens, label, vocab)
            .map_err(|e| parse_err(e.to_string()))?
            .with_origin(format!("{display}:{lineno}"));
        out.push(seq);
    }
    Ok(out)
}

pub fn save_vocabulary(vocab: &Vocabulary, path: &Path) -> Result<()> {
    // BTreeMap for stable on-disk ordering.
    let map: BTreeMap<&str, TokenId> = (0..vocab.len())
        .map(|id| (vocab.name(id).unwrap(), id))
        .collect();
    fs::write(path, serde_json::to_string_pretty(&map)?)?;
    Ok(())
}

pub fn load_vocabulary(path: &Path) -> Result<Vocabulary> {
    let text = fs::read_to_string(path)?;
    let map: BTreeMap<String, TokenId> = serde_json::from_str(&text)?;
    Vocabulary::from_named_ids(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vocab(n: usize) -> Vocabulary {
        Vocabulary::new((0..n).map(|i| format!("b{i}"))).unwrap()
    }

    #[test]
    fn single_line_with_label_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.txt");
        fs::write(&path, "1 2 3\n").unwrap();
        fs::write(labels_path(&path), "1\n").unwrap();
        let v = vocab(6);
        let seqs = load_traces(&path, &v).unwrap();
        assert_eq!(seqs.len(), 1);
        assert_eq!(seqs[0].tokens(), &[1, 2, 3]);
        assert_eq!(seqs[0].label(), Label::Malicious);
    }

    #[test]
    fn round_trip_identity_on_random_sequences() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.txt");
        let v = vocab(12);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let seqs: Vec<BehaviorSequence> = (0..100)
            .map(|_| {
                let len = rng.gen_range(1..30);
                let tokens = (0..len).map(|_| rng.gen_range(0..12)).collect();
                let label = if rng.gen_bool(0.5) {
                    Label::Benign
                } else {
                    Label::Malicious
                };
                BehaviorSequence::new(tokens, label, &v).unwrap()
            })
            .collect();
        save_traces(&seqs, &path).unwrap();
        let loaded = load_traces(&path, &v).unwrap();
        assert_eq!(loaded, seqs);
    }

    #[test]
    fn out_of_range_id_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.txt");
        let v = vocab(4); // ids 0..=3, pad 4
        fs::write(&path, "0 1\n2 9\n").unwrap();
        fs::write(labels_path(&path), "0\n0\n").unwrap();
        let err = load_traces(&path, &v).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn pad_id_in_trace_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.txt");
        let v = vocab(4);
        fs::write(&path, format!("{}\n", v.pad_id())).unwrap();
        fs::write(labels_path(&path), "0\n").unwrap();
        assert!(load_traces(&path, &v).is_err());
    }

    #[test]
    fn empty_file_loads_as_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.txt");
        fs::write(&path, "").unwrap();
        fs::write(labels_path(&path), "").unwrap();
        assert!(load_traces(&path, &vocab(4)).unwrap().is_empty());
    }

    #[test]
    fn vocabulary_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.json");
        let v = vocab(5);
        save_vocabulary(&v, &path).unwrap();
        let loaded = load_vocabulary(&path).unwrap();
        assert_eq!(loaded, v);
        assert_eq!(loaded.hash_hex(), v.hash_hex());
    }
}
