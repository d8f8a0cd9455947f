//! One-hot encoding and fixed-window grouping.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::seq::{BehaviorSequence, Label, TokenId, Vocabulary};

/// One-hot encodes a raw token list into a `max_len x |V|` matrix.
///
/// Row `i` is the indicator of token `i`; rows past the end of the list are
/// the pad indicator. Lists longer than `max_len` are truncated at the tail.
/// An empty list encodes to an all-pad matrix.
pub fn encode_tokens(tokens: &[TokenId], vocab: &Vocabulary, max_len: usize) -> Result<Array2<f64>> {
    if max_len == 0 {
        return Err(Error::Config("max_len must be >= 1".into()));
    }
    let mut out = Array2::zeros((max_len, vocab.len()));
    for row in 0..max_len {
        let col = if row < tokens.len() {
            let id = tokens[row];
            vocab.check_behavior(id)?;
            id
        } else {
            vocab.pad_id()
        };
        out[[row, col]] = 1.0;
    }
    Ok(out)
}

/// One-hot encodes a behavior sequence; see [`encode_tokens`].
pub fn one_hot_encode(
    seq: &BehaviorSequence,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<Array2<f64>> {
    encode_tokens(seq.tokens(), vocab, max_len)
}

/// Splits a raw trace into fixed windows `[i, i+window)` for
/// `i = 0, stride, 2*stride, ...`. A final short window is kept when at
/// least `window/2` tokens remain, otherwise dropped. The label is
/// inherited from the trace.
pub fn window_group(
    trace: &[TokenId],
    label: Label,
    window: usize,
    stride: usize,
    vocab: &Vocabulary,
) -> Result<Vec<BehaviorSequence>> {
    if window == 0 || stride == 0 {
        return Err(Error::Config("window and stride must be >= 1".into()));
    }
    let mut out = Vec::new();
    let mut start = 0usize;
    while start + window <= trace.len() {
        out.push(BehaviorSequence::new(
            trace[start..start + window].to_vec(),
            label,
            vocab,
        )?);
        start += stride;
    }
    let remainder = trace.len().saturating_sub(start);
    if remainder > 0 && (remainder as f64) >= window as f64 / 2.0 {
        out.push(BehaviorSequence::new(trace[start..].to_vec(), label, vocab)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(n: usize) -> Vocabulary {
        Vocabulary::new((0..n).map(|i| format!("b{i}"))).unwrap()
    }

    #[test]
    fn one_hot_rows_follow_tokens_then_pad() {
        let v = vocab(3);
        let seq = BehaviorSequence::new(vec![2, 0], Label::Benign, &v).unwrap();
        let m = one_hot_encode(&seq, &v, 3).unwrap();
        assert_eq!(m.shape(), &[3, 4]);
        assert_eq!(m.row(0).to_vec(), vec![0.0, 0.0, 1.0, 0.0]);
        assert_eq!(m.row(1).to_vec(), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(m.row(2).to_vec(), vec![0.0, 0.0, 0.0, 1.0]); // pad
    }

    #[test]
    fn one_hot_truncates_tail() {
        let v = vocab(3);
        let seq = BehaviorSequence::new(vec![1, 1, 1, 1], Label::Benign, &v).unwrap();
        let m = one_hot_encode(&seq, &v, 2).unwrap();
        assert_eq!(m.shape(), &[2, 4]);
        for row in 0..2 {
            assert_eq!(m[[row, 1]], 1.0);
        }
    }

    #[test]
    fn one_hot_single_token_pad_column_last() {
        let v = vocab(2);
        let seq = BehaviorSequence::new(vec![0], Label::Benign, &v).unwrap();
        let m = one_hot_encode(&seq, &v, 1).unwrap();
        assert_eq!(m.shape(), &[1, 3]);
        assert_eq!(m.row(0).to_vec(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn one_hot_rows_sum_to_one() {
        let v = vocab(5);
        let seq = BehaviorSequence::new(vec![0, 4, 2], Label::Malicious, &v).unwrap();
        let m = one_hot_encode(&seq, &v, 8).unwrap();
        for row in m.rows() {
            assert_eq!(row.sum(), 1.0);
        }
    }

    #[test]
    fn one_hot_rejects_invalid_id() {
        let v = vocab(3);
        let err = encode_tokens(&[7], &v, 4).unwrap_err();
        assert!(err.to_string().contains('7'));
    }

    #[test]
    fn window_group_exact_tiling() {
        let v = vocab(4);
        let trace: Vec<usize> = (0..10).map(|i| i % 4).collect();
        let windows = window_group(&trace, Label::Benign, 5, 5, &v).unwrap();
        assert_eq!(windows.len(), 2);
        assert!(windows.iter().all(|w| w.len() == 5));
    }

    #[test]
    fn window_group_drops_short_remainder() {
        let v = vocab(4);
        let trace: Vec<usize> = (0..12).map(|i| i % 4).collect();
        // 2-token remainder < 2.5 is dropped.
        let windows = window_group(&trace, Label::Malicious, 5, 5, &v).unwrap();
        assert_eq!(windows.len(), 2);
    }

    #[test]
    fn window_group_keeps_half_window_remainder() {
        let v = vocab(4);
        let trace: Vec<usize> = (0..8).map(|i| i % 4).collect();
        // 3-token remainder >= 2.5 is kept.
        let windows = window_group(&trace, Label::Benign, 5, 5, &v).unwrap();
        assert_eq!(windows.len(), 2);
        assert_eq!(windows[1].len(), 3);
    }

    #[test]
    fn window_group_empty_trace_is_empty() {
        let v = vocab(4);
        assert!(window_group(&[], Label::Benign, 5, 5, &v).unwrap().is_empty());
    }
}
