//! Attack success rate and perturbation rate.

use crate::error::{Error, Result};
use crate::seq::AttackRecord;

/// Fraction of records marked successful.
pub fn success_rate(records: &[AttackRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::UndefinedMetric(
            "success rate over zero attack records".into(),
        ));
    }
    let wins = records.iter().filter(|r| r.success).count();
    Ok(wins as f64 / records.len() as f64)
}

/// Mean over records of `inserted / len(original)`.
///
/// The denominator is the original length, so a single record's rate may
/// exceed 1 when more tokens are inserted than the sequence held.
pub fn perturbation_rate(records: &[AttackRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::UndefinedMetric(
            "perturbation rate over zero attack records".into(),
        ));
    }
    let total: f64 = records
        .iter()
        .map(|r| r.inserted_positions.len() as f64 / r.original.len() as f64)
        .sum();
    Ok(total / records.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seq::{BehaviorSequence, Label, Vocabulary};

    fn record(orig: Vec<usize>, adv: Vec<usize>, inserted: Vec<usize>, success: bool) -> AttackRecord {
        let v = Vocabulary::new((0..8).map(|i| format!("b{i}"))).unwrap();
        let r = AttackRecord {
            original: BehaviorSequence::new(orig, Label::Malicious, &v).unwrap(),
            adversarial: BehaviorSequence::new(adv, Label::Malicious, &v).unwrap(),
            inserted_positions: inserted,
            success,
            queries: 1,
        };
        r.validate().unwrap();
        r
    }

    #[test]
    fn success_rate_counts_wins() {
        let win = record(vec![0], vec![0], vec![], true);
        let loss = record(vec![0], vec![0], vec![], false);
        let records = vec![win.clone(), win.clone(), win, loss];
        assert_eq!(success_rate(&records).unwrap(), 0.75);
    }

    #[test]
    fn success_rate_zero_and_one() {
        let loss = record(vec![0], vec![0], vec![], false);
        assert_eq!(success_rate(&vec![loss.clone(); 5]).unwrap(), 0.0);
        let win = record(vec![0], vec![0], vec![], true);
        assert_eq!(success_rate(&vec![win; 3]).unwrap(), 1.0);
    }

    #[test]
    fn metrics_reject_empty_input() {
        assert!(success_rate(&[]).is_err());
        assert!(perturbation_rate(&[]).is_err());
    }

    #[test]
    fn perturbation_rate_matches_hand_computed_example() {
        // 4-token original, 3 insertions -> 7-token adversarial, rate 0.75.
        let r = record(
            vec![0, 1, 2, 3],
            vec![0, 4, 1, 5, 6, 2, 3],
            vec![1, 3, 4],
            true,
        );
        assert_eq!(perturbation_rate(&[r]).unwrap(), 0.75);
    }

    #[test]
    fn perturbation_rate_zero_insertions() {
        let r = record(vec![0, 1], vec![0, 1], vec![], false);
        assert_eq!(perturbation_rate(&[r]).unwrap(), 0.0);
    }

    #[test]
    fn perturbation_rate_is_mean_of_ratios() {
        let a = record(vec![0, 1, 2, 3, 4], vec![0, 1, 2, 3, 4, 5], vec![5], true); // 1/5
        let b = record(vec![0, 1, 2, 3, 4], vec![5, 0, 1, 6, 2, 3, 4], vec![0, 3], true); // 2/5
        let got = perturbation_rate(&[a, b]).unwrap();
        assert!((got - 0.3).abs() < 1e-12);
    }
}
