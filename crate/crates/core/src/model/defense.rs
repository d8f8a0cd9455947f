//! Defenses: sequence squeezing and adversarial retraining.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{fit, AnyModel, SequenceScorer, TrainConfig};
use crate::seq::{AttackRecord, BehaviorSequence, Label, TokenId, Vocabulary};

/// Total idempotent map from behavior id to its group representative.
/// Pad always maps to pad.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SqueezeMap {
    representative: Vec<TokenId>,
}

impl SqueezeMap {
    pub fn identity(vocab: &Vocabulary) -> Self {
        SqueezeMap {
            representative: (0..vocab.len()).collect(),
        }
    }

    /// Builds a map from name pairs; tokens not named map to themselves.
    /// Rejects non-idempotent chains and any attempt to move pad.
    pub fn from_pairs(vocab: &Vocabulary, pairs: &[(String, String)]) -> Result<Self> {
        let mut representative: Vec<TokenId> = (0..vocab.len()).collect();
        for (name, rep) in pairs {
            let id = vocab
                .id(name)
                .ok_or_else(|| Error::Config(format!("unknown token {name:?} in squeeze map")))?;
            let rep_id = vocab
                .id(rep)
                .ok_or_else(|| Error::Config(format!("unknown representative {rep:?}")))?;
            representative[id] = rep_id;
        }
        let map = SqueezeMap { representative };
        map.validate(vocab)?;
        Ok(map)
    }

    pub fn validate(&self, vocab: &Vocabulary) -> Result<()> {
        if self.representative.len() != vocab.len() {
            return Err(Error::Config(format!(
                "squeeze map covers {} ids but vocabulary has {}",
                self.representative.len(),
                vocab.len()
            )));
        }
        if self.representative[vocab.pad_id()] != vocab.pad_id() {
            return Err(Error::Config("squeeze map must keep pad fixed".into()));
        }
        for (id, &rep) in self.representative.iter().enumerate() {
            if rep >= self.representative.len() {
                return Err(Error::Config(format!(
                    "squeeze representative {rep} out of range"
                )));
            }
            if self.representative[rep] != rep {
                return Err(Error::Config(format!(
                    "squeeze map is not idempotent: {id} -> {rep} -> {}",
                    self.representative[rep]
                )));
            }
        }
        Ok(())
    }

    pub fn map_id(&self, id: TokenId) -> TokenId {
        self.representative[id]
    }

    pub fn apply_tokens(&self, tokens: &[TokenId]) -> Vec<TokenId> {
        tokens.iter().map(|&t| self.map_id(t)).collect()
    }

    /// Squeezes a relaxed one-hot matrix by merging columns into their
    /// representatives. Linear, so gradients pull back exactly.
    pub fn apply_matrix(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(x.raw_dim());
        for ((row, col), &mass) in x.indexed_iter() {
            if mass != 0.0 {
                out[[row, self.representative[col]]] += mass;
            }
        }
        out
    }

    /// Chain rule through [`Self::apply_matrix`].
    pub fn pull_back_gradient(&self, inner_grad: &Array2<f64>) -> Array2<f64> {
        Array2::from_shape_fn(inner_grad.raw_dim(), |(row, col)| {
            inner_grad[[row, self.representative[col]]]
        })
    }

    /// Serializes as a JSON object token-name -> representative-name.
    pub fn to_json(&self, vocab: &Vocabulary) -> Result<String> {
        let mut map = BTreeMap::new();
        for (id, &rep) in self.representative.iter().enumerate() {
            map.insert(
                vocab.name(id).unwrap().to_string(),
                vocab.name(rep).unwrap().to_string(),
            );
        }
        Ok(serde_json::to_string_pretty(&map)?)
    }

    /// Parses the JSON object form; every vocabulary token must be mapped.
    pub fn from_json(text: &str, vocab: &Vocabulary) -> Result<Self> {
        let map: BTreeMap<String, String> = serde_json::from_str(text)?;
        let mut representative = vec![usize::MAX; vocab.len()];
        for (name, rep) in &map {
            let id = vocab
                .id(name)
                .ok_or_else(|| Error::Config(format!("unknown token {name:?} in squeeze map")))?;
            let rep_id = vocab
                .id(rep)
                .ok_or_else(|| Error::Config(format!("unknown representative {rep:?}")))?;
            representative[id] = rep_id;
        }
        if let Some(missing) = representative.iter().position(|&r| r == usize::MAX) {
            return Err(Error::Config(format!(
                "squeeze map leaves token {:?} unmapped",
                vocab.name(missing).unwrap()
            )));
        }
        let out = SqueezeMap { representative };
        out.validate(vocab)?;
        Ok(out)
    }
}

/// Replaces each token by its group representative.
pub fn squeeze(seq: &BehaviorSequence, map: &SqueezeMap, vocab: &Vocabulary) -> Result<BehaviorSequence> {
    let squeezed = BehaviorSequence::new(map.apply_tokens(seq.tokens()), seq.label(), vocab)?;
    Ok(match seq.origin() {
        Some(origin) => squeezed.with_origin(origin),
        None => squeezed,
    })
}

/// Default desk-scale grouping: consecutive benign-token pairs merge into
/// the lower id; everything else (attack tokens, pad) stays fixed.
pub fn default_squeeze_map(vocab: &Vocabulary, benign_tokens: &[TokenId]) -> SqueezeMap {
    let mut representative: Vec<TokenId> = (0..vocab.len()).collect();
    for pair in benign_tokens.chunks(2) {
        if let [a, b] = pair {
            representative[*b] = *a;
        }
    }
    SqueezeMap { representative }
}

/// Trains on squeezed data and squeezes again at inference time.
pub fn fit_squeezed(
    arch: crate::model::Architecture,
    data: &[BehaviorSequence],
    map: &SqueezeMap,
    vocab: &Vocabulary,
    max_len: usize,
    cfg: &TrainConfig,
) -> Result<(AnyModel, f64)> {
    map.validate(vocab)?;
    let squeezed: Vec<BehaviorSequence> = data
        .iter()
        .map(|s| squeeze(s, map, vocab))
        .collect::<Result<_>>()?;
    let (inner, acc) = fit(arch, &squeezed, vocab, max_len, cfg)?;
    Ok((
        AnyModel::Squeezed {
            inner: Box::new(inner),
            map: map.clone(),
        },
        acc,
    ))
}

/// Retrains the model's role from scratch on clean data plus the attack
/// records' adversarial sequences labeled malicious. With the same config
/// and zero records this reproduces the original fit bit for bit.
pub fn adversarial_retrain(
    model: &AnyModel,
    clean: &[BehaviorSequence],
    records: &[AttackRecord],
    vocab: &Vocabulary,
    cfg: &TrainConfig,
) -> Result<(AnyModel, f64)> {
    let mut data: Vec<BehaviorSequence> = clean.to_vec();
    for record in records {
        let seq =
            BehaviorSequence::new(record.adversarial.tokens().to_vec(), Label::Malicious, vocab)?
                .with_origin("adversarial-retrain");
        data.push(seq);
    }
    fit(model.architecture(), &data, vocab, model.max_len(), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Architecture;

    fn vocab() -> Vocabulary {
        Vocabulary::new(["open", "write", "writev", "close"]).unwrap()
    }

    #[test]
    fn squeeze_merges_write_family() {
        let v = vocab();
        let map = SqueezeMap::from_pairs(&v, &[("writev".into(), "write".into())]).unwrap();
        let seq = BehaviorSequence::new(
            vec![v.id("open").unwrap(), v.id("writev").unwrap(), v.id("close").unwrap()],
            Label::Benign,
            &v,
        )
        .unwrap();
        let squeezed = squeeze(&seq, &map, &v).unwrap();
        assert_eq!(
            squeezed.tokens(),
            &[
                v.id("open").unwrap(),
                v.id("write").unwrap(),
                v.id("close").unwrap()
            ]
        );
    }

    #[test]
    fn identity_map_is_noop_and_idempotent() {
        let v = vocab();
        let map = SqueezeMap::identity(&v);
        let tokens = vec![0, 1, 2, 3];
        assert_eq!(map.apply_tokens(&tokens), tokens);
        let twice = map.apply_tokens(&map.apply_tokens(&tokens));
        assert_eq!(twice, tokens);
    }

    #[test]
    fn squeeze_is_idempotent_for_any_valid_map() {
        let v = vocab();
        let map = SqueezeMap::from_pairs(&v, &[("writev".into(), "write".into())]).unwrap();
        let tokens = vec![0, 2, 2, 3, 1];
        let once = map.apply_tokens(&tokens);
        assert_eq!(map.apply_tokens(&once), once);
    }

    #[test]
    fn non_idempotent_map_is_rejected() {
        let v = vocab();
        let err = SqueezeMap::from_pairs(
            &v,
            &[
                ("writev".into(), "write".into()),
                ("write".into(), "open".into()),
            ],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn json_form_requires_total_coverage() {
        let v = vocab();
        let err = SqueezeMap::from_json(r#"{"open": "open"}"#, &v).unwrap_err();
        assert!(err.to_string().contains("unmapped"));

        let map = SqueezeMap::from_pairs(&v, &[("writev".into(), "write".into())]).unwrap();
        let json = map.to_json(&v).unwrap();
        assert_eq!(SqueezeMap::from_json(&json, &v).unwrap(), map);
    }

    #[test]
    fn adversarial_retrain_without_records_reproduces_fit() {
        let v = Vocabulary::new((0..10).map(|i| format!("b{i}"))).unwrap();
        let data: Vec<BehaviorSequence> = (0..30)
            .flat_map(|i| {
                [
                    BehaviorSequence::new(vec![i % 5, (i + 1) % 5, 3], Label::Benign, &v).unwrap(),
                    BehaviorSequence::new(vec![5 + i % 5, 6, 7], Label::Malicious, &v).unwrap(),
                ]
            })
            .collect();
        let cfg = TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        };
        let (model, acc) = fit(Architecture::Recurrent, &data, &v, 8, &cfg).unwrap();
        let (retrained, acc2) = adversarial_retrain(&model, &data, &[], &v, &cfg).unwrap();
        assert_eq!(acc, acc2);
        let probe = vec![5, 6, 7];
        assert_eq!(
            model.predict_proba(&probe).unwrap(),
            retrained.predict_proba(&probe).unwrap()
        );
    }
}
