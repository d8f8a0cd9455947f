//! Behavior-sequence data model: vocabulary, labeled sequences, attack
//! records, encoding, dataset IO, fixed-window grouping and the SR/PR
//! campaign metrics.

mod encode;
mod io;
mod metrics;
mod synth;

pub use encode::{encode_tokens, one_hot_encode, window_group};
pub use io::{load_traces, load_vocabulary, save_traces, save_vocabulary};
pub use metrics::{perturbation_rate, success_rate};
pub use synth::{synth_dataset, SynthConfig, SynthDataset};

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Index into a [`Vocabulary`].
pub type TokenId = usize;

/// Name reserved for the padding entry of every vocabulary.
pub const PAD_NAME: &str = "__pad__";

/// Class labels. The convention is fixed across the whole pipeline:
/// 0 = benign, 1 = malicious.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Benign,
    Malicious,
}

impl Label {
    pub fn class_index(self) -> usize {
        match self {
            Label::Benign => 0,
            Label::Malicious => 1,
        }
    }

    pub fn from_class_index(idx: usize) -> Result<Self> {
        match idx {
            0 => Ok(Label::Benign),
            1 => Ok(Label::Malicious),
            other => Err(Error::Config(format!("label must be 0 or 1, got {other}"))),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Benign => write!(f, "benign"),
            Label::Malicious => write!(f, "malicious"),
        }
    }
}

/// The symbol universe for behavior tokens (syscall / API identifiers).
///
/// Ids are contiguous `0..len()`, names are unique, and the last id is the
/// reserved pad entry which never appears in raw traces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    names: Vec<String>,
    index: HashMap<String, TokenId>,
    pad_id: TokenId,
}

impl Vocabulary {
    /// Builds a vocabulary from behavior names; the pad entry is appended
    /// automatically as the final id.
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut all: Vec<String> = names.into_iter().map(Into::into).collect();
        if all.iter().any(|n| n == PAD_NAME) {
            return Err(Error::Config(format!(
                "token name {PAD_NAME} is reserved for padding"
            )));
        }
        if all.is_empty() {
            return Err(Error::Config("vocabulary needs at least one token".into()));
        }
        all.push(PAD_NAME.to_string());
        let mut index = HashMap::with_capacity(all.len());
        for (id, name) in all.iter().enumerate() {
            if index.insert(name.clone(), id).is_some() {
                return Err(Error::Config(format!("duplicate token name {name:?}")));
            }
        }
        let pad_id = all.len() - 1;
        Ok(Vocabulary {
            names: all,
            index,
            pad_id,
        })
    }

    /// Total number of ids, pad included.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn pad_id(&self) -> TokenId {
        self.pad_id
    }

    pub fn id(&self, name: &str) -> Option<TokenId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: TokenId) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    /// All real (non-pad) behavior ids in ascending order.
    pub fn behavior_ids(&self) -> impl Iterator<Item = TokenId> + '_ {
        (0..self.names.len()).filter(move |&id| id != self.pad_id)
    }

    pub fn contains_id(&self, id: TokenId) -> bool {
        id < self.names.len()
    }

    /// Checks that `id` denotes a real behavior (in range, not pad).
    pub fn check_behavior(&self, id: TokenId) -> Result<()> {
        if !self.contains_id(id) || id == self.pad_id {
            return Err(Error::InvalidToken {
                id,
                vocab_size: self.len(),
                pad_id: self.pad_id,
            });
        }
        Ok(())
    }

    /// Rebuilds a vocabulary from explicit (name, id) pairs, e.g. a parsed
    /// vocabulary file. Ids must be contiguous from 0 and include the pad
    /// entry (which need not be last).
    pub fn from_named_ids<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, TokenId)>,
    {
        let pairs: Vec<(String, TokenId)> = pairs.into_iter().collect();
        if pairs.is_empty() {
            return Err(Error::Config("vocabulary needs at least one token".into()));
        }
        let mut names = vec![None; pairs.len()];
        for (name, id) in &pairs {
            if *id >= names.len() {
                return Err(Error::Config(format!(
                    "vocabulary ids must be contiguous 0..{}, got {name:?} = {id}",
                    names.len()
                )));
            }
            if names[*id].is_some() {
                return Err(Error::Config(format!("duplicate vocabulary id {id}")));
            }
            names[*id] = Some(name.clone());
        }
        let names: Vec<String> = names.into_iter().map(Option::unwrap).collect();
        let pad_id = names
            .iter()
            .position(|n| n == PAD_NAME)
            .ok_or_else(|| Error::Config(format!("vocabulary is missing the {PAD_NAME} entry")))?;
        let mut index = HashMap::with_capacity(names.len());
        for (id, name) in names.iter().enumerate() {
            if index.insert(name.clone(), id).is_some() {
                return Err(Error::Config(format!("duplicate token name {name:?}")));
            }
        }
        Ok(Vocabulary {
            names,
            index,
            pad_id,
        })
    }

    /// Stable content hash used to tie model checkpoints to the vocabulary
    /// they were trained against.
    pub fn hash_hex(&self) -> String {
        let mut hasher = Sha256::new();
        for (id, name) in self.names.iter().enumerate() {
            hasher.update(name.as_bytes());
            hasher.update(b"=");
            hasher.update(id.to_string().as_bytes());
            hasher.update(b"\n");
        }
        let digest = hasher.finalize();
        let mut out = String::with_capacity(digest.len() * 2);
        for byte in digest {
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }
}

/// A variable-length list of behavior tokens with a class label.
///
/// `origin` is provenance metadata (dataset path or generator seed) and is
/// excluded from equality, so IO round-trips compare by content.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BehaviorSequence {
    tokens: Vec<TokenId>,
    label: Label,
    origin: Option<String>,
}

impl PartialEq for BehaviorSequence {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens && self.label == other.label
    }
}

impl Eq for BehaviorSequence {}

impl BehaviorSequence {
    /// Validates tokens against the vocabulary: non-empty, in range, no pad.
    pub fn new(tokens: Vec<TokenId>, label: Label, vocab: &Vocabulary) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Config("behavior sequence must be non-empty".into()));
        }
        for &t in &tokens {
            vocab.check_behavior(t)?;
        }
        Ok(BehaviorSequence {
            tokens,
            label,
            origin: None,
        })
    }

    pub fn with_origin(mut self, origin: impl Into<String>) -> Self {
        self.origin = Some(origin.into());
        self
    }

    /// Internal constructor for sequences derived from an already-validated
    /// one (label and origin carried over, tokens trusted).
    pub(crate) fn derived(template: &BehaviorSequence, tokens: Vec<TokenId>) -> Self {
        BehaviorSequence {
            tokens,
            label: template.label,
            origin: template.origin.clone(),
        }
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn label(&self) -> Label {
        self.label
    }

    pub fn origin(&self) -> Option<&str> {
        self.origin.as_deref()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Outcome of one attack on one sequence.
///
/// The insertion-only invariant ties the three structural fields together:
/// deleting the tokens at `inserted_positions` from `adversarial` yields
/// exactly `original`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRecord {
    pub original: BehaviorSequence,
    pub adversarial: BehaviorSequence,
    /// Indices into `adversarial`, strictly increasing.
    pub inserted_positions: Vec<usize>,
    pub success: bool,
    /// Number of classifier verdicts requested while producing this record.
    pub queries: usize,
}

impl AttackRecord {
    /// Checks the insertion-only invariant by direct reconstruction.
    pub fn validate(&self) -> Result<()> {
        if !self
            .inserted_positions
            .windows(2)
            .all(|w| w[0] < w[1])
        {
            return Err(Error::Config(
                "inserted_positions must be strictly increasing".into(),
            ));
        }
        if let Some(&last) = self.inserted_positions.last() {
            if last >= self.adversarial.len() {
                return Err(Error::Config(format!(
                    "inserted position {last} outside adversarial sequence of length {}",
                    self.adversarial.len()
                )));
            }
        }
        let reconstructed = delete_positions(self.adversarial.tokens(), &self.inserted_positions);
        if reconstructed != self.original.tokens() {
            return Err(Error::Config(
                "deleting inserted positions does not recover the original sequence".into(),
            ));
        }
        Ok(())
    }

    /// Tokens inserted by the attack, in adversarial order.
    pub fn inserted_tokens(&self) -> Vec<TokenId> {
        self.inserted_positions
            .iter()
            .map(|&p| self.adversarial.tokens()[p])
            .collect()
    }
}

/// Removes the tokens at `positions` (strictly increasing) from `tokens`.
pub fn delete_positions(tokens: &[TokenId], positions: &[usize]) -> Vec<TokenId> {
    let mut out = Vec::with_capacity(tokens.len().saturating_sub(positions.len()));
    let mut cursor = positions.iter().peekable();
    for (i, &t) in tokens.iter().enumerate() {
        if cursor.peek() == Some(&&i) {
            cursor.next();
        } else {
            out.push(t);
        }
    }
    out
}
