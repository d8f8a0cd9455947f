//! Model checkpoints: a self-describing JSON manifest wrapping the
//! architecture tag and weights, tied to the vocabulary by hash.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AnyModel, SequenceScorer};
use crate::seq::Vocabulary;

const FORMAT: &str = "seqevade-model/1";

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    #[serde(flatten)]
    model: AnyModel,
}

pub fn save_model(model: &AnyModel, path: &Path) -> Result<()> {
    let checkpoint = Checkpoint {
        format: FORMAT.to_string(),
        model: model.clone(),
    };
    fs::write(path, serde_json::to_string(&checkpoint)?)?;
    Ok(())
}

/// Loads a checkpoint; when a vocabulary is supplied the stored hash must
/// match it.
pub fn load_model(path: &Path, vocab: Option<&Vocabulary>) -> Result<AnyModel> {
    let text = fs::read_to_string(path)?;
    let checkpoint: Checkpoint = serde_json::from_str(&text)?;
    if checkpoint.format != FORMAT {
        return Err(Error::Config(format!(
            "unsupported checkpoint format {:?} in {}",
            checkpoint.format,
            path.display()
        )));
    }
    if let Some(vocab) = vocab {
        let stored = &checkpoint.model.meta().vocab_hash;
        if *stored != vocab.hash_hex() {
            return Err(Error::Config(format!(
                "checkpoint {} was trained against a different vocabulary",
                path.display()
            )));
        }
    }
    Ok(checkpoint.model)
}
