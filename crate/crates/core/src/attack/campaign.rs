//! Attack campaigns over window sets, transfer evaluation against held-out
//! target roles, and the defense evaluation protocol.

use serde::{Deserialize, Serialize};

use crate::dqn::QAgent;
use crate::error::{Error, Result};
use crate::exec::{par_map, seq_map};
use crate::mine::PerturbationGraphSet;
use crate::model::{
    adversarial_retrain, distill_surrogate, fit_squeezed, AnyModel, Architecture, SequenceScorer,
    SqueezeMap, TrainConfig,
};
use crate::seq::{perturbation_rate, BehaviorSequence, Label};

use super::{attack, AttackBudget, AttackResult};

/// Attacks every window, fanning out across the worker pool. Results keep
/// input order, so runs are reproducible regardless of thread count.
pub fn run_campaign(
    windows: &[BehaviorSequence],
    surrogate: &dyn SequenceScorer,
    agent: &QAgent,
    graphs: &PerturbationGraphSet,
    budget: &AttackBudget,
) -> Result<Vec<AttackResult>> {
    par_map(windows, |seq| attack(seq, surrogate, agent, graphs, budget))
        .into_iter()
        .collect()
}

/// Single-threaded campaign; the benchmark baseline.
pub fn run_campaign_seq(
    windows: &[BehaviorSequence],
    surrogate: &dyn SequenceScorer,
    agent: &QAgent,
    graphs: &PerturbationGraphSet,
    budget: &AttackBudget,
) -> Result<Vec<AttackResult>> {
    seq_map(windows, |seq| attack(seq, surrogate, agent, graphs, budget))
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    /// Windows the surrogate detected and the search actually attacked.
    pub attacked: usize,
    /// Windows skipped because the surrogate already read them as benign.
    pub skipped_already_benign: usize,
    /// Success rate against the surrogate over attacked windows.
    pub success_rate: f64,
    /// Mean perturbation rate over successful attacks.
    pub perturbation_rate: Option<f64>,
    pub mean_queries: f64,
    pub total_queries: usize,
    pub mean_insertions_successful: Option<f64>,
}

pub fn summarize(results: &[AttackResult]) -> Result<CampaignSummary> {
    let attacked: Vec<&AttackResult> = results.iter().filter(|r| !r.already_benign).collect();
    if attacked.is_empty() {
        return Err(Error::UndefinedMetric(
            "campaign attacked zero surrogate-detected windows".into(),
        ));
    }
    let successful: Vec<_> = attacked
        .iter()
        .filter(|r| r.record.success)
        .map(|r| r.record.clone())
        .collect();
    let success_rate = successful.len() as f64 / attacked.len() as f64;
    let pr = if successful.is_empty() {
        None
    } else {
        Some(perturbation_rate(&successful)?)
    };
    let mean_insertions = if successful.is_empty() {
        None
    } else {
        Some(
            successful
                .iter()
                .map(|r| r.inserted_positions.len() as f64)
                .sum::<f64>()
                / successful.len() as f64,
        )
    };
    let total_queries: usize = attacked.iter().map(|r| r.record.queries).sum();
    Ok(CampaignSummary {
        attacked: attacked.len(),
        skipped_already_benign: results.len() - attacked.len(),
        success_rate,
        perturbation_rate: pr,
        mean_queries: total_queries as f64 / attacked.len() as f64,
        total_queries,
        mean_insertions_successful: mean_insertions,
    })
}

/// Transfer success against another model, measured on the
/// surrogate-successful set: among records the model detects as malicious
/// in their original form, the fraction whose adversarial it reads benign.
pub fn transfer_success_rate(
    results: &[AttackResult],
    model: &dyn SequenceScorer,
) -> Result<f64> {
    let verdicts: Vec<Result<Option<bool>>> = par_map(results, |r| {
        if r.already_benign || !r.record.success {
            return Ok(None);
        }
        if model.predict_label(r.record.original.tokens())? != Label::Malicious {
            return Ok(None);
        }
        Ok(Some(
            model.predict_label(r.record.adversarial.tokens())? == Label::Benign,
        ))
    });
    let mut evaluated = 0usize;
    let mut fooled = 0usize;
    for v in verdicts {
        if let Some(hit) = v? {
            evaluated += 1;
            if hit {
                fooled += 1;
            }
        }
    }
    if evaluated == 0 {
        return Err(Error::UndefinedMetric(
            "transfer set is empty after filtering".into(),
        ));
    }
    Ok(fooled as f64 / evaluated as f64)
}

/// Attack success against an arbitrary model over all attacked windows:
/// among originals the model detects, the fraction of final adversarials
/// it reads benign.
pub fn sr_against_model(results: &[AttackResult], model: &dyn SequenceScorer) -> Result<f64> {
    let verdicts: Vec<Result<Option<bool>>> = par_map(results, |r| {
        if r.already_benign {
            return Ok(None);
        }
        if model.predict_label(r.record.original.tokens())? != Label::Malicious {
            return Ok(None);
        }
        Ok(Some(
            model.predict_label(r.record.adversarial.tokens())? == Label::Benign,
        ))
    });
    let mut evaluated = 0usize;
    let mut fooled = 0usize;
    for v in verdicts {
        if let Some(hit) = v? {
            evaluated += 1;
            if hit {
                fooled += 1;
            }
        }
    }
    if evaluated == 0 {
        return Err(Error::UndefinedMetric(
            "model detects none of the attacked originals".into(),
        ));
    }
    Ok(fooled as f64 / evaluated as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DefenseEvalConfig {
    pub surrogate_arch: Architecture,
    /// Training config for the fresh surrogate distilled from each
    /// defended model.
    pub distill: TrainConfig,
    /// Training config for adversarial retraining and squeezed fits.
    pub retrain: TrainConfig,
    pub budget: AttackBudget,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DefenseOutcome {
    pub defense: String,
    /// Fresh-attack success rate against the defended model.
    pub attack_sr: f64,
    /// Signed change versus the undefended baseline SR.
    pub delta_vs_baseline: f64,
    /// Baseline adversarials replayed against the defended model.
    pub replay_sr: f64,
    /// Clean held-out accuracy of the defended model.
    pub clean_accuracy: f64,
    /// Agreement of the fresh surrogate with the defended model.
    pub surrogate_agreement: f64,
}

/// Hardens the target with each defense, re-distills a surrogate from the
/// defended model, reruns the attack, and reports SR movement. Returns the
/// undefended baseline SR alongside per-defense outcomes.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_defenses(
    windows: &[BehaviorSequence],
    clean: &[BehaviorSequence],
    probes: &[BehaviorSequence],
    target: &AnyModel,
    baseline: &[AttackResult],
    agent: &QAgent,
    graphs: &PerturbationGraphSet,
    squeeze_map: &SqueezeMap,
    vocab: &crate::seq::Vocabulary,
    cfg: &DefenseEvalConfig,
) -> Result<(f64, Vec<DefenseOutcome>)> {
    let baseline_sr = sr_against_model(baseline, target)?;
    let successful_records: Vec<_> = baseline
        .iter()
        .filter(|r| !r.already_benign && r.record.success)
        .map(|r| r.record.clone())
        .collect();

    let mut outcomes = Vec::new();
    for defense in ["adversarial-learning", "sequence-squeezing"] {
        let (defended, clean_accuracy) = match defense {
            "adversarial-learning" => {
                adversarial_retrain(target, clean, &successful_records, vocab, &cfg.retrain)?
            }
            _ => fit_squeezed(
                target.architecture(),
                clean,
                squeeze_map,
                vocab,
                target.max_len(),
                &cfg.retrain,
            )?,
        };

        let distilled = distill_surrogate(
            &defended,
            probes,
            cfg.surrogate_arch,
            vocab,
            target.max_len(),
            &cfg.distill,
        )?;
        let fresh = run_campaign(windows, &distilled.model, agent, graphs, &cfg.budget)?;
        let attack_sr = sr_against_model(&fresh, &defended).unwrap_or(0.0);
        let replay_sr = sr_against_model(baseline, &defended).unwrap_or(0.0);
        outcomes.push(DefenseOutcome {
            defense: defense.to_string(),
            attack_sr,
            delta_vs_baseline: attack_sr - baseline_sr,
            replay_sr,
            clean_accuracy,
            surrogate_agreement: distilled.agreement,
        });
    }
    Ok((baseline_sr, outcomes))
}
