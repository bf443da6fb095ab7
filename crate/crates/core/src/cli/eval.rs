use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataio::Dataset;
use crate::ranking::{count_pairs, predict, rank_from_observations, ConsumerId, RankError, RankingContext, ServiceId};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("holdout fraction must be in [0, 1), got {0}")]
    InvalidHoldout(f64),
    #[error("dataset too small to evaluate: {0}")]
    TooSmall(String),
    #[error(transparent)]
    Rank(#[from] RankError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Correspondence value between each evaluated consumer's prediction and its target.
    pub per_consumer: Vec<(ConsumerId, f64)>,
    pub mean_cv: f64,
}

/// Leave-information-out evaluation.
///
/// For every consumer, a `holdout` fraction of its own samples is hidden,
/// the remaining samples serve as the active consumer (and as implicit
/// services), and everyone else is history. The prediction over all
/// services is compared with the ground truth, or, without one, with the
/// consumer's own full-information ordering over the services it sampled.
pub fn evaluate(dataset: &Dataset, holdout: f64, seed: u64) -> Result<EvalReport, EvalError> {
    if !(0.0..1.0).contains(&holdout) {
        return Err(EvalError::InvalidHoldout(holdout));
    }
    let truth = dataset.ground_truth();
    if dataset.consumers().is_empty() {
        return Err(EvalError::TooSmall("no consumers".into()));
    }
    if truth.is_none() && dataset.consumers().len() < 2 {
        return Err(EvalError::TooSmall("needs a ground truth or at least 2 consumers".into()));
    }
    if dataset.services().len() < 2 {
        return Err(EvalError::TooSmall("needs at least 2 services".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_consumer = Vec::new();
    for (i, consumer) in dataset.consumers().iter().enumerate() {
        let mut hidden: Vec<ServiceId> = consumer.samples().keys().cloned().collect();
        hidden.shuffle(&mut rng);
        hidden.truncate((holdout * consumer.len() as f64).floor() as usize);
        let mut active = consumer.clone();
        for s in &hidden {
            active.remove(s);
        }
        let implicit = active.services();
        let history = dataset.consumers().iter().enumerate().filter(|(j, _)| *j != i).map(|(_, c)| c.clone()).collect();
        let ctx = RankingContext::new(active, history, implicit)?;
        let predicted = predict(&ctx, dataset.services())?.ranking;

        let cv = match truth {
            Some(t) => pair_cv(&predicted, t, dataset.services())?,
            None => {
                let own = consumer.services();
                if own.len() < 2 {
                    continue;
                }
                let target = rank_from_observations(consumer, &own)?;
                pair_cv(&predicted, &target, &own)?
            }
        };
        per_consumer.push((consumer.consumer().clone(), cv));
    }
    if per_consumer.is_empty() {
        return Err(EvalError::TooSmall("no consumer sampled at least 2 services".into()));
    }
    let mean_cv = per_consumer.iter().map(|(_, cv)| cv).sum::<f64>() / per_consumer.len() as f64;
    Ok(EvalReport { per_consumer, mean_cv })
}

fn pair_cv(
    a: &crate::ranking::RankedList,
    b: &crate::ranking::RankedList,
    common: &BTreeSet<ServiceId>,
) -> Result<f64, RankError> {
    let counts = count_pairs(a, b, common)?;
    Ok((counts.consistent as f64 - counts.variant as f64) / counts.total() as f64)
}
