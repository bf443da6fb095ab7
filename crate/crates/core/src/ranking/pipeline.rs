use std::collections::{BTreeMap, BTreeSet};

use super::correspondence::{correspondence_value, rank_from_observations};
use super::preference::{assemble_ranking, preference_matrix, priority_values, PriorityVector, QualityScore};
use super::{ConsumerId, ObservationSet, RankError, RankedList, ServiceId};

/// Inputs for one prediction: the active consumer, past consumers, and the
/// services the active consumer has already used.
#[derive(Debug, Clone)]
pub struct RankingContext {
    active: ObservationSet,
    history: Vec<ObservationSet>,
    implicit: BTreeSet<ServiceId>,
}

impl RankingContext {
    /// Fails if an implicit service was never observed by the active
    /// consumer, or if a consumer id repeats.
    pub fn new(
        active: ObservationSet,
        history: Vec<ObservationSet>,
        implicit: BTreeSet<ServiceId>,
    ) -> Result<Self, RankError> {
        if let Some(missing) = implicit.iter().find(|s| !active.contains(s)) {
            return Err(RankError::ImplicitNotObserved(missing.clone()));
        }
        let mut seen = BTreeSet::from([active.consumer()]);
        for h in &history {
            if !seen.insert(h.consumer()) {
                return Err(RankError::DuplicateConsumer(h.consumer().clone()));
            }
        }
        Ok(Self { active, history, implicit })
    }

    pub fn active(&self) -> &ObservationSet {
        &self.active
    }

    pub fn history(&self) -> &[ObservationSet] {
        &self.history
    }

    pub fn implicit(&self) -> &BTreeSet<ServiceId> {
        &self.implicit
    }
}

/// Historical consumers with a strictly positive correspondence value.
pub fn select_correspondent_nodes(ctx: &RankingContext) -> BTreeSet<ConsumerId> {
    ctx.history
        .iter()
        .filter(|h| correspondence_value(&ctx.active, h).cv > 0.0)
        .map(|h| h.consumer().clone())
        .collect()
}

/// Averages inverted-position scores over the active consumer and the given
/// correspondents.
///
/// Each source ranks only its own samples; the service at position `p` of
/// `n` scores `n - p + 1`. Services nobody observed are absent.
pub fn quality_scores(ctx: &RankingContext, correspondents: &BTreeSet<ConsumerId>) -> BTreeMap<ServiceId, QualityScore> {
    let sources = std::iter::once(&ctx.active).chain(ctx.history.iter().filter(|h| correspondents.contains(h.consumer())));
    let mut sums: BTreeMap<ServiceId, (f64, u32)> = BTreeMap::new();
    for source in sources {
        if source.is_empty() {
            continue;
        }
        let ranking = rank_from_observations(source, &source.services()).expect("non-empty sample set");
        let n = ranking.len();
        for (idx, service) in ranking.iter().enumerate() {
            let entry = sums.entry(service.clone()).or_insert((0.0, 0));
            entry.0 += (n - idx) as f64;
            entry.1 += 1;
        }
    }
    sums.into_iter()
        .map(|(service, (sum, count))| {
            let score = QualityScore::new(service.clone(), sum / f64::from(count));
            (service, score)
        })
        .collect()
}

/// Predicted ranking plus the intermediates worth reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub ranking: RankedList,
    /// Priority values of the scored services; appended unscored services have none.
    pub priorities: PriorityVector,
    pub correspondents: BTreeSet<ConsumerId>,
}

/// Runs the full pipeline over `universe`.
///
/// Only universe members are ranked. Universe members that received no
/// score follow every scored service, in `ServiceId` order.
pub fn predict(ctx: &RankingContext, universe: &BTreeSet<ServiceId>) -> Result<Prediction, RankError> {
    if universe.is_empty() {
        return Err(RankError::EmptyUniverse);
    }
    let correspondents = select_correspondent_nodes(ctx);
    let mut scores = quality_scores(ctx, &correspondents);
    scores.retain(|s, _| universe.contains(s));

    let (mut ordering, priorities) = if scores.is_empty() {
        (Vec::new(), PriorityVector::default())
    } else {
        let pv = priority_values(&preference_matrix(&scores)?);
        (assemble_ranking(&pv, &ctx.implicit)?.into_ordering(), pv)
    };
    ordering.extend(universe.iter().filter(|s| !scores.contains_key(*s)).cloned());
    Ok(Prediction { ranking: RankedList::from_ordering(ordering)?, priorities, correspondents })
}

pub fn predict_ranking(ctx: &RankingContext, universe: &BTreeSet<ServiceId>) -> Result<RankedList, RankError> {
    predict(ctx, universe).map(|p| p.ranking)
}
