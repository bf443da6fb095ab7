//! Service rank prediction from response-time observations.
//!
//! The pipeline runs in five stages:
//!
//! 1. [`select_correspondent_nodes`] keeps the historical consumers whose
//!    correspondence value (a Kendall-style pair-agreement score) against
//!    the active consumer is strictly positive.
//! 2. [`quality_scores`] turns each contributing consumer's ordering into
//!    inverted-position scores and averages them per service.
//! 3. [`preference_matrix`] holds the pairwise score differences.
//! 4. [`priority_values`] sums each row of the matrix.
//! 5. [`assemble_ranking`] sorts by descending priority, letting services the
//!    active consumer already used win ties.
//!
//! [`predict_ranking`] composes all of them.

mod correspondence;
mod pipeline;
mod preference;

use std::collections::{BTreeMap, BTreeSet, HashMap};

pub use crate::ids::{ConsumerId, ServiceId};

pub use correspondence::{correspondence_value, count_pairs, rank_from_observations, CorrespondenceValue, PairCounts};
pub use pipeline::{predict, predict_ranking, quality_scores, select_correspondent_nodes, Prediction, RankingContext};
pub use preference::{
    assemble_ranking, preference_matrix, prefer_value, priority_values, PreferenceMatrix, PriorityVector, QualityScore,
};

/// Absolute tolerance for every real-valued equality test in the ranker.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RankError {
    #[error("the service universe is empty")]
    EmptyUniverse,
    #[error("need at least 2 common services to count pairs, got {common}")]
    InsufficientOverlap { common: usize },
    #[error("no services to rank")]
    NoServices,
    #[error("identifiers must be non-empty")]
    EmptyId,
    #[error("response time for service {service} must be positive and finite, got {value}")]
    InvalidResponseTime { service: ServiceId, value: f64 },
    #[error("consumer {consumer} already has a sample for service {service}")]
    DuplicateSample { consumer: ConsumerId, service: ServiceId },
    #[error("service {0} appears more than once in the ordering")]
    DuplicateService(ServiceId),
    #[error("service {0} is not part of the ranked list")]
    ServiceNotRanked(ServiceId),
    #[error("implicit service {0} was never observed by the active consumer")]
    ImplicitNotObserved(ServiceId),
    #[error("consumer {0} appears more than once in the ranking context")]
    DuplicateConsumer(ConsumerId),
    #[error("quality score for service {0} is not finite")]
    NonFiniteScore(ServiceId),
}

/// One consumer's observed response times, at most one per service.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    consumer: ConsumerId,
    samples: BTreeMap<ServiceId, f64>,
}

impl ObservationSet {
    pub fn new(consumer: ConsumerId) -> Self {
        Self { consumer, samples: BTreeMap::new() }
    }

    pub fn with_samples<I>(consumer: ConsumerId, samples: I) -> Result<Self, RankError>
    where
        I: IntoIterator<Item = (ServiceId, f64)>,
    {
        let mut set = Self::new(consumer);
        for (service, response_time) in samples {
            set.insert(service, response_time)?;
        }
        Ok(set)
    }

    /// Records a sample. Response times must be finite and strictly positive.
    pub fn insert(&mut self, service: ServiceId, response_time_ms: f64) -> Result<(), RankError> {
        if !(response_time_ms.is_finite() && response_time_ms > 0.0) {
            return Err(RankError::InvalidResponseTime { service, value: response_time_ms });
        }
        if self.samples.contains_key(&service) {
            return Err(RankError::DuplicateSample { consumer: self.consumer.clone(), service });
        }
        self.samples.insert(service, response_time_ms);
        Ok(())
    }

    pub fn remove(&mut self, service: &ServiceId) -> Option<f64> {
        self.samples.remove(service)
    }

    pub fn consumer(&self) -> &ConsumerId {
        &self.consumer
    }

    pub fn samples(&self) -> &BTreeMap<ServiceId, f64> {
        &self.samples
    }

    pub fn response_time(&self, service: &ServiceId) -> Option<f64> {
        self.samples.get(service).copied()
    }

    pub fn contains(&self, service: &ServiceId) -> bool {
        self.samples.contains_key(service)
    }

    /// The set of sampled services, in `ServiceId` order.
    pub fn services(&self) -> BTreeSet<ServiceId> {
        self.samples.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// A bijective assignment of services to positions `1..=n`, rank 1 first.
#[derive(Debug, Clone)]
pub struct RankedList {
    ordering: Vec<ServiceId>,
    rank_of: HashMap<ServiceId, usize>,
}

impl RankedList {
    pub fn from_ordering(ordering: Vec<ServiceId>) -> Result<Self, RankError> {
        let mut rank_of = HashMap::with_capacity(ordering.len());
        for (idx, service) in ordering.iter().enumerate() {
            if rank_of.insert(service.clone(), idx + 1).is_some() {
                return Err(RankError::DuplicateService(service.clone()));
            }
        }
        Ok(Self { ordering, rank_of })
    }

    pub fn ordering(&self) -> &[ServiceId] {
        &self.ordering
    }

    /// 1-based position of `service`, if it is ranked.
    pub fn rank_of(&self, service: &ServiceId) -> Option<usize> {
        self.rank_of.get(service).copied()
    }

    pub fn contains(&self, service: &ServiceId) -> bool {
        self.rank_of.contains_key(service)
    }

    pub fn services(&self) -> BTreeSet<ServiceId> {
        self.ordering.iter().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.ordering.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ordering.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ServiceId> {
        self.ordering.iter()
    }

    pub fn into_ordering(self) -> Vec<ServiceId> {
        self.ordering
    }
}

impl PartialEq for RankedList {
    fn eq(&self, other: &Self) -> bool {
        self.ordering == other.ordering
    }
}

impl Eq for RankedList {}

impl<'a> IntoIterator for &'a RankedList {
    type Item = &'a ServiceId;
    type IntoIter = std::slice::Iter<'a, ServiceId>;

    fn into_iter(self) -> Self::IntoIter {
        self.ordering.iter()
    }
}
