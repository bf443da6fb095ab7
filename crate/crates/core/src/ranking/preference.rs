use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use super::{RankError, RankedList, ServiceId, TIE_TOLERANCE};

/// Aggregated quality of one service; larger is better.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualityScore {
    pub service: ServiceId,
    pub score: f64,
}

impl QualityScore {
    pub fn new(service: ServiceId, score: f64) -> Self {
        Self { service, score }
    }
}

/// Prefer value of `x` over `y`. Positive means `x` is the more reliable service.
pub fn prefer_value(x: &QualityScore, y: &QualityScore) -> f64 {
    x.score - y.score
}

/// Dense antisymmetric matrix of prefer values.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceMatrix {
    services: Vec<ServiceId>,
    index: HashMap<ServiceId, usize>,
    values: Vec<f64>,
}

impl PreferenceMatrix {
    pub fn services(&self) -> &[ServiceId] {
        &self.services
    }

    pub fn len(&self) -> usize {
        self.services.len()
    }

    pub fn is_empty(&self) -> bool {
        self.services.is_empty()
    }

    /// `p(x, y)`, or `None` when either service is absent.
    pub fn get(&self, x: &ServiceId, y: &ServiceId) -> Option<f64> {
        let (i, j) = (*self.index.get(x)?, *self.index.get(y)?);
        Some(self.values[i * self.len() + j])
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.len();
        &self.values[i * n..(i + 1) * n]
    }
}

pub fn preference_matrix(scores: &BTreeMap<ServiceId, QualityScore>) -> Result<PreferenceMatrix, RankError> {
    if scores.is_empty() {
        return Err(RankError::NoServices);
    }
    if let Some(bad) = scores.values().find(|s| !s.score.is_finite()) {
        return Err(RankError::NonFiniteScore(bad.service.clone()));
    }
    let entries: Vec<&QualityScore> = scores.values().collect();
    let n = entries.len();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                values[i * n + j] = prefer_value(entries[i], entries[j]);
            }
        }
    }
    let services: Vec<ServiceId> = scores.keys().cloned().collect();
    let index = services.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    Ok(PreferenceMatrix { services, index, values })
}

/// Per-service priority value: the row sum of the preference matrix.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
#[serde(transparent)]
pub struct PriorityVector {
    values: BTreeMap<ServiceId, f64>,
}

impl PriorityVector {
    pub fn get(&self, service: &ServiceId) -> Option<f64> {
        self.values.get(service).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ServiceId, f64)> {
        self.values.iter().map(|(s, v)| (s, *v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.values.values().sum()
    }
}

impl FromIterator<(ServiceId, f64)> for PriorityVector {
    fn from_iter<T: IntoIterator<Item = (ServiceId, f64)>>(iter: T) -> Self {
        Self { values: iter.into_iter().collect() }
    }
}

pub fn priority_values(m: &PreferenceMatrix) -> PriorityVector {
    m.services().iter().enumerate().map(|(i, s)| (s.clone(), m.row(i).iter().sum())).collect()
}

/// Orders services by descending priority value.
///
/// Values within [`TIE_TOLERANCE`] of the highest value in their group are
/// ties. Within a tie group implicit services come first, then `ServiceId`
/// order. Anchoring each group on its maximum keeps every adjacent pair
/// within tolerance of sorted order.
pub fn assemble_ranking(pv: &PriorityVector, implicit: &BTreeSet<ServiceId>) -> Result<RankedList, RankError> {
    if pv.is_empty() {
        return Err(RankError::NoServices);
    }
    let mut by_value: Vec<(&ServiceId, f64)> = pv.iter().collect();
    by_value.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let mut ordering = Vec::with_capacity(by_value.len());
    let mut start = 0;
    while start < by_value.len() {
        let anchor = by_value[start].1;
        let end = start + by_value[start..].iter().take_while(|(_, v)| *v >= anchor - TIE_TOLERANCE).count();
        let group = &mut by_value[start..end];
        group.sort_by(|a, b| implicit.contains(b.0).cmp(&implicit.contains(a.0)).then_with(|| a.0.cmp(b.0)));
        ordering.extend(group.iter().map(|(s, _)| (*s).clone()));
        start = end;
    }
    RankedList::from_ordering(ordering)
}
