use std::collections::BTreeSet;

use serde::Serialize;

use super::{ObservationSet, RankError, RankedList, ServiceId};

/// Consistent and variant pair counts between two rankings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PairCounts {
    pub consistent: u64,
    pub variant: u64,
}

impl PairCounts {
    pub fn total(&self) -> u64 {
        self.consistent + self.variant
    }
}

/// Pair-agreement score between two consumers over their common services.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrespondenceValue {
    /// Number of services both consumers observed.
    pub n: usize,
    pub consistent: u64,
    pub variant: u64,
    /// `(consistent - variant) / (n(n-1)/2)`, or 0 when `n < 2`.
    pub cv: f64,
}

/// Orders the universe by ascending response time (fastest first).
///
/// Ties go to the smaller `ServiceId`. Universe members without a sample
/// follow every sampled one, in `ServiceId` order. Samples outside the
/// universe are ignored.
pub fn rank_from_observations(obs: &ObservationSet, universe: &BTreeSet<ServiceId>) -> Result<RankedList, RankError> {
    if universe.is_empty() {
        return Err(RankError::EmptyUniverse);
    }
    let mut sampled: Vec<(&ServiceId, f64)> = Vec::with_capacity(universe.len());
    let mut unsampled: Vec<&ServiceId> = Vec::new();
    for service in universe {
        match obs.response_time(service) {
            Some(t) => sampled.push((service, t)),
            None => unsampled.push(service),
        }
    }
    // universe iteration is already in ServiceId order, so a stable sort keeps the tie rule
    sampled.sort_by(|a, b| a.1.total_cmp(&b.1));
    let ordering = sampled.into_iter().map(|(s, _)| s).chain(unsampled).cloned().collect();
    RankedList::from_ordering(ordering)
}

/// Counts the unordered pairs of `common` on which `r1` and `r2` agree
/// (consistent) and disagree (variant).
///
/// Runs in `O(n log n)`: the variant count is the number of inversions in
/// `r2`'s positions when the services are listed in `r1` order.
pub fn count_pairs(r1: &RankedList, r2: &RankedList, common: &BTreeSet<ServiceId>) -> Result<PairCounts, RankError> {
    if common.len() < 2 {
        return Err(RankError::InsufficientOverlap { common: common.len() });
    }
    let mut positions = Vec::with_capacity(common.len());
    for service in common {
        let p1 = r1.rank_of(service).ok_or_else(|| RankError::ServiceNotRanked(service.clone()))?;
        let p2 = r2.rank_of(service).ok_or_else(|| RankError::ServiceNotRanked(service.clone()))?;
        positions.push((p1, p2));
    }
    positions.sort_unstable_by_key(|&(p1, _)| p1);
    let mut seq: Vec<usize> = positions.into_iter().map(|(_, p2)| p2).collect();
    let variant = count_inversions(&mut seq);
    let n = common.len() as u64;
    let total = n * (n - 1) / 2;
    Ok(PairCounts { consistent: total - variant, variant })
}

fn count_inversions(seq: &mut [usize]) -> u64 {
    let mut scratch = seq.to_vec();
    sort_counting(seq, &mut scratch)
}

fn sort_counting(seq: &mut [usize], scratch: &mut [usize]) -> u64 {
    let len = seq.len();
    if len < 2 {
        return 0;
    }
    let mid = len / 2;
    let mut inversions = {
        let (left, right) = seq.split_at_mut(mid);
        let (sl, sr) = scratch.split_at_mut(mid);
        sort_counting(left, sl) + sort_counting(right, sr)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < len {
        if seq[i] <= seq[j] {
            scratch[k] = seq[i];
            i += 1;
        } else {
            scratch[k] = seq[j];
            inversions += (mid - i) as u64;
            j += 1;
        }
        k += 1;
    }
    scratch[k..k + mid - i].copy_from_slice(&seq[i..mid]);
    k += mid - i;
    scratch[k..k + len - j].copy_from_slice(&seq[j..len]);
    seq.copy_from_slice(&scratch[..len]);
    inversions
}

/// Correspondence value between two consumers over the services both observed.
///
/// Each side orders the common services the way [`rank_from_observations`]
/// would, so equal response times fall back to `ServiceId` order.
pub fn correspondence_value(x: &ObservationSet, y: &ObservationSet) -> CorrespondenceValue {
    // (x time, y time) in ServiceId order
    let common: Vec<(f64, f64)> =
        x.samples().iter().filter_map(|(s, &tx)| y.response_time(s).map(|ty| (tx, ty))).collect();
    let n = common.len();
    if n < 2 {
        return CorrespondenceValue { n, consistent: 0, variant: 0, cv: 0.0 };
    }
    let mut by_y: Vec<usize> = (0..n).collect();
    by_y.sort_by(|&a, &b| common[a].1.total_cmp(&common[b].1));
    let mut y_pos = vec![0; n];
    for (pos, &i) in by_y.iter().enumerate() {
        y_pos[i] = pos;
    }
    let mut by_x: Vec<usize> = (0..n).collect();
    by_x.sort_by(|&a, &b| common[a].0.total_cmp(&common[b].0));
    let mut seq: Vec<usize> = by_x.into_iter().map(|i| y_pos[i]).collect();

    let variant = count_inversions(&mut seq);
    let total = (n * (n - 1) / 2) as u64;
    let consistent = total - variant;
    CorrespondenceValue { n, consistent, variant, cv: (consistent as f64 - variant as f64) / total as f64 }
}
