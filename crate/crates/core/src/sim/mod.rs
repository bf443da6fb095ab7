//! Discrete-event simulation of sub-clouds running jobs under automatic
//! checkpointing.
//!
//! Time is integer milliseconds. Every job checkpoints each time its
//! progress crosses a multiple of `checkpoint_interval`, except at
//! completion. A failure rolls every job running on the failed sub-cloud
//! back to its latest checkpoint. Whenever a checkpoint is taken the
//! provider evaluates the sub-cloud loads and, if the source is above the
//! migration threshold, moves the job (with its checkpoint) to the
//! least-loaded sub-cloud that stays at or below the threshold.
//!
//! Scheduling is non-preemptive and FIFO per sub-cloud, ordered by arrival
//! time, then service id, then job id. The event loop uses no randomness;
//! `seed` is carried in the config for the synthetic generators only.

mod engine;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ids::{JobId, SubCloudId};
use crate::ranking::{ConsumerId, ObservationSet, ServiceId};

pub use engine::{run, Checkpoint, Job, JobState, Rollback, SimState, SubCloud};

/// Simulated time in milliseconds.
pub type Millis = u64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("job {job} demands {demand} units, more than any sub-cloud offers")]
    UnschedulableJob { job: JobId, demand: u32 },
    #[error("unknown sub-cloud {0}")]
    UnknownSubCloud(SubCloudId),
    #[error("unknown job {0}")]
    UnknownJob(JobId),
    #[error("job {0} is not running")]
    NotRunning(JobId),
    #[error("sub-cloud {subcloud} has {free} free units, job needs {demand}")]
    CapacityExceeded { subcloud: SubCloudId, demand: u32, free: u32 },
    #[error("resource demand must be positive")]
    InvalidDemand,
    #[error("simulator invariant violated: {0}")]
    InvariantViolation(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubCloudSpec {
    pub id: SubCloudId,
    pub capacity: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobSpec {
    pub id: JobId,
    pub consumer: ConsumerId,
    pub service: ServiceId,
    pub arrival_time: Millis,
    pub total_work: Millis,
    pub demand: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureSpec {
    pub subcloud: SubCloudId,
    pub time: Millis,
}

/// A complete simulation scenario. Serialized as JSON with these field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default)]
    pub seed: u64,
    pub checkpoint_interval: Millis,
    #[serde(default)]
    pub checkpoint_overhead: Millis,
    pub subclouds: Vec<SubCloudSpec>,
    pub jobs: Vec<JobSpec>,
    #[serde(default)]
    pub failures: Vec<FailureSpec>,
    /// Load fraction above which a checkpointing job is moved elsewhere.
    /// 1.0 disables migration.
    #[serde(default = "no_migration")]
    pub migration_policy_threshold: f64,
}

fn no_migration() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Arrive,
    Start,
    Checkpoint,
    Failure,
    Rollback,
    Migrate,
    Complete,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventDetail {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub job: Option<JobId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subcloud: Option<SubCloudId>,
    /// Destination of a migration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<SubCloudId>,
    /// Job progress after the event.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub progress: Option<Millis>,
    /// Work discarded by a rollback or migration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lost: Option<Millis>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub t: Millis,
    pub kind: EventKind,
    pub detail: EventDetail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceObservation {
    pub consumer: ConsumerId,
    pub service: ServiceId,
    pub response_time_ms: Millis,
}

/// Event log of one run. Events are in processing order, which is
/// `(time, sequence number)` order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimTrace {
    pub events: Vec<TraceEvent>,
    pub observations: Vec<TraceObservation>,
    pub migration_counts: BTreeMap<JobId, u32>,
}

/// Groups trace observations by consumer, averaging repeated runs of the
/// same service.
pub fn observations_from_trace(trace: &SimTrace) -> Vec<ObservationSet> {
    let mut grouped: BTreeMap<&ConsumerId, BTreeMap<&ServiceId, (u64, u32)>> = BTreeMap::new();
    for o in &trace.observations {
        let slot = grouped.entry(&o.consumer).or_default().entry(&o.service).or_insert((0, 0));
        slot.0 += o.response_time_ms;
        slot.1 += 1;
    }
    grouped
        .into_iter()
        .map(|(consumer, services)| {
            let samples = services.into_iter().map(|(s, (sum, n))| (s.clone(), sum as f64 / f64::from(n)));
            // completed jobs have positive response times, so samples always validate
            ObservationSet::with_samples(consumer.clone(), samples).expect("positive response times")
        })
        .collect()
}
