use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use super::{
    EventDetail, EventKind, JobSpec, Millis, SimConfig, SimError, SimTrace, TraceEvent, TraceObservation,
};
use crate::ids::{JobId, SubCloudId};

/// A capacity pool. `allocated <= capacity` holds at every event boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct SubCloud {
    id: SubCloudId,
    capacity: u32,
    allocated: u32,
    run_queue: Vec<JobId>,
    running: Vec<JobId>,
}

impl SubCloud {
    pub fn new(id: SubCloudId, capacity: u32) -> Self {
        Self { id, capacity, allocated: 0, run_queue: Vec::new(), running: Vec::new() }
    }

    pub fn id(&self) -> &SubCloudId {
        &self.id
    }

    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    pub fn allocated(&self) -> u32 {
        self.allocated
    }

    pub fn free(&self) -> u32 {
        self.capacity - self.allocated
    }

    /// Jobs waiting for capacity, head first.
    pub fn run_queue(&self) -> &[JobId] {
        &self.run_queue
    }

    pub fn running(&self) -> &[JobId] {
        &self.running
    }

    pub fn load(&self) -> f64 {
        f64::from(self.allocated) / f64::from(self.capacity)
    }

    /// Reserves `demand` units if they fit. Returns `false`, leaving the
    /// allocation untouched, when they do not.
    pub fn allocate(&mut self, demand: u32) -> Result<bool, SimError> {
        if demand == 0 {
            return Err(SimError::InvalidDemand);
        }
        if demand > self.free() {
            return Ok(false);
        }
        self.allocated += demand;
        Ok(true)
    }

    fn release(&mut self, demand: u32) {
        self.allocated -= demand;
    }

    /// Compares loads exactly, without going through floating point.
    fn cmp_load(&self, other: &SubCloud) -> Ordering {
        (u64::from(self.allocated) * u64::from(other.capacity)).cmp(&(u64::from(other.allocated) * u64::from(self.capacity)))
    }
}

/// Point-in-time copy of a job's progress.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Checkpoint {
    pub job: JobId,
    pub taken_at: Millis,
    pub progress_snapshot: Millis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JobState {
    /// Not yet arrived.
    Pending,
    Queued,
    /// Executing since `resume_at` (later than the dispatch time while a
    /// checkpoint write is still in progress), starting from `resumed_progress`.
    Running { resume_at: Millis, resumed_progress: Millis },
    Done { completed_at: Millis },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    spec: JobSpec,
    progress: Millis,
    migrations: u32,
    state: JobState,
    checkpoint: Option<Checkpoint>,
    location: Option<usize>,
    pending_overhead: Millis,
    generation: u64,
}

impl Job {
    fn new(spec: JobSpec) -> Self {
        Self {
            spec,
            progress: 0,
            migrations: 0,
            state: JobState::Pending,
            checkpoint: None,
            location: None,
            pending_overhead: 0,
            generation: 0,
        }
    }

    pub fn id(&self) -> &JobId {
        &self.spec.id
    }

    pub fn spec(&self) -> &JobSpec {
        &self.spec
    }

    /// Completed work as of the last event that touched this job.
    pub fn progress(&self) -> Millis {
        self.progress
    }

    pub fn migrations(&self) -> u32 {
        self.migrations
    }

    pub fn state(&self) -> JobState {
        self.state
    }

    /// The latest checkpoint; a newer one always replaces the older.
    pub fn checkpoint(&self) -> Option<&Checkpoint> {
        self.checkpoint.as_ref()
    }

    fn progress_at(&self, now: Millis) -> Millis {
        match self.state {
            JobState::Running { resume_at, resumed_progress } => {
                (resumed_progress + now.saturating_sub(resume_at)).min(self.spec.total_work)
            }
            _ => self.progress,
        }
    }

    fn rollback_target(&self) -> Millis {
        self.checkpoint.as_ref().map_or(0, |c| c.progress_snapshot)
    }

    fn queue_key(&self) -> (Millis, &str, &str) {
        (self.spec.arrival_time, self.spec.service.as_str(), self.spec.id.as_str())
    }
}

/// Progress a job lost to a failure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rollback {
    pub job: JobId,
    pub progress_at_failure: Millis,
    pub restored_progress: Millis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Action {
    Complete { job: usize, generation: u64 },
    CheckpointDue { job: usize, generation: u64 },
    Failure { subcloud: usize },
    Arrival { job: usize },
}

impl Action {
    /// Same-instant order: finishing work and checkpoints land before a
    /// failure can discard them.
    fn class(&self) -> u8 {
        match self {
            Action::Complete { .. } => 0,
            Action::CheckpointDue { .. } => 1,
            Action::Failure { .. } => 2,
            Action::Arrival { .. } => 3,
        }
    }
}

#[derive(Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Scheduled {
    time: Millis,
    class: u8,
    seq: u64,
    action: Action,
}

/// Mutable simulator state. [`run`] drives it to quiescence; the methods
/// below expose the individual operations at the current clock.
#[derive(Debug)]
pub struct SimState {
    interval: Millis,
    overhead: Millis,
    threshold: f64,
    now: Millis,
    subclouds: Vec<SubCloud>,
    subcloud_index: HashMap<SubCloudId, usize>,
    jobs: Vec<Job>,
    job_index: HashMap<JobId, usize>,
    agenda: BinaryHeap<Reverse<Scheduled>>,
    seq: u64,
    unfinished: usize,
    events: Vec<TraceEvent>,
    observations: Vec<TraceObservation>,
}

/// Runs `config` until every job has completed.
pub fn run(config: &SimConfig) -> Result<SimTrace, SimError> {
    let mut state = SimState::new(config)?;
    while !state.is_quiescent() {
        if !state.step()? {
            return Err(SimError::InvariantViolation("agenda drained with unfinished jobs".into()));
        }
    }
    Ok(state.into_trace())
}

impl SimState {
    pub fn new(config: &SimConfig) -> Result<Self, SimError> {
        validate(config)?;
        let mut subclouds: Vec<SubCloud> = config.subclouds.iter().map(|s| SubCloud::new(s.id.clone(), s.capacity)).collect();
        subclouds.sort_by(|a, b| a.id.cmp(&b.id));
        let subcloud_index = subclouds.iter().enumerate().map(|(i, s)| (s.id.clone(), i)).collect();
        let jobs: Vec<Job> = config.jobs.iter().cloned().map(Job::new).collect();
        let job_index = jobs.iter().enumerate().map(|(i, j)| (j.spec.id.clone(), i)).collect();

        let mut state = Self {
            interval: config.checkpoint_interval,
            overhead: config.checkpoint_overhead,
            threshold: config.migration_policy_threshold,
            now: 0,
            subclouds,
            subcloud_index,
            unfinished: jobs.len(),
            jobs,
            job_index,
            agenda: BinaryHeap::new(),
            seq: 0,
            events: Vec::new(),
            observations: Vec::new(),
        };
        for job in 0..state.jobs.len() {
            state.schedule(state.jobs[job].spec.arrival_time, Action::Arrival { job });
        }
        for f in &config.failures {
            let subcloud = state.subcloud_index[&f.subcloud];
            state.schedule(f.time, Action::Failure { subcloud });
        }
        Ok(state)
    }

    pub fn now(&self) -> Millis {
        self.now
    }

    pub fn is_quiescent(&self) -> bool {
        self.unfinished == 0
    }

    /// Current state of `job`, with progress brought up to the clock.
    pub fn job(&self, job: &JobId) -> Option<Job> {
        let j = &self.jobs[*self.job_index.get(job)?];
        Some(Job { progress: j.progress_at(self.now), ..j.clone() })
    }

    /// Sub-cloud currently holding `job`, if it has arrived.
    pub fn location(&self, job: &JobId) -> Option<&SubCloudId> {
        let j = &self.jobs[*self.job_index.get(job)?];
        j.location.map(|i| &self.subclouds[i].id)
    }

    pub fn subcloud(&self, id: &SubCloudId) -> Option<&SubCloud> {
        self.subcloud_index.get(id).map(|&i| &self.subclouds[i])
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    /// Load fraction `allocated / capacity` of every sub-cloud.
    pub fn evaluate_load(&self) -> BTreeMap<SubCloudId, f64> {
        self.subclouds.iter().map(|s| (s.id.clone(), s.load())).collect()
    }

    /// Processes the next scheduled event. Returns `false` when nothing is left.
    pub fn step(&mut self) -> Result<bool, SimError> {
        let Some(Reverse(next)) = self.agenda.pop() else {
            return Ok(false);
        };
        self.now = next.time;
        match next.action {
            Action::Arrival { job } => self.arrive(job)?,
            Action::Failure { subcloud } => {
                self.fail(subcloud)?;
            }
            Action::CheckpointDue { job, generation } if self.jobs[job].generation == generation => {
                self.checkpoint(job)?;
                self.maybe_migrate(job)?;
            }
            Action::Complete { job, generation } if self.jobs[job].generation == generation => self.complete(job)?,
            // superseded by a rollback, migration or manual checkpoint
            Action::CheckpointDue { .. } | Action::Complete { .. } => {}
        }
        self.check_invariants()?;
        Ok(true)
    }

    /// Processes every event scheduled at or before `t`, then sets the clock to `t`.
    pub fn run_until(&mut self, t: Millis) -> Result<(), SimError> {
        while self.agenda.peek().is_some_and(|Reverse(s)| s.time <= t) {
            self.step()?;
        }
        self.now = self.now.max(t);
        Ok(())
    }

    /// Snapshots a running job's progress now, replacing its previous
    /// checkpoint. The job spends `checkpoint_overhead` more wall time.
    pub fn take_checkpoint(&mut self, job: &JobId) -> Result<Checkpoint, SimError> {
        let idx = self.job_idx(job)?;
        self.checkpoint(idx)
    }

    /// Fails `subcloud` at time `at` (events up to `at` are processed first).
    /// Every job running there rolls back to its latest checkpoint and
    /// re-enters the queue.
    pub fn inject_failure(&mut self, subcloud: &SubCloudId, at: Millis) -> Result<Vec<Rollback>, SimError> {
        let idx = *self.subcloud_index.get(subcloud).ok_or_else(|| SimError::UnknownSubCloud(subcloud.clone()))?;
        if at < self.now {
            return Err(SimError::InvalidConfig(format!("failure at {at} ms is before the clock ({} ms)", self.now)));
        }
        self.run_until(at)?;
        let rollbacks = self.fail(idx)?;
        self.check_invariants()?;
        Ok(rollbacks)
    }

    /// Moves `job` from `from` to `to`, resuming from its latest checkpoint.
    /// Leaves the state untouched if `to` lacks capacity.
    pub fn migrate(&mut self, job: &JobId, from: &SubCloudId, to: &SubCloudId) -> Result<(), SimError> {
        let idx = self.job_idx(job)?;
        let src = *self.subcloud_index.get(from).ok_or_else(|| SimError::UnknownSubCloud(from.clone()))?;
        let dst = *self.subcloud_index.get(to).ok_or_else(|| SimError::UnknownSubCloud(to.clone()))?;
        if self.jobs[idx].location != Some(src) || matches!(self.jobs[idx].state, JobState::Done { .. }) {
            return Err(SimError::InvalidConfig(format!("job {job} is not active on sub-cloud {from}")));
        }
        if src == dst {
            return Err(SimError::InvalidConfig(format!("job {job} is already on sub-cloud {to}")));
        }
        self.move_job(idx, src, dst)?;
        self.check_invariants()
    }

    pub fn into_trace(self) -> SimTrace {
        SimTrace {
            migration_counts: self.jobs.iter().map(|j| (j.spec.id.clone(), j.migrations)).collect(),
            events: self.events,
            observations: self.observations,
        }
    }

    fn job_idx(&self, job: &JobId) -> Result<usize, SimError> {
        self.job_index.get(job).copied().ok_or_else(|| SimError::UnknownJob(job.clone()))
    }

    fn schedule(&mut self, time: Millis, action: Action) {
        self.seq += 1;
        self.agenda.push(Reverse(Scheduled { time, class: action.class(), seq: self.seq, action }));
    }

    fn log(&mut self, kind: EventKind, detail: EventDetail) {
        self.events.push(TraceEvent { t: self.now, kind, detail });
    }

    fn detail(&self, job: usize) -> EventDetail {
        let j = &self.jobs[job];
        EventDetail {
            job: Some(j.spec.id.clone()),
            subcloud: j.location.map(|s| self.subclouds[s].id.clone()),
            progress: Some(j.progress),
            ..Default::default()
        }
    }

    fn sync(&mut self, job: usize) {
        let now = self.now;
        let j = &mut self.jobs[job];
        j.progress = j.progress_at(now);
    }

    fn arrive(&mut self, job: usize) -> Result<(), SimError> {
        let demand = self.jobs[job].spec.demand;
        let target = self
            .subclouds
            .iter()
            .enumerate()
            .filter(|(_, s)| s.capacity >= demand)
            .min_by(|(_, a), (_, b)| a.cmp_load(b).then_with(|| a.id.cmp(&b.id)))
            .map(|(i, _)| i)
            .ok_or_else(|| SimError::UnschedulableJob { job: self.jobs[job].spec.id.clone(), demand })?;
        let j = &mut self.jobs[job];
        j.state = JobState::Queued;
        j.location = Some(target);
        self.log(EventKind::Arrive, self.detail(job));
        self.enqueue(target, job);
        self.dispatch(target)
    }

    fn enqueue(&mut self, subcloud: usize, job: usize) {
        let key = self.jobs[job].queue_key();
        let pos = self.subclouds[subcloud]
            .run_queue
            .partition_point(|queued| self.jobs[self.job_index[queued]].queue_key() <= key);
        let id = self.jobs[job].spec.id.clone();
        self.subclouds[subcloud].run_queue.insert(pos, id);
    }

    /// Starts queued jobs in order while the head fits (non-preemptive FIFO).
    fn dispatch(&mut self, subcloud: usize) -> Result<(), SimError> {
        while let Some(head) = self.subclouds[subcloud].run_queue.first() {
            let job = self.job_index[head];
            if !self.subclouds[subcloud].allocate(self.jobs[job].spec.demand)? {
                break;
            }
            let sc = &mut self.subclouds[subcloud];
            let id = sc.run_queue.remove(0);
            sc.running.push(id);
            let now = self.now;
            let j = &mut self.jobs[job];
            j.state = JobState::Running { resume_at: now + j.pending_overhead, resumed_progress: j.progress };
            j.pending_overhead = 0;
            self.log(EventKind::Start, self.detail(job));
            self.schedule_next(job);
        }
        Ok(())
    }

    /// Schedules the running job's next checkpoint, or its completion when no
    /// checkpoint boundary remains before the end of its work.
    fn schedule_next(&mut self, job: usize) {
        let j = &mut self.jobs[job];
        let JobState::Running { resume_at, resumed_progress } = j.state else {
            return;
        };
        j.generation += 1;
        let generation = j.generation;
        let boundary = (resumed_progress / self.interval + 1) * self.interval;
        let total = j.spec.total_work;
        if boundary < total {
            self.schedule(resume_at + (boundary - resumed_progress), Action::CheckpointDue { job, generation });
        } else {
            self.schedule(resume_at + (total - resumed_progress), Action::Complete { job, generation });
        }
    }

    fn checkpoint(&mut self, job: usize) -> Result<Checkpoint, SimError> {
        let JobState::Running { resume_at, .. } = self.jobs[job].state else {
            return Err(SimError::NotRunning(self.jobs[job].spec.id.clone()));
        };
        self.sync(job);
        let now = self.now;
        let overhead = self.overhead;
        let j = &mut self.jobs[job];
        let cp = Checkpoint { job: j.spec.id.clone(), taken_at: now, progress_snapshot: j.progress };
        j.checkpoint = Some(cp.clone());
        j.state = JobState::Running { resume_at: resume_at.max(now) + overhead, resumed_progress: j.progress };
        self.log(EventKind::Checkpoint, self.detail(job));
        self.schedule_next(job);
        Ok(cp)
    }

    /// Load-balancing decision taken whenever a checkpoint is written.
    fn maybe_migrate(&mut self, job: usize) -> Result<(), SimError> {
        let Some(src) = self.jobs[job].location else {
            return Ok(());
        };
        if self.subclouds[src].load() <= self.threshold {
            return Ok(());
        }
        let demand = self.jobs[job].spec.demand;
        let threshold = self.threshold;
        let target = self
            .subclouds
            .iter()
            .enumerate()
            .filter(|&(i, s)| {
                i != src && s.free() >= demand && f64::from(s.allocated + demand) / f64::from(s.capacity) <= threshold
            })
            .min_by(|(_, a), (_, b)| a.cmp_load(b).then_with(|| a.id.cmp(&b.id)))
            .map(|(i, _)| i);
        match target {
            Some(dst) => self.move_job(job, src, dst),
            None => Ok(()),
        }
    }

    fn move_job(&mut self, job: usize, src: usize, dst: usize) -> Result<(), SimError> {
        let demand = self.jobs[job].spec.demand;
        if self.subclouds[dst].free() < demand {
            return Err(SimError::CapacityExceeded {
                subcloud: self.subclouds[dst].id.clone(),
                demand,
                free: self.subclouds[dst].free(),
            });
        }
        self.sync(job);
        let now = self.now;
        let id = self.jobs[job].spec.id.clone();
        let remaining_overhead = match self.jobs[job].state {
            JobState::Running { resume_at, .. } => {
                let sc = &mut self.subclouds[src];
                sc.release(demand);
                sc.running.retain(|r| r != &id);
                resume_at.saturating_sub(now)
            }
            _ => {
                self.subclouds[src].run_queue.retain(|r| r != &id);
                self.jobs[job].pending_overhead
            }
        };
        let j = &mut self.jobs[job];
        let restored = j.rollback_target();
        let lost = j.progress - restored;
        j.progress = restored;
        j.migrations += 1;
        j.generation += 1;
        j.pending_overhead = remaining_overhead;
        j.state = JobState::Queued;
        j.location = Some(dst);
        let detail = EventDetail {
            subcloud: Some(self.subclouds[src].id.clone()),
            to: Some(self.subclouds[dst].id.clone()),
            lost: Some(lost),
            ..self.detail(job)
        };
        self.log(EventKind::Migrate, detail);
        self.enqueue(dst, job);
        self.dispatch(dst)?;
        self.dispatch(src)
    }

    fn fail(&mut self, subcloud: usize) -> Result<Vec<Rollback>, SimError> {
        self.log(EventKind::Failure, EventDetail { subcloud: Some(self.subclouds[subcloud].id.clone()), ..Default::default() });
        let victims = std::mem::take(&mut self.subclouds[subcloud].running);
        let mut rollbacks = Vec::with_capacity(victims.len());
        for id in victims {
            let job = self.job_index[&id];
            self.sync(job);
            let j = &mut self.jobs[job];
            let at_failure = j.progress;
            let restored = j.rollback_target();
            j.progress = restored;
            j.generation += 1;
            j.pending_overhead = 0;
            j.state = JobState::Queued;
            let demand = j.spec.demand;
            self.subclouds[subcloud].release(demand);
            self.log(EventKind::Rollback, EventDetail { lost: Some(at_failure - restored), ..self.detail(job) });
            self.enqueue(subcloud, job);
            rollbacks.push(Rollback { job: id, progress_at_failure: at_failure, restored_progress: restored });
        }
        self.dispatch(subcloud)?;
        Ok(rollbacks)
    }

    fn complete(&mut self, job: usize) -> Result<(), SimError> {
        let now = self.now;
        let j = &mut self.jobs[job];
        let subcloud = j.location.ok_or_else(|| SimError::InvariantViolation(format!("job {} completed unplaced", j.spec.id)))?;
        j.progress = j.spec.total_work;
        j.state = JobState::Done { completed_at: now };
        self.unfinished -= 1;
        self.observations.push(TraceObservation {
            consumer: j.spec.consumer.clone(),
            service: j.spec.service.clone(),
            response_time_ms: now - j.spec.arrival_time,
        });
        let (id, demand) = (j.spec.id.clone(), j.spec.demand);
        let sc = &mut self.subclouds[subcloud];
        sc.release(demand);
        sc.running.retain(|r| r != &id);
        self.log(EventKind::Complete, self.detail(job));
        self.dispatch(subcloud)
    }

    fn check_invariants(&self) -> Result<(), SimError> {
        for sc in &self.subclouds {
            let in_use: u32 = sc.running.iter().map(|id| self.jobs[self.job_index[id]].spec.demand).sum();
            if sc.allocated > sc.capacity || in_use != sc.allocated {
                return Err(SimError::InvariantViolation(format!(
                    "sub-cloud {} at t={} has allocated {} (running demand {}) of capacity {}",
                    sc.id, self.now, sc.allocated, in_use, sc.capacity
                )));
            }
        }
        if let Some(j) = self.jobs.iter().find(|j| j.progress > j.spec.total_work) {
            return Err(SimError::InvariantViolation(format!("job {} progressed past its total work", j.spec.id)));
        }
        Ok(())
    }
}

fn validate(config: &SimConfig) -> Result<(), SimError> {
    let invalid = |msg: String| Err(SimError::InvalidConfig(msg));
    if config.checkpoint_interval == 0 {
        return invalid("checkpoint_interval must be positive".into());
    }
    if !(0.0..=1.0).contains(&config.migration_policy_threshold) {
        return invalid(format!("migration_policy_threshold {} is outside [0, 1]", config.migration_policy_threshold));
    }
    if config.subclouds.is_empty() {
        return invalid("at least one sub-cloud is required".into());
    }
    let mut subclouds = std::collections::BTreeSet::new();
    for s in &config.subclouds {
        if s.capacity == 0 {
            return invalid(format!("sub-cloud {} has zero capacity", s.id));
        }
        if !subclouds.insert(&s.id) {
            return invalid(format!("duplicate sub-cloud id {}", s.id));
        }
    }
    let max_capacity = config.subclouds.iter().map(|s| s.capacity).max().unwrap_or(0);
    let mut jobs = std::collections::BTreeSet::new();
    for j in &config.jobs {
        if !jobs.insert(&j.id) {
            return invalid(format!("duplicate job id {}", j.id));
        }
        if j.demand == 0 {
            return invalid(format!("job {} has zero demand", j.id));
        }
        if j.total_work == 0 {
            return invalid(format!("job {} has zero total_work", j.id));
        }
        if j.demand > max_capacity {
            return Err(SimError::UnschedulableJob { job: j.id.clone(), demand: j.demand });
        }
    }
    if let Some(f) = config.failures.iter().find(|f| !subclouds.contains(&f.subcloud)) {
        return Err(SimError::UnknownSubCloud(f.subcloud.clone()));
    }
    Ok(())
}
