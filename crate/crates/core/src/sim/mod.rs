//! Deterministic discrete-event simulation of a multi-DAG executor.
//!
//! Three executors share one event loop:
//!
//! * [`Policy::RatePriority`]: one global ready queue ordered by rate-monotonic
//!   rank, fully preemptive, `m` identical workers. When every worker is busy
//!   a newly eligible job preempts the lowest-ranked running job if it holds a
//!   strictly higher rank.
//! * [`Policy::FifoMulti`]: ready-time FIFO, non-preemptive, `m` workers.
//! * [`Policy::FifoSingle`]: the same with exactly one worker.
//!
//! A job candidate of a task is created at every period boundary. It is
//! released once the matching instance of every predecessor has completed:
//! instance `k` waits until instances `0..=k` of each predecessor are done.
//! The release time `r` is the instant both conditions hold and the absolute
//! deadline is `r + D`. A released job may only be dispatched while its DAG
//! has fewer than `max_active` jobs running; the cap applies to every policy.
//! Under rate priority a job blocked only by its own DAG's cap may instead
//! take the slot of a lower-ranked running job of that DAG.
//!
//! At a single timestamp completions are handled first, then period
//! boundaries and releases, then dispatch.

mod enforcement;
mod queue;
mod trace;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use enforcement::{verify_enforcement, CapViolation, EnforcementReport};
pub use queue::{QueueKey, ReadyQueue};
pub use trace::{
    read_events_jsonl, worst_case_response_from_trace, EventKind, JobRecord, SimTrace, TaskCounters, TraceEvent,
};

use crate::model::{
    hyperperiod, DagId, Duration, Instant, MaxActive, ModelError, PriorityMap, TaskId, ValidatedWorkload,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    RatePriority,
    FifoSingle,
    FifoMulti,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::RatePriority, Policy::FifoMulti, Policy::FifoSingle];

    pub fn name(self) -> &'static str {
        match self {
            Policy::RatePriority => "rate-priority",
            Policy::FifoSingle => "fifo-single",
            Policy::FifoMulti => "fifo-multi",
        }
    }

    pub fn parse(s: &str) -> Option<Policy> {
        Policy::ALL.into_iter().find(|p| p.name() == s)
    }

    pub fn is_preemptive(self) -> bool {
        self == Policy::RatePriority
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    /// `k` hyperperiods.
    Hyperperiods(u32),
    Fixed(Duration),
}

#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReleaseOffsets {
    #[default]
    Synchronous,
    PerTask(BTreeMap<TaskId, Duration>),
}

/// How tasks with predecessors are activated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuccessorRelease {
    /// Period elapsed AND predecessors done.
    #[default]
    Periodic,
    /// Predecessors done; the period of a non-source task is ignored.
    EventDriven,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub policy: Policy,
    pub workers: u32,
    pub horizon: Horizon,
    /// Upper limit for the computed horizon.
    pub max_horizon_us: Duration,
    pub context_switch_us: Duration,
    pub release_offsets: ReleaseOffsets,
    pub successor_release: SuccessorRelease,
    /// Rate priority only: a job whose DAG is at its cap preempts the
    /// lowest-ranked running job of the same DAG if it outranks it. Without
    /// this, a DAG's slots can be held by its own low-rate jobs while its
    /// high-rate jobs wait.
    #[serde(default = "default_true")]
    pub preempt_within_cap: bool,
}

fn default_true() -> bool {
    true
}

pub const DEFAULT_MAX_HORIZON_US: Duration = 10_000_000_000;

impl SimConfig {
    pub fn new(policy: Policy, workers: u32) -> Self {
        SimConfig {
            policy,
            workers: if policy == Policy::FifoSingle { 1 } else { workers },
            horizon: Horizon::Hyperperiods(1),
            max_horizon_us: DEFAULT_MAX_HORIZON_US,
            context_switch_us: 0,
            release_offsets: ReleaseOffsets::Synchronous,
            successor_release: SuccessorRelease::Periodic,
            preempt_within_cap: true,
        }
    }

    pub fn with_horizon(mut self, horizon: Horizon) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn effective_workers(&self) -> u32 {
        if self.policy == Policy::FifoSingle {
            1
        } else {
            self.workers
        }
    }

    pub fn resolve_horizon(&self, w: &ValidatedWorkload) -> Result<Duration, SimError> {
        let horizon = match self.horizon {
            Horizon::Fixed(h) => h,
            Horizon::Hyperperiods(k) => {
                let h = hyperperiod(w.workload(), self.max_horizon_us).map_err(|e| match e {
                    ModelError::OverflowRisk { cap } => SimError::HorizonOverflow { cap },
                    other => SimError::Config(other.to_string()),
                })?;
                h.checked_mul(k as u64).ok_or(SimError::HorizonOverflow { cap: self.max_horizon_us })?
            }
        };
        if horizon == 0 {
            return Err(SimError::Config("horizon must be positive".into()));
        }
        if horizon > self.max_horizon_us {
            return Err(SimError::HorizonOverflow { cap: self.max_horizon_us });
        }
        Ok(horizon)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("simulation horizon exceeds the cap of {cap} us")]
    HorizonOverflow { cap: Duration },
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("internal invariant violated: {0}")]
    InternalInvariantViolation(String),
    #[error("malformed trace: {0}")]
    MalformedTrace(String),
    #[error("no completed jobs for task {}", .0.0)]
    NoCompletedJobs(TaskId),
}

impl SimError {
    pub fn is_internal(&self) -> bool {
        matches!(self, SimError::InternalInvariantViolation(_))
    }
}

struct TaskState {
    id: TaskId,
    dag_id: DagId,
    dag: usize,
    rank: u32,
    wcet: Duration,
    period: Duration,
    deadline: Duration,
    offset: Duration,
    preds: Vec<usize>,
    /// Candidates created so far; `u32::MAX` for event-driven successors.
    arrived: u32,
    arrivals: Vec<Instant>,
    released: u32,
    /// Instances `0..completed_prefix` have all finished.
    completed_prefix: u32,
    completed_out_of_order: Vec<u32>,
}

struct JobState {
    task: usize,
    instance: u32,
    key: QueueKey,
    remaining: Duration,
    segment_start: Instant,
    in_deferral: bool,
}

struct Running {
    job: usize,
}

struct Engine<'a> {
    cfg: &'a SimConfig,
    horizon: Duration,
    caps: Vec<MaxActive>,
    tasks: Vec<TaskState>,
    jobs: Vec<JobState>,
    records: Vec<JobRecord>,
    counters: Vec<TaskCounters>,
    ready: ReadyQueue,
    workers: Vec<Option<Running>>,
    dag_running: Vec<usize>,
    arrivals: BinaryHeap<Reverse<(Instant, usize)>>,
    events: Vec<TraceEvent>,
    fifo_seq: u64,
}

fn invariant(msg: impl Into<String>) -> SimError {
    SimError::InternalInvariantViolation(msg.into())
}

/// Runs one executor over `[0, horizon)`. Jobs finishing exactly at the
/// horizon still count as complete.
pub fn simulate(w: &ValidatedWorkload, cfg: &SimConfig, pm: &PriorityMap) -> Result<SimTrace, SimError> {
    let workers = cfg.effective_workers();
    if workers == 0 {
        return Err(SimError::Config("at least one worker is required".into()));
    }
    let horizon = cfg.resolve_horizon(w)?;

    let mut index: BTreeMap<TaskId, usize> = BTreeMap::new();
    let mut tasks = Vec::with_capacity(w.task_count());
    for (d, dag) in w.dags().iter().enumerate() {
        for t in &dag.tasks {
            index.insert(t.id, tasks.len());
            let rank = pm.get(t.id).ok_or_else(|| SimError::Config(format!("task {} has no priority", t.id.0)))?;
            let offset = match &cfg.release_offsets {
                ReleaseOffsets::Synchronous => 0,
                ReleaseOffsets::PerTask(map) => map.get(&t.id).copied().unwrap_or(0),
            };
            tasks.push(TaskState {
                id: t.id,
                dag_id: dag.dag_id,
                dag: d,
                rank,
                wcet: t.wcet,
                period: t.period,
                deadline: t.deadline,
                offset,
                preds: Vec::new(),
                arrived: 0,
                arrivals: Vec::new(),
                released: 0,
                completed_prefix: 0,
                completed_out_of_order: Vec::new(),
            });
        }
    }
    for t in tasks.iter_mut() {
        t.preds = w.predecessors(t.id).iter().map(|p| index[p]).collect();
    }

    let mut arrivals = BinaryHeap::new();
    for (i, t) in tasks.iter_mut().enumerate() {
        if cfg.successor_release == SuccessorRelease::EventDriven && !t.preds.is_empty() {
            t.arrived = u32::MAX;
        } else if t.offset < horizon {
            arrivals.push(Reverse((t.offset, i)));
        }
    }

    let n_tasks = tasks.len();
    let mut engine = Engine {
        cfg,
        horizon,
        caps: w.dags().iter().map(|d| d.max_active).collect(),
        tasks,
        jobs: Vec::new(),
        records: Vec::new(),
        counters: vec![TaskCounters::default(); n_tasks],
        ready: ReadyQueue::new(),
        workers: (0..workers).map(|_| None).collect(),
        dag_running: vec![0; w.dags().len()],
        arrivals,
        events: Vec::new(),
        fifo_seq: 0,
    };
    engine.run()?;
    Ok(engine.finish(workers))
}

impl Engine<'_> {
    fn emit(&mut self, time: Instant, kind: EventKind, job: usize, worker: Option<usize>) {
        let j = &self.jobs[job];
        self.events.push(TraceEvent {
            timestamp_us: time,
            kind,
            task_id: self.tasks[j.task].id,
            instance: j.instance,
            worker: worker.map(|w| w as u32),
        });
    }

    fn next_completion(&self) -> Option<Instant> {
        self.workers.iter().flatten().map(|r| self.jobs[r.job].segment_start + self.jobs[r.job].remaining).min()
    }

    fn run(&mut self) -> Result<(), SimError> {
        loop {
            let next_arrival = self.arrivals.peek().map(|Reverse((t, _))| *t);
            let next = match (next_arrival, self.next_completion()) {
                (Some(a), Some(c)) => a.min(c),
                (Some(a), None) => a,
                (None, Some(c)) => c,
                (None, None) => break,
            };
            if next > self.horizon {
                break;
            }
            self.complete_at(next)?;
            if next < self.horizon {
                self.arrive_at(next);
                self.release_at(next);
                self.dispatch_at(next)?;
            }
        }
        Ok(())
    }

    fn complete_at(&mut self, now: Instant) -> Result<(), SimError> {
        for w in 0..self.workers.len() {
            let Some(r) = &self.workers[w] else { continue };
            let job = r.job;
            let end = self.jobs[job].segment_start + self.jobs[job].remaining;
            if end != now {
                continue;
            }
            self.workers[w] = None;
            let ran = now - self.jobs[job].segment_start;
            self.jobs[job].remaining = 0;
            let rec = &mut self.records[job];
            rec.dispatched_us += ran;
            rec.finish_us = Some(now);
            let missed = rec.missed();
            let task = self.jobs[job].task;
            let dag = self.tasks[task].dag;
            self.dag_running[dag] = self.dag_running[dag]
                .checked_sub(1)
                .ok_or_else(|| invariant(format!("DAG {dag} running count underflow at t={now}")))?;
            self.counters[task].executed += 1;
            self.emit(now, EventKind::Complete, job, Some(w));
            if missed {
                self.emit(now, EventKind::DeadlineMiss, job, Some(w));
            }
            self.mark_completed(task, self.jobs[job].instance);
        }
        Ok(())
    }

    fn mark_completed(&mut self, task: usize, instance: u32) {
        let t = &mut self.tasks[task];
        t.completed_out_of_order.push(instance);
        while let Some(pos) = t.completed_out_of_order.iter().position(|&i| i == t.completed_prefix) {
            t.completed_out_of_order.swap_remove(pos);
            t.completed_prefix += 1;
        }
    }

    fn arrive_at(&mut self, now: Instant) {
        while let Some(&Reverse((t, i))) = self.arrivals.peek() {
            if t != now {
                break;
            }
            self.arrivals.pop();
            let task = &mut self.tasks[i];
            task.arrived += 1;
            task.arrivals.push(now);
            let next = now + task.period;
            if next < self.horizon {
                self.arrivals.push(Reverse((next, i)));
            }
        }
    }

    fn gate_open(&self, task: usize, instance: u32) -> bool {
        self.tasks[task].preds.iter().all(|&p| self.tasks[p].completed_prefix > instance)
    }

    /// Admits every candidate whose period elapsed and whose predecessors
    /// finished, in DAG order then task order.
    fn release_at(&mut self, now: Instant) {
        for i in 0..self.tasks.len() {
            loop {
                let t = &self.tasks[i];
                let k = t.released;
                if k >= t.arrived || !self.gate_open(i, k) {
                    break;
                }
                self.release_job(i, k, now);
            }
        }
    }

    fn release_job(&mut self, task: usize, instance: u32, now: Instant) {
        let t = &mut self.tasks[task];
        t.released += 1;
        let arrival = t.arrivals.get(instance as usize).copied().unwrap_or(now);
        let job = self.jobs.len();
        let key = match self.cfg.policy {
            Policy::RatePriority => QueueKey::rate_priority(t.rank, now, t.id, instance, job),
            Policy::FifoSingle | Policy::FifoMulti => {
                self.fifo_seq += 1;
                QueueKey::fifo(now, self.fifo_seq, job)
            }
        };
        self.jobs.push(JobState { task, instance, key, remaining: t.wcet, segment_start: now, in_deferral: false });
        self.records.push(JobRecord {
            task_id: t.id,
            dag_id: t.dag_id,
            instance,
            arrival_us: arrival,
            release_us: now,
            deadline_us: now + t.deadline,
            relative_deadline_us: t.deadline,
            start_us: None,
            finish_us: None,
            dispatched_us: 0,
            overhead_us: 0,
            wcet_us: t.wcet,
            preemptions: 0,
            deferred_by_cap: false,
        });
        self.counters[task].released += 1;
        self.emit(now, EventKind::Release, job, None);
        self.ready.push(key);
        self.emit(now, EventKind::Ready, job, None);
    }

    fn lowest_running(&self) -> Option<(QueueKey, usize)> {
        self.workers.iter().enumerate().filter_map(|(w, r)| r.as_ref().map(|r| (self.jobs[r.job].key, w))).max()
    }

    fn lowest_running_in(&self, dag: usize) -> Option<(QueueKey, usize)> {
        self.workers
            .iter()
            .enumerate()
            .filter_map(|(w, r)| r.as_ref().map(|r| (r.job, w)))
            .filter(|&(job, _)| self.tasks[self.jobs[job].task].dag == dag)
            .map(|(job, w)| (self.jobs[job].key, w))
            .max()
    }

    fn dispatch_at(&mut self, now: Instant) -> Result<(), SimError> {
        let preemptive = self.cfg.policy.is_preemptive();
        let swap_within_cap = preemptive && self.cfg.preempt_within_cap;
        loop {
            let free = self.workers.iter().position(Option::is_none);
            let victim = match free {
                Some(_) => None,
                None if preemptive => self.lowest_running(),
                None => break,
            };
            // (job key, worker, whether the worker must be preempted first)
            let mut chosen = None;
            let mut deferred = Vec::new();
            for key in self.ready.iter() {
                if let Some((lowest, _)) = victim {
                    if key.primary() >= lowest.primary() {
                        break;
                    }
                }
                let dag = self.tasks[self.jobs[key.job].task].dag;
                if self.caps[dag].admits(self.dag_running[dag]) {
                    chosen = Some(match (free, victim) {
                        (Some(w), _) => (*key, w, false),
                        (None, Some((_, w))) => (*key, w, true),
                        (None, None) => unreachable!("non-preemptive policies stop when no worker is free"),
                    });
                    break;
                }
                // The DAG is at its cap: the job may still take the slot of a
                // lower-ranked job of its own DAG.
                if swap_within_cap {
                    if let Some((low, w)) = self.lowest_running_in(dag) {
                        if key.primary() < low.primary() {
                            chosen = Some((*key, w, true));
                            break;
                        }
                    }
                }
                deferred.push(key.job);
            }
            for job in deferred {
                self.defer(job, now);
            }
            let Some((key, worker, preempting)) = chosen else { break };
            if !self.ready.remove(&key) {
                return Err(invariant(format!("job {} vanished from the ready queue", key.job)));
            }
            if preempting {
                self.preempt(worker, now)?;
            }
            self.start(key.job, worker, now, preempting)?;
        }
        Ok(())
    }

    fn defer(&mut self, job: usize, now: Instant) {
        if self.jobs[job].in_deferral {
            return;
        }
        self.jobs[job].in_deferral = true;
        self.records[job].deferred_by_cap = true;
        self.counters[self.jobs[job].task].deferred += 1;
        self.emit(now, EventKind::DeferredByCap, job, None);
    }

    fn preempt(&mut self, worker: usize, now: Instant) -> Result<(), SimError> {
        let r = self.workers[worker].take().ok_or_else(|| invariant(format!("preempting idle worker {worker}")))?;
        let job = r.job;
        let ran = now - self.jobs[job].segment_start;
        self.jobs[job].remaining = self.jobs[job]
            .remaining
            .checked_sub(ran)
            .filter(|&rem| rem > 0)
            .ok_or_else(|| invariant(format!("preempted job {job} has no remaining work at t={now}")))?;
        self.records[job].dispatched_us += ran;
        self.records[job].preemptions += 1;
        let dag = self.tasks[self.jobs[job].task].dag;
        self.dag_running[dag] -= 1;
        self.emit(now, EventKind::Preempt, job, Some(worker));
        self.ready.push(self.jobs[job].key);
        Ok(())
    }

    fn start(&mut self, job: usize, worker: usize, now: Instant, preempting: bool) -> Result<(), SimError> {
        if self.workers[worker].is_some() {
            return Err(invariant(format!("worker {worker} double-booked at t={now}")));
        }
        let dag = self.tasks[self.jobs[job].task].dag;
        self.dag_running[dag] += 1;
        if self.caps[dag].exceeded_by(self.dag_running[dag]) {
            return Err(invariant(format!("DAG {dag} over its cap at t={now}")));
        }
        let cs = self.cfg.context_switch_us;
        let state = &mut self.jobs[job];
        if state.remaining == 0 {
            return Err(invariant(format!("dispatching finished job {job}")));
        }
        state.segment_start = now;
        state.in_deferral = false;
        if preempting && cs > 0 {
            state.remaining += cs;
            self.records[job].overhead_us += cs;
        }
        self.records[job].start_us.get_or_insert(now);
        self.workers[worker] = Some(Running { job });
        self.emit(now, EventKind::Dispatch, job, Some(worker));
        Ok(())
    }

    fn finish(mut self, workers: u32) -> SimTrace {
        // Work already done by jobs cut off at the horizon.
        for r in self.workers.iter().flatten() {
            let ran = self.horizon - self.jobs[r.job].segment_start;
            self.records[r.job].dispatched_us += ran;
        }
        let mut counters = BTreeMap::new();
        for (t, c) in self.tasks.iter().zip(self.counters.iter_mut()) {
            if t.arrived != u32::MAX {
                c.unreleased = (t.arrived - t.released) as u64;
            }
            counters.insert(t.id, *c);
        }
        SimTrace {
            policy: self.cfg.policy,
            workers,
            horizon_us: self.horizon,
            events: self.events,
            jobs: self.records,
            counters,
        }
    }
}
