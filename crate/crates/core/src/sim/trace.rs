use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Policy, SimError};
use crate::model::{DagId, Duration, Instant, TaskId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    /// Period elapsed and every gating predecessor finished; `r` is recorded.
    Release,
    /// Inserted into the ready queue.
    Ready,
    /// Would have been dispatched but its DAG was at `max_active`.
    DeferredByCap,
    Dispatch,
    Preempt,
    Complete,
    DeadlineMiss,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub timestamp_us: Instant,
    pub kind: EventKind,
    pub task_id: TaskId,
    pub instance: u32,
    pub worker: Option<u32>,
}

/// Per-job outcome. `finish == None` means the job was still pending at the
/// horizon (censored).
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct JobRecord {
    pub task_id: TaskId,
    pub dag_id: DagId,
    pub instance: u32,
    /// Period boundary that created the job candidate.
    pub arrival_us: Instant,
    pub release_us: Instant,
    pub deadline_us: Instant,
    pub relative_deadline_us: Duration,
    pub start_us: Option<Instant>,
    pub finish_us: Option<Instant>,
    /// Time spent on a worker, including any context-switch charge.
    pub dispatched_us: Duration,
    pub overhead_us: Duration,
    pub wcet_us: Duration,
    pub preemptions: u32,
    pub deferred_by_cap: bool,
}

impl JobRecord {
    pub fn is_complete(&self) -> bool {
        self.finish_us.is_some()
    }

    pub fn response_us(&self) -> Option<Duration> {
        self.finish_us.map(|f| f - self.release_us)
    }

    pub fn lateness_us(&self) -> Option<i64> {
        self.finish_us.map(|f| f as i64 - self.deadline_us as i64)
    }

    pub fn missed(&self) -> bool {
        self.lateness_us().is_some_and(|l| l > 0)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TaskCounters {
    pub released: u64,
    pub executed: u64,
    /// Deferral episodes, not distinct jobs.
    pub deferred: u64,
    /// Candidates whose period elapsed but whose predecessors never finished
    /// before the horizon.
    pub unreleased: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimTrace {
    pub policy: Policy,
    pub workers: u32,
    pub horizon_us: Duration,
    pub events: Vec<TraceEvent>,
    pub jobs: Vec<JobRecord>,
    pub counters: BTreeMap<TaskId, TaskCounters>,
}

impl SimTrace {
    pub fn completed_jobs(&self) -> impl Iterator<Item = &JobRecord> {
        self.jobs.iter().filter(|j| j.is_complete())
    }

    pub fn censored(&self) -> usize {
        self.jobs.iter().filter(|j| !j.is_complete()).count()
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    pub fn total_deferred(&self) -> u64 {
        self.counters.values().map(|c| c.deferred).sum()
    }

    pub fn total_executed(&self) -> u64 {
        self.counters.values().map(|c| c.executed).sum()
    }

    /// One JSON object per line.
    pub fn write_events_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn events_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_events_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    /// Job table, one row per job in release order. Censored jobs have empty
    /// finish/response/lateness cells.
    pub fn jobs_csv(&self) -> String {
        let mut s = String::from(
            "task_id,instance,release_us,start_us,finish_us,deadline_us,response_us,lateness_us,missed,preemptions,deferred\n",
        );
        let opt = |v: Option<u64>| v.map(|v| v.to_string()).unwrap_or_default();
        for j in &self.jobs {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{}",
                j.task_id.0,
                j.instance,
                j.release_us,
                opt(j.start_us),
                opt(j.finish_us),
                j.deadline_us,
                opt(j.response_us()),
                j.lateness_us().map(|l| l.to_string()).unwrap_or_default(),
                u8::from(j.missed()),
                j.preemptions,
                u8::from(j.deferred_by_cap),
            );
        }
        s
    }
}

pub fn read_events_jsonl<R: BufRead>(input: R) -> Result<Vec<TraceEvent>, SimError> {
    let mut events = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| SimError::MalformedTrace(format!("line {}: {e}", n + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        let event =
            serde_json::from_str(&line).map_err(|e| SimError::MalformedTrace(format!("line {}: {e}", n + 1)))?;
        events.push(event);
    }
    Ok(events)
}

/// Largest `f − r` over the completed jobs of `task`.
pub fn worst_case_response_from_trace(trace: &SimTrace, task: TaskId) -> Result<Duration, SimError> {
    trace
        .completed_jobs()
        .filter(|j| j.task_id == task)
        .filter_map(JobRecord::response_us)
        .max()
        .ok_or(SimError::NoCompletedJobs(task))
}
