//! Independent replay of a trace against the per-DAG concurrency caps.
//!
//! Only `Dispatch`, `Preempt` and `Complete` events are consulted. Counts are
//! checked once per instant, after every event carrying that timestamp has
//! been applied. Jobs still running when the trace ends are allowed: they are
//! the censored jobs at the simulation horizon.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::trace::{EventKind, TraceEvent};
use super::SimError;
use crate::model::{DagId, Instant, MaxActive, TaskId, Workload};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CapViolation {
    pub timestamp_us: Instant,
    pub dag_id: DagId,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EnforcementReport {
    pub all_enforced: bool,
    pub violations: Vec<CapViolation>,
}

pub fn verify_enforcement(events: &[TraceEvent], w: &Workload) -> Result<EnforcementReport, SimError> {
    let mut dag_of: BTreeMap<TaskId, usize> = BTreeMap::new();
    for (d, dag) in w.dags.iter().enumerate() {
        for t in &dag.tasks {
            dag_of.insert(t.id, d);
        }
    }
    let caps: Vec<MaxActive> = w.dags.iter().map(|d| d.max_active).collect();
    let mut running_count = vec![0usize; w.dags.len()];
    let mut running: BTreeSet<(TaskId, u32)> = BTreeSet::new();
    let mut violations = Vec::new();

    let mut i = 0;
    let mut last_time = None;
    while i < events.len() {
        let now = events[i].timestamp_us;
        if last_time.is_some_and(|t| now < t) {
            return Err(SimError::MalformedTrace(format!("timestamp {now} goes backwards at event {i}")));
        }
        last_time = Some(now);
        while i < events.len() && events[i].timestamp_us == now {
            let e = &events[i];
            let job = (e.task_id, e.instance);
            match e.kind {
                EventKind::Dispatch | EventKind::Preempt | EventKind::Complete => {
                    let d = *dag_of.get(&e.task_id).ok_or_else(|| {
                        SimError::MalformedTrace(format!("unknown task {} at event {i}", e.task_id.0))
                    })?;
                    if e.kind == EventKind::Dispatch {
                        if !running.insert(job) {
                            return Err(SimError::MalformedTrace(format!(
                                "job {}#{} dispatched twice without release at t={now}",
                                e.task_id.0, e.instance
                            )));
                        }
                        running_count[d] += 1;
                    } else {
                        if !running.remove(&job) {
                            return Err(SimError::MalformedTrace(format!(
                                "{:?} for job {}#{} with no matching dispatch at t={now}",
                                e.kind, e.task_id.0, e.instance
                            )));
                        }
                        running_count[d] -= 1;
                    }
                }
                _ => {}
            }
            i += 1;
        }
        for (d, &count) in running_count.iter().enumerate() {
            if caps[d].exceeded_by(count) {
                violations.push(CapViolation { timestamp_us: now, dag_id: w.dags[d].dag_id, count });
            }
        }
    }
    Ok(EnforcementReport { all_enforced: violations.is_empty(), violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DagSpec, Task};

    fn ev(t: u64, kind: EventKind, task: u32, worker: u32) -> TraceEvent {
        TraceEvent { timestamp_us: t, kind, task_id: TaskId(task), instance: 0, worker: Some(worker) }
    }

    fn capped(cap: MaxActive) -> Workload {
        Workload::new(vec![
            DagSpec::new(1, vec![Task::implicit(1, 1, 1, 10), Task::implicit(2, 1, 1, 10)]).with_max_active(cap)
        ])
    }

    #[test]
    fn forged_double_dispatch_is_caught() {
        let events = vec![
            ev(0, EventKind::Dispatch, 1, 0),
            ev(0, EventKind::Dispatch, 2, 1),
            ev(1, EventKind::Complete, 1, 0),
            ev(1, EventKind::Complete, 2, 1),
        ];
        let r = verify_enforcement(&events, &capped(MaxActive::Bounded(1))).unwrap();
        assert!(!r.all_enforced);
        assert_eq!(r.violations, vec![CapViolation { timestamp_us: 0, dag_id: DagId(1), count: 2 }]);
    }

    #[test]
    fn uncapped_is_vacuously_enforced() {
        let events = vec![ev(0, EventKind::Dispatch, 1, 0), ev(0, EventKind::Dispatch, 2, 1)];
        assert!(verify_enforcement(&events, &capped(MaxActive::Unbounded)).unwrap().all_enforced);
    }

    #[test]
    fn handover_within_an_instant_is_fine() {
        let events =
            vec![ev(0, EventKind::Dispatch, 1, 0), ev(1, EventKind::Complete, 1, 0), ev(1, EventKind::Dispatch, 2, 0)];
        assert!(verify_enforcement(&events, &capped(MaxActive::Bounded(1))).unwrap().all_enforced);
    }

    #[test]
    fn malformed_traces() {
        let w = capped(MaxActive::Bounded(1));
        assert!(matches!(
            verify_enforcement(&[ev(0, EventKind::Complete, 1, 0)], &w),
            Err(SimError::MalformedTrace(_))
        ));
        assert!(matches!(
            verify_enforcement(&[ev(0, EventKind::Dispatch, 1, 0), ev(0, EventKind::Dispatch, 1, 1)], &w),
            Err(SimError::MalformedTrace(_))
        ));
        assert!(matches!(
            verify_enforcement(&[ev(5, EventKind::Release, 1, 0), ev(4, EventKind::Release, 1, 0)], &w),
            Err(SimError::MalformedTrace(_))
        ));
        assert!(matches!(
            verify_enforcement(&[ev(0, EventKind::Dispatch, 9, 0)], &w),
            Err(SimError::MalformedTrace(_))
        ));
    }
}
