//! Fixed-priority schedulability analysis.
//!
//! The response-time recurrence here is the classical uniprocessor form. It is
//! exact for independent tasks released synchronously on a single worker and
//! serves only as a reference point when the executor runs more than one
//! worker or when precedence edges delay releases.

use serde::Serialize;
use thiserror::Error;

use crate::model::{
    assign_rm_priorities, rational_to_f64, total_utilization, Duration, PriorityMap, TaskId, ValidatedWorkload,
};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("utilization bound needs at least one task")]
    NoTasks,
}

/// Liu-Layland bound `n(2^{1/n} − 1)`.
pub fn rm_utilization_bound(n: usize) -> Result<f64, AnalysisError> {
    if n == 0 {
        return Err(AnalysisError::NoTasks);
    }
    let n = n as f64;
    // expm1 keeps full precision once 1/n is tiny.
    Ok(n * (std::f64::consts::LN_2 / n).exp_m1())
}

/// I_i: total WCET of every strictly higher-priority task, whatever its DAG.
pub fn interference_bound(task: TaskId, w: &ValidatedWorkload, pm: &PriorityMap) -> Duration {
    pm.higher_priority(task).iter().map(|&j| w.task(j).wcet).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum RtaVerdict {
    Converged {
        response_us: Duration,
        iterations: u32,
    },
    /// The iterate passed the relative deadline before settling.
    Unschedulable {
        last_response_us: Duration,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RtaResult {
    pub task_id: TaskId,
    #[serde(flatten)]
    pub verdict: RtaVerdict,
    pub hp_set: Vec<TaskId>,
    pub blocking_us: Duration,
}

impl RtaResult {
    pub fn response(&self) -> Option<Duration> {
        match self.verdict {
            RtaVerdict::Converged { response_us, .. } => Some(response_us),
            RtaVerdict::Unschedulable { .. } => None,
        }
    }

    pub fn is_schedulable(&self) -> bool {
        matches!(self.verdict, RtaVerdict::Converged { .. })
    }
}

/// Right-hand side of the recurrence evaluated at `r`.
pub fn rta_demand(task: TaskId, r: Duration, blocking: Duration, w: &ValidatedWorkload, pm: &PriorityMap) -> Duration {
    let own = w.task(task).wcet + blocking;
    own + pm
        .higher_priority(task)
        .iter()
        .map(|&j| {
            let hp = w.task(j);
            r.div_ceil(hp.period) * hp.wcet
        })
        .sum::<Duration>()
}

/// Iterates `R ← C + B + Σ_{hp} ⌈R/T_j⌉·C_j` from `R = C + B` until the value
/// repeats or exceeds the relative deadline.
///
/// Assumes `D ≤ T`; with larger deadlines the result only covers the first
/// job after a critical instant.
pub fn response_time(task: TaskId, w: &ValidatedWorkload, pm: &PriorityMap, blocking: Duration) -> RtaResult {
    let deadline = w.task(task).deadline;
    let mut r = w.task(task).wcet + blocking;
    let mut iterations = 0;
    let verdict = loop {
        if r > deadline {
            break RtaVerdict::Unschedulable { last_response_us: r };
        }
        let next = rta_demand(task, r, blocking, w, pm);
        iterations += 1;
        debug_assert!(next >= r, "iterates are non-decreasing");
        if next == r {
            break RtaVerdict::Converged { response_us: r, iterations };
        }
        r = next;
    };
    RtaResult { task_id: task, verdict, hp_set: pm.higher_priority(task).to_vec(), blocking_us: blocking }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundVerdict {
    WithinBound,
    AboveBound,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Overall {
    AllSchedulable,
    SomeUnschedulable,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SchedReport {
    pub tasks: Vec<RtaResult>,
    pub utilization: f64,
    /// Exact Σ C/T as `numer/denom`.
    pub utilization_exact: String,
    pub rm_bound: f64,
    pub bound_verdict: BoundVerdict,
    pub overall: Overall,
}

/// RM priorities, utilization against the bound, and per-task RTA with no
/// blocking. Tasks are listed in priority order.
pub fn schedulability_report(w: &ValidatedWorkload) -> SchedReport {
    let pm = assign_rm_priorities(w);
    let u = total_utilization(w.workload()).expect("validated workloads are non-empty");
    let bound = rm_utilization_bound(w.task_count()).expect("validated workloads are non-empty");
    let utilization = rational_to_f64(&u);
    let tasks: Vec<RtaResult> = pm.order().iter().map(|&id| response_time(id, w, &pm, 0)).collect();
    let overall =
        if tasks.iter().all(RtaResult::is_schedulable) { Overall::AllSchedulable } else { Overall::SomeUnschedulable };
    SchedReport {
        tasks,
        utilization,
        utilization_exact: u.to_string(),
        rm_bound: bound,
        bound_verdict: if utilization <= bound { BoundVerdict::WithinBound } else { BoundVerdict::AboveBound },
        overall,
    }
}
