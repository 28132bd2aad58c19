//! The multi-DAG periodic task model.
//!
//! A [`Workload`] is an ordered list of [`DagSpec`]s. Each DAG owns a set of
//! periodic [`Task`]s and intra-DAG precedence edges. All times are integer
//! microseconds. A workload must pass [`validate_workload`] before it can be
//! analyzed or simulated; the resulting [`ValidatedWorkload`] is immutable and
//! carries a topological order per DAG plus predecessor lists.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::{BigRational, Ratio};
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Integer microseconds.
pub type Duration = u64;
/// Absolute simulation time in microseconds.
pub type Instant = u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(pub u32);

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "τ{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DagId(pub u32);

impl fmt::Display for DagId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "G{}", self.0)
    }
}

/// One periodic callback.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Task {
    pub id: TaskId,
    pub dag_id: DagId,
    pub wcet: Duration,
    pub period: Duration,
    pub deadline: Duration,
    /// Carried through the model; no scheduler consults it.
    pub criticality: u8,
    pub label: String,
}

impl Task {
    /// Implicit-deadline task (`D = T`).
    pub fn implicit(id: u32, dag_id: u32, wcet: Duration, period: Duration) -> Self {
        Task {
            id: TaskId(id),
            dag_id: DagId(dag_id),
            wcet,
            period,
            deadline: period,
            criticality: 0,
            label: format!("t{id}"),
        }
    }

    pub fn with_deadline(mut self, deadline: Duration) -> Self {
        self.deadline = deadline;
        self
    }

    pub fn utilization(&self) -> BigRational {
        BigRational::new(BigInt::from(self.wcet), BigInt::from(self.period))
    }
}

/// Per-DAG bound on simultaneously running callbacks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MaxActive {
    Bounded(u32),
    Unbounded,
}

impl MaxActive {
    /// True when `running` more jobs would still respect the cap.
    pub fn admits(self, running: usize) -> bool {
        match self {
            MaxActive::Bounded(cap) => running < cap as usize,
            MaxActive::Unbounded => true,
        }
    }

    pub fn exceeded_by(self, running: usize) -> bool {
        match self {
            MaxActive::Bounded(cap) => running > cap as usize,
            MaxActive::Unbounded => false,
        }
    }

    pub fn as_option(self) -> Option<u32> {
        match self {
            MaxActive::Bounded(cap) => Some(cap),
            MaxActive::Unbounded => None,
        }
    }
}

impl From<Option<u32>> for MaxActive {
    fn from(v: Option<u32>) -> Self {
        v.map_or(MaxActive::Unbounded, MaxActive::Bounded)
    }
}

impl fmt::Display for MaxActive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaxActive::Bounded(cap) => write!(f, "{cap}"),
            MaxActive::Unbounded => f.write_str("inf"),
        }
    }
}

impl Serialize for MaxActive {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.as_option().serialize(s)
    }
}

impl<'de> Deserialize<'de> for MaxActive {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Option::<u32>::deserialize(d).map(MaxActive::from)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DagSpec {
    pub dag_id: DagId,
    pub tasks: Vec<Task>,
    /// `(from, to)`: `to` may not start until `from` has completed.
    pub edges: Vec<(TaskId, TaskId)>,
    pub max_active: MaxActive,
}

impl DagSpec {
    pub fn new(dag_id: u32, tasks: Vec<Task>) -> Self {
        DagSpec { dag_id: DagId(dag_id), tasks, edges: Vec::new(), max_active: MaxActive::Unbounded }
    }

    pub fn with_edges(mut self, edges: &[(u32, u32)]) -> Self {
        self.edges = edges.iter().map(|&(a, b)| (TaskId(a), TaskId(b))).collect();
        self
    }

    pub fn with_max_active(mut self, max_active: MaxActive) -> Self {
        self.max_active = max_active;
        self
    }
}

/// Multiplicative deadline factor δ, held as an exact decimal ratio.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DeadlineScale(Ratio<u64>);

impl DeadlineScale {
    pub const ONE: DeadlineScale = DeadlineScale(Ratio::new_raw(1, 1));

    pub fn new(numer: u64, denom: u64) -> Result<Self, ModelError> {
        if numer == 0 || denom == 0 {
            return Err(ModelError::NonPositiveScale(format!("{numer}/{denom}")));
        }
        Ok(DeadlineScale(Ratio::new(numer, denom)))
    }

    /// Parses a plain decimal such as `0.8` or `1.25` exactly.
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let bad = || ModelError::NonPositiveScale(text.to_string());
        let text = text.trim();
        let (int_part, frac_part) = text.split_once('.').unwrap_or((text, ""));
        if int_part.starts_with('-') || (int_part.is_empty() && frac_part.is_empty()) {
            return Err(bad());
        }
        if frac_part.len() > 12 || !frac_part.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let int: u64 = if int_part.is_empty() { 0 } else { int_part.parse().map_err(|_| bad())? };
        let frac: u64 = if frac_part.is_empty() { 0 } else { frac_part.parse().map_err(|_| bad())? };
        let denom = 10u64.pow(frac_part.len() as u32);
        let numer = int.checked_mul(denom).and_then(|v| v.checked_add(frac)).ok_or_else(bad)?;
        Self::new(numer, denom).map_err(|_| bad())
    }

    /// Goes through the shortest round-trip decimal rendering of `value`,
    /// so `0.8_f64` becomes exactly 4/5.
    pub fn from_f64(value: f64) -> Result<Self, ModelError> {
        if !value.is_finite() || value <= 0.0 {
            return Err(ModelError::NonPositiveScale(value.to_string()));
        }
        Self::parse(&value.to_string())
    }

    pub fn to_f64(self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }

    pub fn is_one(self) -> bool {
        self.0.numer() == self.0.denom()
    }

    /// `round(δ · period)` with ties rounded up.
    pub fn apply(self, period: Duration) -> Duration {
        let numer = *self.0.numer() as u128;
        let denom = *self.0.denom() as u128;
        let scaled = (2 * numer * period as u128 + denom) / (2 * denom);
        u64::try_from(scaled).unwrap_or(u64::MAX)
    }
}

impl Default for DeadlineScale {
    fn default() -> Self {
        DeadlineScale::ONE
    }
}

impl fmt::Display for DeadlineScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

impl Serialize for DeadlineScale {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.to_f64())
    }
}

impl<'de> Deserialize<'de> for DeadlineScale {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let value = f64::deserialize(d)?;
        DeadlineScale::from_f64(value).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Workload {
    pub dags: Vec<DagSpec>,
    pub deadline_scale: DeadlineScale,
}

impl Workload {
    pub fn new(dags: Vec<DagSpec>) -> Self {
        Workload { dags, deadline_scale: DeadlineScale::ONE }
    }

    /// A single DAG with no edges: the classical independent task set.
    pub fn independent(tasks: Vec<Task>) -> Self {
        Workload::new(vec![DagSpec::new(tasks.first().map_or(1, |t| t.dag_id.0), tasks)])
    }

    pub fn tasks(&self) -> impl Iterator<Item = &Task> {
        self.dags.iter().flat_map(|d| d.tasks.iter())
    }

    pub fn task_count(&self) -> usize {
        self.dags.iter().map(|d| d.tasks.len()).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TimingReason {
    NonPositiveWcet,
    NonPositivePeriod,
    NonPositiveDeadline,
    WcetExceedsPeriod,
    WcetExceedsDeadline,
}

impl fmt::Display for TimingReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TimingReason::NonPositiveWcet => "C must be positive",
            TimingReason::NonPositivePeriod => "T must be positive",
            TimingReason::NonPositiveDeadline => "D must be positive",
            TimingReason::WcetExceedsPeriod => "C exceeds T",
            TimingReason::WcetExceedsDeadline => "C exceeds D",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ViolationKind {
    #[error("cycle in {dag_id}: {}", fmt_ids(.cycle))]
    CycleDetected { dag_id: DagId, cycle: Vec<TaskId> },
    #[error("edge {from} -> {to} crosses DAG boundaries")]
    CrossDagEdge { from: TaskId, to: TaskId },
    #[error("edge references unknown task {0}")]
    UnknownTask(TaskId),
    #[error("task {task_id}: {reason}")]
    InvalidTiming { task_id: TaskId, reason: TimingReason },
    #[error("task id {0} is not unique")]
    DuplicateTaskId(TaskId),
    #[error("DAG id {0} is not unique")]
    DuplicateDagId(DagId),
    #[error("task {task_id} claims {claimed} but is listed under {actual}")]
    DagMismatch { task_id: TaskId, claimed: DagId, actual: DagId },
    #[error("max_active must be at least 1")]
    InvalidMaxActive,
    #[error("workload contains no tasks")]
    EmptyWorkload,
}

fn fmt_ids(ids: &[TaskId]) -> String {
    ids.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(" -> ")
}

/// One violated invariant together with the document path of the offender,
/// e.g. `dags[0].tasks[2]`.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{path}: {kind}")]
pub struct Violation {
    pub path: String,
    pub kind: ViolationKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("invalid workload ({} violation(s)): {}", .0.len(), .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
pub struct ValidationErrors(pub Vec<Violation>);

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("workload contains no tasks")]
    EmptyWorkload,
    #[error("hyperperiod exceeds the configured cap of {cap} us")]
    OverflowRisk { cap: u64 },
    #[error("deadline scale must be a positive decimal, got {0}")]
    NonPositiveScale(String),
    #[error(transparent)]
    Invalid(#[from] ValidationErrors),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct TaskSlot {
    dag: usize,
    pos: usize,
}

/// A workload that passed [`validate_workload`].
#[derive(Clone, Debug)]
pub struct ValidatedWorkload {
    workload: Workload,
    slots: BTreeMap<TaskId, TaskSlot>,
    predecessors: BTreeMap<TaskId, Vec<TaskId>>,
    successors: BTreeMap<TaskId, Vec<TaskId>>,
    topo: Vec<Vec<TaskId>>,
}

impl ValidatedWorkload {
    pub fn workload(&self) -> &Workload {
        &self.workload
    }

    pub fn into_inner(self) -> Workload {
        self.workload
    }

    pub fn tasks(&self) -> impl Iterator<Item = &Task> {
        self.workload.tasks()
    }

    pub fn task_count(&self) -> usize {
        self.slots.len()
    }

    pub fn contains(&self, id: TaskId) -> bool {
        self.slots.contains_key(&id)
    }

    /// Panics if `id` is not part of the workload.
    pub fn task(&self, id: TaskId) -> &Task {
        let slot = self.slots[&id];
        &self.workload.dags[slot.dag].tasks[slot.pos]
    }

    pub fn dag_index(&self, id: TaskId) -> usize {
        self.slots[&id].dag
    }

    pub fn dags(&self) -> &[DagSpec] {
        &self.workload.dags
    }

    pub fn predecessors(&self, id: TaskId) -> &[TaskId] {
        self.predecessors.get(&id).map_or(&[], Vec::as_slice)
    }

    pub fn successors(&self, id: TaskId) -> &[TaskId] {
        self.successors.get(&id).map_or(&[], Vec::as_slice)
    }

    /// Topological order of the DAG at position `dag` in the workload.
    pub fn topo_order(&self, dag: usize) -> &[TaskId] {
        &self.topo[dag]
    }
}

/// Checks every structural and timing invariant, collecting all violations.
pub fn validate_workload(workload: Workload) -> Result<ValidatedWorkload, ValidationErrors> {
    let mut violations = Vec::new();
    let mut slots = BTreeMap::new();
    let mut dag_ids = BTreeSet::new();

    if workload.task_count() == 0 {
        violations.push(Violation { path: "dags".into(), kind: ViolationKind::EmptyWorkload });
    }

    for (d, dag) in workload.dags.iter().enumerate() {
        if !dag_ids.insert(dag.dag_id) {
            violations
                .push(Violation { path: format!("dags[{d}].dag_id"), kind: ViolationKind::DuplicateDagId(dag.dag_id) });
        }
        if dag.max_active == MaxActive::Bounded(0) {
            violations.push(Violation { path: format!("dags[{d}].max_active"), kind: ViolationKind::InvalidMaxActive });
        }
        for (p, task) in dag.tasks.iter().enumerate() {
            let path = format!("dags[{d}].tasks[{p}]");
            if slots.insert(task.id, TaskSlot { dag: d, pos: p }).is_some() {
                violations.push(Violation { path: path.clone(), kind: ViolationKind::DuplicateTaskId(task.id) });
            }
            if task.dag_id != dag.dag_id {
                violations.push(Violation {
                    path: path.clone(),
                    kind: ViolationKind::DagMismatch { task_id: task.id, claimed: task.dag_id, actual: dag.dag_id },
                });
            }
            for reason in timing_violations(task) {
                violations.push(Violation {
                    path: path.clone(),
                    kind: ViolationKind::InvalidTiming { task_id: task.id, reason },
                });
            }
        }
    }

    let mut predecessors: BTreeMap<TaskId, Vec<TaskId>> = BTreeMap::new();
    let mut successors: BTreeMap<TaskId, Vec<TaskId>> = BTreeMap::new();
    let mut topo = Vec::with_capacity(workload.dags.len());
    for (d, dag) in workload.dags.iter().enumerate() {
        let members: BTreeSet<TaskId> = dag.tasks.iter().map(|t| t.id).collect();
        let mut local: Vec<(TaskId, TaskId)> = Vec::new();
        for (e, &(from, to)) in dag.edges.iter().enumerate() {
            let path = format!("dags[{d}].edges[{e}]");
            let mut ok = true;
            for end in [from, to] {
                if !slots.contains_key(&end) {
                    violations.push(Violation { path: path.clone(), kind: ViolationKind::UnknownTask(end) });
                    ok = false;
                }
            }
            if ok && !(members.contains(&from) && members.contains(&to)) {
                violations.push(Violation { path: path.clone(), kind: ViolationKind::CrossDagEdge { from, to } });
                ok = false;
            }
            if ok && !local.contains(&(from, to)) {
                local.push((from, to));
            }
        }
        match topological_order(&members, &local) {
            Ok(order) => topo.push(order),
            Err(cycle) => {
                violations.push(Violation {
                    path: format!("dags[{d}].edges"),
                    kind: ViolationKind::CycleDetected { dag_id: dag.dag_id, cycle },
                });
                topo.push(Vec::new());
            }
        }
        for (from, to) in local {
            predecessors.entry(to).or_default().push(from);
            successors.entry(from).or_default().push(to);
        }
    }
    for list in predecessors.values_mut().chain(successors.values_mut()) {
        list.sort_unstable();
    }

    if !violations.is_empty() {
        return Err(ValidationErrors(violations));
    }
    Ok(ValidatedWorkload { workload, slots, predecessors, successors, topo })
}

fn timing_violations(task: &Task) -> Vec<TimingReason> {
    let mut out = Vec::new();
    if task.wcet == 0 {
        out.push(TimingReason::NonPositiveWcet);
    }
    if task.period == 0 {
        out.push(TimingReason::NonPositivePeriod);
    }
    if task.deadline == 0 {
        out.push(TimingReason::NonPositiveDeadline);
    }
    if task.period > 0 && task.wcet > task.period {
        out.push(TimingReason::WcetExceedsPeriod);
    }
    if task.deadline > 0 && task.wcet > task.deadline {
        out.push(TimingReason::WcetExceedsDeadline);
    }
    out
}

/// Kahn's algorithm, smallest ready id first. On failure returns one cycle.
fn topological_order(nodes: &BTreeSet<TaskId>, edges: &[(TaskId, TaskId)]) -> Result<Vec<TaskId>, Vec<TaskId>> {
    let mut indegree: BTreeMap<TaskId, usize> = nodes.iter().map(|&n| (n, 0)).collect();
    let mut out: BTreeMap<TaskId, Vec<TaskId>> = BTreeMap::new();
    for &(from, to) in edges {
        *indegree.get_mut(&to).expect("edge endpoints checked") += 1;
        out.entry(from).or_default().push(to);
    }
    let mut ready: BTreeSet<TaskId> = indegree.iter().filter(|(_, &d)| d == 0).map(|(&n, _)| n).collect();
    let mut order = Vec::with_capacity(nodes.len());
    while let Some(n) = ready.pop_first() {
        order.push(n);
        for &succ in out.get(&n).into_iter().flatten() {
            let deg = indegree.get_mut(&succ).unwrap();
            *deg -= 1;
            if *deg == 0 {
                ready.insert(succ);
            }
        }
    }
    if order.len() == nodes.len() {
        return Ok(order);
    }

    // Every leftover node has a leftover predecessor, so walking backwards
    // from any of them must revisit a node.
    let done: BTreeSet<TaskId> = order.into_iter().collect();
    let mut pred_of: BTreeMap<TaskId, TaskId> = BTreeMap::new();
    for &(from, to) in edges {
        if !done.contains(&from) && !done.contains(&to) {
            pred_of.entry(to).or_insert(from);
        }
    }
    let start = *nodes.iter().find(|n| !done.contains(n)).unwrap();
    let mut seen = vec![start];
    let mut cur = start;
    loop {
        cur = pred_of[&cur];
        if let Some(pos) = seen.iter().position(|&n| n == cur) {
            let mut cycle: Vec<TaskId> = seen[pos..].to_vec();
            cycle.reverse();
            let min = cycle.iter().enumerate().min_by_key(|(_, id)| **id).map(|(i, _)| i).unwrap();
            cycle.rotate_left(min);
            return Err(cycle);
        }
        seen.push(cur);
    }
}

/// Global rate-monotonic ranks. Rank 0 is the highest priority.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PriorityMap {
    order: Vec<TaskId>,
    rank: BTreeMap<TaskId, u32>,
}

impl PriorityMap {
    pub fn rank(&self, id: TaskId) -> u32 {
        self.rank[&id]
    }

    pub fn get(&self, id: TaskId) -> Option<u32> {
        self.rank.get(&id).copied()
    }

    /// Tasks from highest to lowest priority.
    pub fn order(&self) -> &[TaskId] {
        &self.order
    }

    /// hp(i): every task with strictly higher priority, across all DAGs.
    pub fn higher_priority(&self, id: TaskId) -> &[TaskId] {
        &self.order[..self.rank(id) as usize]
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

/// Shorter period wins; equal periods fall back to ascending task id.
pub fn assign_rm_priorities(w: &ValidatedWorkload) -> PriorityMap {
    let mut keyed: Vec<(Duration, TaskId)> = w.tasks().map(|t| (t.period, t.id)).collect();
    keyed.sort_unstable();
    let order: Vec<TaskId> = keyed.into_iter().map(|(_, id)| id).collect();
    let rank = order.iter().enumerate().map(|(r, &id)| (id, r as u32)).collect();
    PriorityMap { order, rank }
}

/// Σ C/T over every task, exact.
pub fn total_utilization(w: &Workload) -> Result<BigRational, ModelError> {
    if w.task_count() == 0 {
        return Err(ModelError::EmptyWorkload);
    }
    Ok(w.tasks().fold(BigRational::zero(), |acc, t| acc + t.utilization()))
}

pub fn dag_utilization(dag: &DagSpec) -> BigRational {
    dag.tasks.iter().fold(BigRational::zero(), |acc, t| acc + t.utilization())
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Least common multiple of all periods, refusing anything above `cap`.
pub fn hyperperiod(w: &Workload, cap: u64) -> Result<Duration, ModelError> {
    if w.task_count() == 0 {
        return Err(ModelError::EmptyWorkload);
    }
    let mut acc: u64 = 1;
    for t in w.tasks() {
        if t.period == 0 {
            return Err(ModelError::Invalid(ValidationErrors(vec![Violation {
                path: format!("task {}", t.id.0),
                kind: ViolationKind::InvalidTiming { task_id: t.id, reason: TimingReason::NonPositivePeriod },
            }])));
        }
        let g = acc.gcd(&t.period);
        acc = (acc / g).checked_mul(t.period).filter(|&v| v <= cap).ok_or(ModelError::OverflowRisk { cap })?;
    }
    Ok(acc)
}

/// Rewrites every deadline as `round(δ · T)` and records δ on the workload.
pub fn scale_deadlines(w: &Workload, scale: DeadlineScale) -> Result<Workload, ModelError> {
    let mut out = w.clone();
    let mut violations = Vec::new();
    for (d, dag) in out.dags.iter_mut().enumerate() {
        for (p, task) in dag.tasks.iter_mut().enumerate() {
            task.deadline = scale.apply(task.period);
            if task.deadline < task.wcet || task.deadline == 0 {
                violations.push(Violation {
                    path: format!("dags[{d}].tasks[{p}]"),
                    kind: ViolationKind::InvalidTiming { task_id: task.id, reason: TimingReason::WcetExceedsDeadline },
                });
            }
        }
    }
    if !violations.is_empty() {
        return Err(ValidationErrors(violations).into());
    }
    out.deadline_scale = scale;
    Ok(out)
}

/// Replaces the caps of the first DAGs in order; extra DAGs keep theirs.
pub fn with_caps(w: &Workload, caps: &[MaxActive]) -> Workload {
    let mut out = w.clone();
    for (dag, &cap) in out.dags.iter_mut().zip(caps) {
        dag.max_active = cap;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> Workload {
        Workload::new(vec![DagSpec::new(
            1,
            vec![Task::implicit(1, 1, 1, 10), Task::implicit(2, 1, 1, 10), Task::implicit(3, 1, 1, 10)],
        )
        .with_edges(&[(1, 2), (2, 3)])])
    }

    fn set(params: &[(u64, u64)]) -> Workload {
        Workload::independent(
            params.iter().enumerate().map(|(i, &(c, t))| Task::implicit(i as u32 + 1, 1, c, t)).collect(),
        )
    }

    #[test]
    fn chain_validates_with_topo_order() {
        let v = validate_workload(chain()).unwrap();
        assert_eq!(v.topo_order(0), &[TaskId(1), TaskId(2), TaskId(3)]);
        assert_eq!(v.predecessors(TaskId(3)), &[TaskId(2)]);
        assert!(v.predecessors(TaskId(1)).is_empty());
    }

    #[test]
    fn two_cycle_is_reported() {
        let w = Workload::new(vec![DagSpec::new(1, vec![Task::implicit(1, 1, 1, 10), Task::implicit(2, 1, 1, 10)])
            .with_edges(&[(1, 2), (2, 1)])]);
        let err = validate_workload(w).unwrap_err();
        assert_eq!(err.0.len(), 1);
        assert_eq!(err.0[0].kind, ViolationKind::CycleDetected { dag_id: DagId(1), cycle: vec![TaskId(1), TaskId(2)] });
    }

    #[test]
    fn longer_cycle_behind_a_source() {
        let w = Workload::new(vec![DagSpec::new(1, (1..=4).map(|i| Task::implicit(i, 1, 1, 10)).collect())
            .with_edges(&[(1, 2), (2, 3), (3, 4), (4, 2)])]);
        let err = validate_workload(w).unwrap_err();
        match &err.0[0].kind {
            ViolationKind::CycleDetected { cycle, .. } => assert_eq!(cycle, &[TaskId(2), TaskId(3), TaskId(4)]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wcet_above_period_is_invalid_timing() {
        let w = set(&[(5000, 3000)]);
        let err = validate_workload(w).unwrap_err();
        assert!(err
            .0
            .iter()
            .any(|v| v.kind
                == ViolationKind::InvalidTiming { task_id: TaskId(1), reason: TimingReason::WcetExceedsPeriod }));
        assert_eq!(err.0[0].path, "dags[0].tasks[0]");
    }

    #[test]
    fn cross_dag_edge_and_unknown_task() {
        let w = Workload::new(vec![
            DagSpec::new(1, vec![Task::implicit(1, 1, 1, 10)]).with_edges(&[(1, 2), (1, 9)]),
            DagSpec::new(2, vec![Task::implicit(2, 2, 1, 10)]),
        ]);
        let err = validate_workload(w).unwrap_err();
        let kinds: Vec<_> = err.0.iter().map(|v| v.kind.clone()).collect();
        assert!(kinds.contains(&ViolationKind::CrossDagEdge { from: TaskId(1), to: TaskId(2) }));
        assert!(kinds.contains(&ViolationKind::UnknownTask(TaskId(9))));
    }

    #[test]
    fn all_violations_collected() {
        let mut w = set(&[(0, 10), (1, 10)]);
        w.dags[0].tasks[1].id = TaskId(1);
        w.dags[0].max_active = MaxActive::Bounded(0);
        let err = validate_workload(w).unwrap_err();
        assert_eq!(err.0.len(), 3, "{err}");
    }

    #[test]
    fn empty_workload_rejected() {
        assert!(validate_workload(Workload::default()).is_err());
        assert_eq!(total_utilization(&Workload::default()), Err(ModelError::EmptyWorkload));
    }

    #[test]
    fn rm_ranks_simple() {
        let v = validate_workload(set(&[(1, 4000), (1, 6000), (1, 12000)])).unwrap();
        let pm = assign_rm_priorities(&v);
        assert_eq!([pm.rank(TaskId(1)), pm.rank(TaskId(2)), pm.rank(TaskId(3))], [0, 1, 2]);
    }

    #[test]
    fn rm_ranks_cross_dag() {
        let w = Workload::new(vec![
            DagSpec::new(1, vec![Task::implicit(1, 1, 1, 100_000)]),
            DagSpec::new(2, vec![Task::implicit(2, 2, 1, 10_000)]),
        ]);
        let pm = assign_rm_priorities(&validate_workload(w).unwrap());
        assert!(pm.rank(TaskId(2)) < pm.rank(TaskId(1)));
        assert_eq!(pm.higher_priority(TaskId(1)), &[TaskId(2)]);
    }

    #[test]
    fn rm_tie_broken_by_id() {
        let w = Workload::independent(vec![Task::implicit(5, 1, 1, 5000), Task::implicit(4, 1, 1, 5000)]);
        let pm = assign_rm_priorities(&validate_workload(w).unwrap());
        assert!(pm.rank(TaskId(4)) < pm.rank(TaskId(5)));
    }

    #[test]
    fn utilization_sums() {
        let u = total_utilization(&set(&[(1, 4), (2, 6)])).unwrap();
        assert_eq!(u, BigRational::new(7.into(), 12.into()));
        let u = total_utilization(&set(&[(7, 7)])).unwrap();
        assert_eq!(u, BigRational::from_integer(1.into()));
        let u = total_utilization(&set(&[(1, 4), (2, 6), (3, 12)])).unwrap();
        assert_eq!(u, BigRational::new(5.into(), 6.into()));
        assert!((rational_to_f64(&u) - 0.8333).abs() < 1e-4);
    }

    #[test]
    fn hyperperiod_values() {
        assert_eq!(hyperperiod(&set(&[(1, 4), (1, 6), (1, 12)]), u64::MAX), Ok(12));
        assert_eq!(hyperperiod(&set(&[(1, 10)]), u64::MAX), Ok(10));
        assert_eq!(hyperperiod(&set(&[(1, 7), (1, 11), (1, 13)]), u64::MAX), Ok(1001));
        assert_eq!(hyperperiod(&set(&[(1, 7), (1, 11), (1, 13)]), 1000), Err(ModelError::OverflowRisk { cap: 1000 }));
    }

    #[test]
    fn scale_parsing_is_exact() {
        assert_eq!(DeadlineScale::parse("0.8").unwrap(), DeadlineScale::new(4, 5).unwrap());
        assert_eq!(DeadlineScale::from_f64(1.1).unwrap(), DeadlineScale::new(11, 10).unwrap());
        assert!(DeadlineScale::parse("-1").is_err());
        assert!(DeadlineScale::parse("0").is_err());
        assert!(DeadlineScale::from_f64(0.0).is_err());
        assert_eq!(DeadlineScale::new(1, 2).unwrap().apply(5), 3, "half rounds up");
    }

    #[test]
    fn scale_deadlines_examples() {
        let w = set(&[(1000, 10_000)]);
        assert_eq!(scale_deadlines(&w, DeadlineScale::ONE).unwrap().dags[0].tasks[0].deadline, 10_000);
        let s = scale_deadlines(&w, DeadlineScale::parse("0.8").unwrap()).unwrap();
        assert_eq!(s.dags[0].tasks[0].deadline, 8000);
        assert_eq!(s.deadline_scale.to_f64(), 0.8);

        let tight = set(&[(4500, 5000)]);
        let err = scale_deadlines(&tight, DeadlineScale::parse("0.8").unwrap()).unwrap_err();
        match err {
            ModelError::Invalid(v) => assert_eq!(
                v.0[0].kind,
                ViolationKind::InvalidTiming { task_id: TaskId(1), reason: TimingReason::WcetExceedsDeadline }
            ),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn max_active_admission() {
        assert!(MaxActive::Bounded(2).admits(1));
        assert!(!MaxActive::Bounded(2).admits(2));
        assert!(MaxActive::Unbounded.admits(1_000));
        assert!(MaxActive::Bounded(2).exceeded_by(3));
    }
}
