//! Shared helpers for the integration suites: random task sets, independent
//! oracles, and a trace replayer that checks schedule invariants.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use multidag_core::model::{
    assign_rm_priorities, validate_workload, DagId, Duration, MaxActive, Task, TaskId, ValidatedWorkload, Workload,
};
use multidag_core::sim::{EventKind, Policy, SimTrace};
use rand::Rng;

/// 2^8 · 3^2 · 5^5. Every period below divides it, so hyperperiods stay
/// at or under 7.2 s.
pub const BASE_HYPERPERIOD: Duration = 7_200_000;

/// Divisors of [`BASE_HYPERPERIOD`] within `[lo, hi]`.
pub fn period_menu(lo: Duration, hi: Duration) -> Vec<Duration> {
    (1..=BASE_HYPERPERIOD.isqrt())
        .filter(|d| BASE_HYPERPERIOD.is_multiple_of(*d))
        .flat_map(|d| [d, BASE_HYPERPERIOD / d])
        .filter(|d| (lo..=hi).contains(d))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Plain UUniFast (no discard); shares sum to `total`.
pub fn uunifast<R: Rng>(rng: &mut R, n: usize, total: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut sum = total;
    for i in 1..n {
        let next = sum * rng.gen::<f64>().powf(1.0 / (n - i) as f64);
        out.push(sum - next);
        sum = next;
    }
    out.push(sum);
    out
}

/// Independent implicit-deadline task set on one DAG with no edges.
/// Returns `None` if a share rounds above its period.
pub fn random_independent_set<R: Rng>(rng: &mut R, n: usize, u: f64, menu: &[Duration]) -> Option<ValidatedWorkload> {
    let shares = uunifast(rng, n, u);
    let tasks: Vec<Task> = shares
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let t = menu[rng.gen_range(0..menu.len())];
            let c = ((s * t as f64).round() as Duration).max(1);
            Task::implicit(i as u32 + 1, 1, c, t)
        })
        .collect();
    if tasks.iter().any(|t| t.wcet > t.period) {
        return None;
    }
    validate_workload(Workload::independent(tasks)).ok()
}

/// Exact Σ C/T compared against `bound` without floating-point rounding of
/// the sum: Σ C·(H/T) ≤ bound·H over the integer hyperperiod `h`.
pub fn utilization_at_most(w: &ValidatedWorkload, h: Duration, bound: f64) -> bool {
    let demand: u128 = w.tasks().map(|t| t.wcet as u128 * (h / t.period) as u128).sum();
    (demand as f64) <= bound * h as f64 && (demand as f64 / h as f64) <= bound
}

pub fn lcm_periods(w: &ValidatedWorkload) -> Duration {
    w.tasks().fold(1, |acc, t| {
        let g = gcd(acc, t.period);
        acc / g * t.period
    })
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Textbook uniprocessor response-time recurrence, written from scratch:
/// `R = C + Σ_{T_j < T_i or (T_j = T_i and j < i)} ⌈R/T_j⌉ C_j`, stopping
/// once `R > D`.
pub fn oracle_rta(w: &ValidatedWorkload) -> BTreeMap<TaskId, Option<Duration>> {
    let tasks: Vec<&Task> = w.tasks().collect();
    let mut out = BTreeMap::new();
    for t in &tasks {
        let hp: Vec<&&Task> =
            tasks.iter().filter(|o| o.period < t.period || (o.period == t.period && o.id < t.id)).collect();
        let mut r = t.wcet;
        let res = loop {
            if r > t.deadline {
                break None;
            }
            let next = t.wcet + hp.iter().map(|o| r.div_ceil(o.period) * o.wcet).sum::<Duration>();
            if next == r {
                break Some(r);
            }
            r = next;
        };
        out.insert(t.id, res);
    }
    out
}

/// Finish times from a 1 μs-step preemptive fixed-priority simulation of
/// independent tasks on one worker, synchronous release, over `[0, horizon)`.
/// Keyed by `(task, instance)`.
pub fn unit_step_fp(w: &ValidatedWorkload, horizon: Duration) -> BTreeMap<(TaskId, u32), Duration> {
    let pm = assign_rm_priorities(w);
    let mut tasks: Vec<&Task> = w.tasks().collect();
    tasks.sort_by_key(|t| pm.rank(t.id));
    // (task index in priority order, instance, remaining)
    let mut pending: Vec<(usize, u32, Duration)> = Vec::new();
    let mut finish = BTreeMap::new();
    for now in 0..horizon {
        for (i, t) in tasks.iter().enumerate() {
            if now % t.period == 0 {
                pending.push((i, (now / t.period) as u32, t.wcet));
            }
        }
        // Highest priority, then oldest instance.
        if let Some(pos) = (0..pending.len()).min_by_key(|&p| (pending[p].0, pending[p].1)) {
            pending[pos].2 -= 1;
            if pending[pos].2 == 0 {
                let (i, k, _) = pending.swap_remove(pos);
                finish.insert((tasks[i].id, k), now + 1);
            }
        }
    }
    finish
}

/// Replays a trace and checks the schedule properties the engine promises.
/// Returns the first violation found.
pub fn check_schedule(w: &ValidatedWorkload, trace: &SimTrace) -> Result<(), String> {
    let pm = assign_rm_priorities(w);
    let m = trace.workers as usize;
    let caps: BTreeMap<DagId, MaxActive> = w.dags().iter().map(|d| (d.dag_id, d.max_active)).collect();
    let dag_of: BTreeMap<TaskId, DagId> = w.tasks().map(|t| (t.id, t.dag_id)).collect();
    let uncapped = caps.values().all(|c| *c == MaxActive::Unbounded);

    type Job = (TaskId, u32);
    let mut release: BTreeMap<Job, u64> = BTreeMap::new();
    let mut ready_at: BTreeMap<Job, u64> = BTreeMap::new();
    let mut waiting: BTreeSet<Job> = BTreeSet::new();
    let mut running: BTreeMap<Job, (u32, u64)> = BTreeMap::new();
    let mut busy: BTreeSet<u32> = BTreeSet::new();
    let mut executed: BTreeMap<Job, u64> = BTreeMap::new();
    let mut completed: BTreeMap<Job, u64> = BTreeMap::new();
    let mut last_ready_dispatched: BTreeMap<Option<DagId>, u64> = BTreeMap::new();

    let key = |j: &Job, release: &BTreeMap<Job, u64>| (pm.rank(j.0), release[j], j.1);
    let dag_running =
        |running: &BTreeMap<Job, (u32, u64)>, d: DagId| running.keys().filter(|j| dag_of[&j.0] == d).count();

    let events = &trace.events;
    let mut i = 0;
    let mut prev_t = 0;
    while i < events.len() {
        let t = events[i].timestamp_us;
        if t < prev_t {
            return Err(format!("timestamps go backwards at {t}"));
        }
        prev_t = t;
        while i < events.len() && events[i].timestamp_us == t {
            let e = &events[i];
            let job = (e.task_id, e.instance);
            match e.kind {
                EventKind::Release => {
                    let task = w.task(e.task_id);
                    if t < e.instance as u64 * task.period {
                        return Err(format!("{job:?} released at {t} before its period boundary"));
                    }
                    for p in w.predecessors(e.task_id) {
                        match completed.get(&(*p, e.instance)) {
                            Some(&f) if f <= t => {}
                            _ => return Err(format!("{job:?} released at {t} before predecessor {p:?} finished")),
                        }
                    }
                    release.insert(job, t);
                }
                EventKind::Ready => {
                    if !release.contains_key(&job) {
                        return Err(format!("{job:?} ready without release"));
                    }
                    ready_at.entry(job).or_insert(t);
                    waiting.insert(job);
                }
                EventKind::DeferredByCap => {
                    if !waiting.contains(&job) {
                        return Err(format!("{job:?} deferred while not waiting"));
                    }
                }
                EventKind::Dispatch => {
                    let wk = e.worker.ok_or("dispatch without worker")?;
                    if !waiting.remove(&job) {
                        return Err(format!("{job:?} dispatched while not waiting"));
                    }
                    if !busy.insert(wk) || wk as usize >= m {
                        return Err(format!("worker {wk} double-booked or out of range at {t}"));
                    }
                    if trace.policy != Policy::RatePriority {
                        let scope = if uncapped { None } else { Some(dag_of[&job.0]) };
                        let r = ready_at[&job];
                        if last_ready_dispatched.get(&scope).is_some_and(|&prev| r < prev) {
                            return Err(format!("FIFO order broken by {job:?} at {t}"));
                        }
                        last_ready_dispatched.insert(scope, r);
                    }
                    running.insert(job, (wk, t));
                }
                EventKind::Preempt | EventKind::Complete => {
                    if e.kind == EventKind::Preempt && trace.policy != Policy::RatePriority {
                        return Err(format!("preemption under {}", trace.policy));
                    }
                    let (wk, start) =
                        running.remove(&job).ok_or_else(|| format!("{job:?} stopped while not running"))?;
                    busy.remove(&wk);
                    *executed.entry(job).or_default() += t - start;
                    if e.kind == EventKind::Preempt {
                        waiting.insert(job);
                    } else {
                        let c = w.task(job.0).wcet;
                        if executed[&job] != c {
                            return Err(format!("{job:?} executed {} instead of {c}", executed[&job]));
                        }
                        completed.insert(job, t);
                    }
                }
                EventKind::DeadlineMiss => {}
            }
            let d = dag_of[&job.0];
            if caps[&d].exceeded_by(dag_running(&running, d)) {
                return Err(format!("cap of {d:?} exceeded at {t}"));
            }
            i += 1;
        }

        // State at the end of instant `t`; nothing is dispatched at the horizon.
        if t >= trace.horizon_us {
            continue;
        }
        for wj in &waiting {
            let d = dag_of[&wj.0];
            let under_cap = caps[&d].admits(dag_running(&running, d));
            if under_cap && running.len() < m {
                return Err(format!("idle worker at {t} while {wj:?} is eligible"));
            }
            if trace.policy == Policy::RatePriority {
                let k = key(wj, &release);
                for rj in running.keys() {
                    let same_dag = dag_of[&rj.0] == d;
                    if (under_cap || same_dag) && key(rj, &release) > k {
                        return Err(format!("{rj:?} runs at {t} while higher-ranked {wj:?} waits"));
                    }
                }
            }
        }
    }
    Ok(())
}
