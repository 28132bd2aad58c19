//! Seeded synthetic multi-DAG workloads.
//!
//! Utilizations come from UUniFast-discard, periods from either a doubling
//! chain (harmonic) or a log-uniform draw rounded to 100 μs, and each DAG is
//! a layered random graph. The whole draw is a pure function of [`GenSpec`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::file::WorkloadDocument;
use crate::model::{
    rational_to_f64, total_utilization, validate_workload, DagSpec, DeadlineScale, Duration, MaxActive, Task, TaskId,
    ValidationErrors, Workload,
};

pub const GENERATOR_NAME: &str = "multidag-gen";
pub const GENERATOR_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Granularity of non-harmonic periods.
pub const PERIOD_GRANULARITY_US: Duration = 100;

/// How many utilization vectors to draw before giving up on a spec.
const MAX_DRAWS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PeriodMode {
    Harmonic,
    NonHarmonic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenSpec {
    pub seed: u64,
    pub n_dags: u32,
    pub tasks_per_dag: u32,
    /// Total Σ C/T across all DAGs; may exceed 1 for multi-worker runs.
    pub target_utilization: f64,
    pub period_mode: PeriodMode,
    /// Inclusive `[min, max]` in microseconds.
    pub period_range_us: [Duration; 2],
    pub edge_probability: f64,
    /// One entry per DAG; missing entries mean unbounded.
    #[serde(default)]
    pub max_active: Vec<MaxActive>,
    #[serde(default)]
    pub deadline_scale: DeadlineScale,
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("infeasible spec: task {task} {reason}")]
    InfeasibleSpec { task: TaskId, reason: String },
    #[error("generated workload failed validation: {0}")]
    Invalid(#[from] ValidationErrors),
}

impl GenSpec {
    pub fn task_count(&self) -> usize {
        self.n_dags as usize * self.tasks_per_dag as usize
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn check(&self) -> Result<(), GenError> {
        let bad = |m: &str| Err(GenError::InvalidSpec(m.to_string()));
        let [lo, hi] = self.period_range_us;
        if self.n_dags == 0 || self.tasks_per_dag == 0 {
            return bad("n_dags and tasks_per_dag must be at least 1");
        }
        if lo == 0 || lo > hi {
            return bad("period_range_us must satisfy 1 <= min <= max");
        }
        if !(self.target_utilization.is_finite() && self.target_utilization > 0.0) {
            return bad("target_utilization must be positive");
        }
        if !(0.0..=1.0).contains(&self.edge_probability) {
            return bad("edge_probability must lie in [0, 1]");
        }
        if self.max_active.len() > self.n_dags as usize {
            return bad("more max_active entries than DAGs");
        }
        if self.max_active.contains(&MaxActive::Bounded(0)) {
            return bad("max_active must be at least 1");
        }
        Ok(())
    }
}

/// A generated workload plus the record needed to regenerate it.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedWorkload {
    pub workload: Workload,
    pub spec: GenSpec,
    pub achieved_utilization: f64,
}

impl GeneratedWorkload {
    pub fn provenance(&self) -> serde_json::Value {
        json!({
            "generator": GENERATOR_NAME,
            "version": GENERATOR_VERSION,
            "spec": self.spec,
            "achieved_utilization": self.achieved_utilization,
        })
    }

    pub fn into_document(self) -> WorkloadDocument {
        let provenance = Some(self.provenance());
        WorkloadDocument { workload: self.workload, provenance }
    }
}

pub fn generate_workload(spec: &GenSpec) -> Result<GeneratedWorkload, GenError> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.task_count();
    let per_dag = spec.tasks_per_dag as usize;
    let scale = spec.deadline_scale;

    let mut periods = Vec::with_capacity(n);
    for _ in 0..spec.n_dags {
        let mut dag: Vec<Duration> = (0..per_dag).map(|_| draw_period(&mut rng, spec)).collect();
        // Upstream tasks never run slower than their consumers.
        dag.sort_unstable();
        periods.extend(dag);
    }
    let ids: Vec<TaskId> = (0..n).map(|i| TaskId(i as u32 + 1)).collect();
    let deadlines: Vec<Duration> = periods.iter().map(|&t| scale.apply(t)).collect();
    // A task may use at most D/T of a worker.
    let caps: Vec<f64> = periods.iter().zip(&deadlines).map(|(&t, &d)| d.min(t) as f64 / t as f64).collect();

    let utils = uunifast_discard(&mut rng, spec.target_utilization, &caps).ok_or_else(|| {
        let tightest = (0..n).min_by(|&a, &b| caps[a].total_cmp(&caps[b])).unwrap_or(0);
        GenError::InfeasibleSpec {
            task: ids[tightest],
            reason: format!(
                "cannot receive a utilization share: U*={} over {n} tasks with D/T as low as {:.3}",
                spec.target_utilization, caps[tightest]
            ),
        }
    })?;

    let mut wcets: Vec<Duration> = Vec::with_capacity(n);
    for i in 0..n {
        let c = ((utils[i] * periods[i] as f64).round() as Duration).max(1);
        if c > deadlines[i] {
            return Err(GenError::InfeasibleSpec {
                task: ids[i],
                reason: format!("rounds to C={c} above its deadline D={}", deadlines[i]),
            });
        }
        wcets.push(c);
    }
    trim_rounding_error(&mut wcets, &periods, &deadlines, spec.target_utilization);

    let mut dags = Vec::with_capacity(spec.n_dags as usize);
    for k in 0..spec.n_dags as usize {
        let dag_id = k as u32 + 1;
        let tasks: Vec<Task> = (0..per_dag)
            .map(|j| {
                let i = k * per_dag + j;
                let mut t = Task::implicit(ids[i].0, dag_id, wcets[i], periods[i]).with_deadline(deadlines[i]);
                t.label = format!("d{dag_id}_t{}", j + 1);
                t
            })
            .collect();
        let edges = layered_edges(&mut rng, &tasks, spec.edge_probability);
        let cap = spec.max_active.get(k).copied().unwrap_or(MaxActive::Unbounded);
        dags.push(DagSpec { dag_id: crate::model::DagId(dag_id), tasks, edges, max_active: cap });
    }
    let workload = Workload { dags, deadline_scale: scale };
    let workload = validate_workload(workload)?.into_inner();
    let achieved = total_utilization(&workload).map(|u| rational_to_f64(&u)).unwrap_or(f64::NAN);
    Ok(GeneratedWorkload { workload, spec: spec.clone(), achieved_utilization: achieved })
}

fn draw_period(rng: &mut ChaCha8Rng, spec: &GenSpec) -> Duration {
    let [lo, hi] = spec.period_range_us;
    match spec.period_mode {
        PeriodMode::Harmonic => {
            let mut chain = vec![lo];
            while let Some(next) = chain.last().unwrap().checked_mul(2).filter(|&v| v <= hi) {
                chain.push(next);
            }
            chain[rng.gen_range(0..chain.len())]
        }
        PeriodMode::NonHarmonic => {
            let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
            let raw = if b > a { rng.gen_range(a..=b).exp() } else { lo as f64 };
            let g = PERIOD_GRANULARITY_US as f64;
            let rounded = ((raw / g).round() * g) as Duration;
            if (lo..=hi).contains(&rounded) {
                rounded
            } else {
                // No multiple of the granularity nearby: fall back to the
                // nearest in-range multiple, or the raw value if none exists.
                let up = lo.div_ceil(PERIOD_GRANULARITY_US) * PERIOD_GRANULARITY_US;
                let down = hi / PERIOD_GRANULARITY_US * PERIOD_GRANULARITY_US;
                if up <= hi && rounded < lo {
                    up
                } else if down >= lo && down > 0 && rounded > hi {
                    down
                } else {
                    (raw.round() as Duration).clamp(lo, hi)
                }
            }
        }
    }
}

/// UUniFast, redrawn whenever a share exceeds its per-task cap.
fn uunifast_discard(rng: &mut ChaCha8Rng, total: f64, caps: &[f64]) -> Option<Vec<f64>> {
    let n = caps.len();
    if total > caps.iter().sum::<f64>() {
        return None;
    }
    for _ in 0..MAX_DRAWS {
        let mut utils = Vec::with_capacity(n);
        let mut sum = total;
        for i in 1..n {
            let next = sum * rng.gen::<f64>().powf(1.0 / (n - i) as f64);
            utils.push(sum - next);
            sum = next;
        }
        utils.push(sum);
        if utils.iter().zip(caps).all(|(u, c)| u <= c) {
            return Some(utils);
        }
    }
    None
}

/// Nudges WCETs by ±1 μs while that moves Σ C/T closer to the target.
fn trim_rounding_error(wcets: &mut [Duration], periods: &[Duration], deadlines: &[Duration], target: f64) {
    let util = |w: &[Duration]| w.iter().zip(periods).map(|(&c, &t)| c as f64 / t as f64).sum::<f64>();
    let mut err = target - util(wcets);
    for _ in 0..10_000 {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..wcets.len() {
            let step = 1.0 / periods[i] as f64;
            let ok = if err > 0.0 { wcets[i] < deadlines[i] } else { wcets[i] > 1 };
            let after = if err > 0.0 { err - step } else { err + step };
            if ok && after.abs() < err.abs() && best.is_none_or(|(_, b)| after.abs() < b.abs()) {
                best = Some((i, after));
            }
        }
        let Some((i, after)) = best else { break };
        if err > 0.0 {
            wcets[i] += 1;
        } else {
            wcets[i] -= 1;
        }
        err = after;
    }
}

/// Partitions the tasks into ⌈√n⌉ contiguous layers and keeps each
/// layer-to-next-layer edge with probability `p`.
fn layered_edges(rng: &mut ChaCha8Rng, tasks: &[Task], p: f64) -> Vec<(TaskId, TaskId)> {
    let layers = layer_sizes(tasks.len());
    let mut bounds = Vec::with_capacity(layers.len());
    let mut start = 0;
    for size in layers {
        bounds.push(start..start + size);
        start += size;
    }
    let mut edges = Vec::new();
    for pair in bounds.windows(2) {
        for a in pair[0].clone() {
            for b in pair[1].clone() {
                if rng.gen_bool(p) {
                    edges.push((tasks[a].id, tasks[b].id));
                }
            }
        }
    }
    edges
}

/// Sizes of ⌈√n⌉ layers, as even as possible with larger layers first.
pub fn layer_sizes(n: usize) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let l = (n as f64).sqrt().ceil() as usize;
    (0..l).map(|i| n / l + usize::from(i < n % l)).collect()
}

/// Named regimes used by the command-line tools and the experiments.
///
/// | preset            | periods      | U*  | DAGs × tasks | range          | caps   |
/// |-------------------|--------------|-----|--------------|----------------|--------|
/// | `single_baseline` | harmonic     | 0.6 | 2 × 5        | 10 ms – 160 ms | none   |
/// | `multi_baseline`  | non-harmonic | 0.8 | 2 × 5        | 5 ms – 100 ms  | none   |
/// | `sweep_default`   | non-harmonic | 3.2 | 2 × 12       | 1 ms – 1 s     | (2, 2) |
///
/// `sweep_default` loads four workers to 80 % each. Its wide period range
/// (a 1 kHz loop down to a 1 Hz planner) means most jobs come from high-rate
/// tasks, which is where dispatch order matters.
pub fn presets() -> Vec<(&'static str, GenSpec)> {
    let base = GenSpec {
        seed: 1,
        n_dags: 2,
        tasks_per_dag: 5,
        target_utilization: 0.6,
        period_mode: PeriodMode::Harmonic,
        period_range_us: [10_000, 160_000],
        edge_probability: 0.5,
        max_active: Vec::new(),
        deadline_scale: DeadlineScale::ONE,
    };
    vec![
        ("single_baseline", base.clone()),
        (
            "multi_baseline",
            GenSpec {
                target_utilization: 0.8,
                period_mode: PeriodMode::NonHarmonic,
                period_range_us: [5_000, 100_000],
                ..base.clone()
            },
        ),
        (
            "sweep_default",
            GenSpec {
                tasks_per_dag: 12,
                target_utilization: 3.2,
                period_mode: PeriodMode::NonHarmonic,
                period_range_us: [1_000, 1_000_000],
                max_active: vec![MaxActive::Bounded(2), MaxActive::Bounded(2)],
                ..base
            },
        ),
    ]
}

pub fn preset(name: &str) -> Option<GenSpec> {
    presets().into_iter().find(|(n, _)| *n == name).map(|(_, s)| s)
}
