//! Empirical timing metrics over per-job records.
//!
//! Lateness is `f − d`; a job misses its deadline only when lateness is
//! strictly positive. Censored jobs (unfinished at the horizon) are left out
//! of every statistic and counted separately. Percentiles use the
//! nearest-rank method: the `⌈q·n⌉`-th smallest sample.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::model::{DagId, TaskId, Workload};
use crate::sim::{JobRecord, SimTrace};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("job {}#{} has not completed", .0.0, .1)]
    IncompleteJob(TaskId, u32),
    #[error("no completed jobs")]
    NoJobs,
}

pub fn job_lateness(job: &JobRecord) -> Result<i64, MetricsError> {
    job.lateness_us().ok_or(MetricsError::IncompleteJob(job.task_id, job.instance))
}

/// `max_k max(0, L_k)`.
pub fn max_lateness_of(latenesses: &[i64]) -> Result<u64, MetricsError> {
    latenesses.iter().map(|&l| l.max(0) as u64).max().ok_or(MetricsError::NoJobs)
}

pub fn max_lateness<'a>(jobs: impl IntoIterator<Item = &'a JobRecord>) -> Result<u64, MetricsError> {
    max_lateness_of(&completed_lateness(jobs))
}

/// Misses over completed jobs, kept as an exact fraction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct MissRate {
    pub misses: u64,
    pub jobs: u64,
}

impl MissRate {
    pub fn value(self) -> f64 {
        if self.jobs == 0 {
            f64::NAN
        } else {
            self.misses as f64 / self.jobs as f64
        }
    }

    fn add(self, other: MissRate) -> MissRate {
        MissRate { misses: self.misses + other.misses, jobs: self.jobs + other.jobs }
    }
}

pub fn miss_rate_of(latenesses: &[i64]) -> Result<MissRate, MetricsError> {
    if latenesses.is_empty() {
        return Err(MetricsError::NoJobs);
    }
    Ok(MissRate { misses: latenesses.iter().filter(|&&l| l > 0).count() as u64, jobs: latenesses.len() as u64 })
}

pub fn miss_rate<'a>(jobs: impl IntoIterator<Item = &'a JobRecord>) -> Result<MissRate, MetricsError> {
    miss_rate_of(&completed_lateness(jobs))
}

/// Job-weighted: total misses over total completed jobs across every set.
pub fn combined_miss_rate(per_dag: &[MissRate]) -> Result<MissRate, MetricsError> {
    let total = per_dag.iter().fold(MissRate::default(), |acc, &m| acc.add(m));
    if total.jobs == 0 {
        Err(MetricsError::NoJobs)
    } else {
        Ok(total)
    }
}

/// Unweighted mean of the per-DAG miss rates that have at least one job.
pub fn mean_dag_miss_rate(per_dag: &[MissRate]) -> Option<f64> {
    let rates: Vec<f64> = per_dag.iter().filter(|m| m.jobs > 0).map(|m| m.value()).collect();
    (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64)
}

/// Nearest-rank percentile of an already sorted sample.
pub fn nearest_rank(sorted: &[u64], q: f64) -> Result<u64, MetricsError> {
    if sorted.is_empty() {
        return Err(MetricsError::NoJobs);
    }
    let n = sorted.len();
    // Tolerance absorbs binary noise such as 0.07 * 100 = 7.000000000000001.
    let rank = (q * n as f64 - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    Ok(sorted[rank - 1])
}

pub fn percentiles_of(samples: &[u64], quantiles: &[f64]) -> Result<Vec<u64>, MetricsError> {
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    quantiles.iter().map(|&q| nearest_rank(&sorted, q)).collect()
}

pub fn response_percentiles<'a>(
    jobs: impl IntoIterator<Item = &'a JobRecord>,
    quantiles: &[f64],
) -> Result<Vec<u64>, MetricsError> {
    percentiles_of(&responses(jobs), quantiles)
}

/// Empirical CDF as `(response, fraction ≤ response)`.
///
/// With `n_points = None` the table has one row per distinct response. With
/// `Some(k)` it is sampled at the quantiles `1/k, 2/k, …, 1`.
pub fn cdf_of(samples: &[u64], n_points: Option<usize>) -> Result<Vec<(u64, f64)>, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::NoJobs);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as f64;
    match n_points {
        None => {
            let mut out: Vec<(u64, f64)> = Vec::new();
            for (i, &v) in sorted.iter().enumerate() {
                let frac = (i + 1) as f64 / n;
                match out.last_mut() {
                    Some(last) if last.0 == v => last.1 = frac,
                    _ => out.push((v, frac)),
                }
            }
            Ok(out)
        }
        Some(k) => {
            let k = k.max(1);
            (1..=k)
                .map(|i| {
                    let q = i as f64 / k as f64;
                    nearest_rank(&sorted, q).map(|v| (v, q))
                })
                .collect()
        }
    }
}

pub fn cdf_table<'a>(
    jobs: impl IntoIterator<Item = &'a JobRecord>,
    n_points: Option<usize>,
) -> Result<Vec<(u64, f64)>, MetricsError> {
    cdf_of(&responses(jobs), n_points)
}

pub fn cdf_csv(table: &[(u64, f64)]) -> String {
    let mut s = String::from("response_us,cumulative_fraction\n");
    for (v, f) in table {
        let _ = writeln!(s, "{v},{f:.6}");
    }
    s
}

fn completed_lateness<'a>(jobs: impl IntoIterator<Item = &'a JobRecord>) -> Vec<i64> {
    jobs.into_iter().filter_map(JobRecord::lateness_us).collect()
}

fn responses<'a>(jobs: impl IntoIterator<Item = &'a JobRecord>) -> Vec<u64> {
    jobs.into_iter().filter_map(JobRecord::response_us).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub jobs: u64,
    pub misses: u64,
    pub miss_rate: Option<f64>,
    pub max_lateness_us: Option<u64>,
    pub mean_response_us: Option<f64>,
    pub p50_us: Option<u64>,
    pub p95_us: Option<u64>,
    pub p99_us: Option<u64>,
    pub censored: u64,
}

impl Summary {
    pub fn of<'a>(jobs: impl IntoIterator<Item = &'a JobRecord>) -> Summary {
        let mut censored = 0;
        let mut done = Vec::new();
        for j in jobs {
            if j.is_complete() {
                done.push(j);
            } else {
                censored += 1;
            }
        }
        let rate = miss_rate(done.iter().copied()).ok();
        let resp = responses(done.iter().copied());
        let pct = percentiles_of(&resp, &[0.50, 0.95, 0.99]).ok();
        Summary {
            jobs: done.len() as u64,
            misses: rate.map_or(0, |r| r.misses),
            miss_rate: rate.map(MissRate::value),
            max_lateness_us: max_lateness(done.iter().copied()).ok(),
            mean_response_us: (!resp.is_empty()).then(|| resp.iter().sum::<u64>() as f64 / resp.len() as f64),
            p50_us: pct.as_ref().map(|p| p[0]),
            p95_us: pct.as_ref().map(|p| p[1]),
            p99_us: pct.as_ref().map(|p| p[2]),
            censored,
        }
    }

    pub fn miss(&self) -> MissRate {
        MissRate { misses: self.misses, jobs: self.jobs }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TaskSummary {
    pub task_id: TaskId,
    pub dag_id: DagId,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DagSummary {
    pub dag_id: DagId,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub percentile_method: &'static str,
    pub per_task: Vec<TaskSummary>,
    pub per_dag: Vec<DagSummary>,
    /// Job-weighted over all DAGs.
    pub combined: Summary,
    /// Unweighted mean of the per-DAG miss rates.
    pub dag_mean_miss_rate: Option<f64>,
}

pub fn metrics_report(trace: &SimTrace, w: &Workload) -> MetricsReport {
    let mut by_task: BTreeMap<TaskId, Vec<&JobRecord>> = BTreeMap::new();
    let mut by_dag: BTreeMap<DagId, Vec<&JobRecord>> = BTreeMap::new();
    for j in &trace.jobs {
        by_task.entry(j.task_id).or_default().push(j);
        by_dag.entry(j.dag_id).or_default().push(j);
    }
    let per_task = w
        .tasks()
        .map(|t| TaskSummary {
            task_id: t.id,
            dag_id: t.dag_id,
            summary: Summary::of(by_task.get(&t.id).into_iter().flatten().copied()),
        })
        .collect();
    let per_dag: Vec<DagSummary> = w
        .dags
        .iter()
        .map(|d| DagSummary {
            dag_id: d.dag_id,
            summary: Summary::of(by_dag.get(&d.dag_id).into_iter().flatten().copied()),
        })
        .collect();
    let dag_rates: Vec<MissRate> = per_dag.iter().map(|d| d.summary.miss()).collect();
    MetricsReport {
        percentile_method: "nearest-rank",
        per_task,
        dag_mean_miss_rate: mean_dag_miss_rate(&dag_rates),
        per_dag,
        combined: Summary::of(&trace.jobs),
    }
}

pub fn fmt_opt_f64(v: Option<f64>, decimals: usize) -> String {
    v.map(|v| format!("{v:.decimals$}")).unwrap_or_default()
}

pub fn fmt_opt_u64(v: Option<u64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl MetricsReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "scope,id,jobs,misses,miss_rate,max_lateness_us,mean_response_us,p50_us,p95_us,p99_us,censored\n",
        );
        let mut row = |scope: &str, id: String, m: &Summary| {
            let _ = writeln!(
                s,
                "{scope},{id},{},{},{},{},{},{},{},{},{}",
                m.jobs,
                m.misses,
                fmt_opt_f64(m.miss_rate, 6),
                fmt_opt_u64(m.max_lateness_us),
                fmt_opt_f64(m.mean_response_us, 3),
                fmt_opt_u64(m.p50_us),
                fmt_opt_u64(m.p95_us),
                fmt_opt_u64(m.p99_us),
                m.censored
            );
        };
        for t in &self.per_task {
            row("task", t.task_id.0.to_string(), &t.summary);
        }
        for d in &self.per_dag {
            row("dag", d.dag_id.0.to_string(), &d.summary);
        }
        row("combined", "all".into(), &self.combined);
        let _ = writeln!(s, "combined_dag_mean,all,,,{},,,,,,", fmt_opt_f64(self.dag_mean_miss_rate, 6));
        s
    }
}
