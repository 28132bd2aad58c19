//! Experiment drivers: single runs with on-disk artifacts, three-way policy
//! comparison, and parameter sweeps with aggregate tables.

mod sweep;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use sweep::{
    aggregate_tables, run_sweep, write_sweep_outputs, SweepBase, SweepConfig, SweepError, SweepOutput, SweepRow,
    RESULTS_HEADER,
};

use crate::file::{to_json_string, WorkloadDocument};
use crate::metrics::{fmt_opt_f64, fmt_opt_u64, metrics_report, MetricsReport};
use crate::model::{assign_rm_priorities, hyperperiod, Duration, ValidatedWorkload};
use crate::sim::{simulate, verify_enforcement, EnforcementReport, Horizon, Policy, SimConfig, SimError, SimTrace};

/// `k` hyperperiods, truncated to `cap_us` when the hyperperiod is longer.
/// The default is one hyperperiod capped at two seconds of simulated time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HorizonPolicy {
    pub hyperperiods: u32,
    pub cap_us: Duration,
}

impl Default for HorizonPolicy {
    fn default() -> Self {
        HorizonPolicy { hyperperiods: 1, cap_us: 2_000_000 }
    }
}

impl HorizonPolicy {
    /// The horizon in microseconds, and whether it was truncated.
    pub fn resolve(&self, w: &ValidatedWorkload) -> (Duration, bool) {
        let k = self.hyperperiods.max(1) as u64;
        match hyperperiod(w.workload(), self.cap_us).ok().and_then(|h| h.checked_mul(k)) {
            Some(h) if h <= self.cap_us => (h, false),
            _ => (self.cap_us, true),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub trace: SimTrace,
    pub metrics: MetricsReport,
    /// Recomputed from the event log, independent of the simulator.
    pub enforcement: EnforcementReport,
    pub truncated: bool,
}

impl RunOutcome {
    pub fn summary_line(&self) -> String {
        let c = &self.metrics.combined;
        format!(
            "policy={} workers={} horizon_us={}{} jobs={} censored={} MR={} L_max_us={} p99_us={} all_enforced={}",
            self.trace.policy,
            self.trace.workers,
            self.trace.horizon_us,
            if self.truncated { " (truncated)" } else { "" },
            c.jobs,
            c.censored,
            fmt_opt_f64(c.miss_rate, 6),
            fmt_opt_u64(c.max_lateness_us),
            fmt_opt_u64(c.p99_us),
            u8::from(self.enforcement.all_enforced)
        )
    }
}

pub fn run_once(
    w: &ValidatedWorkload,
    policy: Policy,
    workers: u32,
    horizon: &HorizonPolicy,
) -> Result<RunOutcome, SimError> {
    let (h, truncated) = horizon.resolve(w);
    let mut cfg = SimConfig::new(policy, workers).with_horizon(Horizon::Fixed(h));
    cfg.max_horizon_us = cfg.max_horizon_us.max(h);
    let pm = assign_rm_priorities(w);
    let trace = simulate(w, &cfg, &pm)?;
    let enforcement = verify_enforcement(&trace.events, w.workload())?;
    let metrics = metrics_report(&trace, w.workload());
    Ok(RunOutcome { trace, metrics, enforcement, truncated })
}

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Content hash of everything that determines a run's output.
pub fn run_id(w: &ValidatedWorkload, policy: Policy, workers: u32, horizon: &HorizonPolicy) -> String {
    let mut h = Sha256::new();
    h.update(to_json_string(&WorkloadDocument::new(w.workload().clone())));
    h.update(format!("policy={policy};workers={workers};k={};cap={}", horizon.hyperperiods, horizon.cap_us));
    hex::encode(&h.finalize()[..8])
}

/// Writes `jobs.csv`, `metrics.csv`, `metrics.json` and optionally
/// `trace.jsonl` into `dir`.
pub fn write_run_artifacts(dir: &Path, run: &RunOutcome, with_trace: bool) -> Result<Vec<PathBuf>, ArtifactError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ArtifactError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut files = vec![
        (dir.join("jobs.csv"), run.trace.jobs_csv()),
        (dir.join("metrics.csv"), run.metrics.to_csv()),
        (dir.join("metrics.json"), serde_json::to_string_pretty(&run.metrics).expect("metrics serialize") + "\n"),
    ];
    if with_trace {
        files.push((dir.join("trace.jsonl"), run.trace.events_jsonl()));
    }
    let mut written = Vec::new();
    for (path, body) in files {
        fs::write(&path, body).map_err(io(&path))?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareRow {
    pub policy: Policy,
    pub workers: u32,
    pub combined_mr: Option<f64>,
    pub dag_mean_mr: Option<f64>,
    pub max_lateness_us: Option<u64>,
    pub mean_response_us: Option<f64>,
    pub p50_us: Option<u64>,
    pub p95_us: Option<u64>,
    pub p99_us: Option<u64>,
    /// `(MR_base − MR_rate) / MR_base` on baseline rows.
    pub mr_improvement: Option<f64>,
    pub p99_improvement: Option<f64>,
}

/// Relative reduction `(base − new) / base`; zero when both are zero.
pub fn relative_reduction(base: f64, new: f64) -> Option<f64> {
    if base == 0.0 {
        (new == 0.0).then_some(0.0)
    } else {
        Some((base - new) / base)
    }
}

/// Runs every policy on the same workload and horizon.
pub fn compare_policies(
    w: &ValidatedWorkload,
    workers: u32,
    horizon: &HorizonPolicy,
) -> Result<Vec<CompareRow>, SimError> {
    let runs: Vec<RunOutcome> =
        Policy::ALL.iter().map(|&p| run_once(w, p, workers, horizon)).collect::<Result<_, _>>()?;
    let rate = &runs[0].metrics.combined;
    Ok(runs
        .iter()
        .map(|run| {
            let c = &run.metrics.combined;
            let baseline = run.trace.policy != Policy::RatePriority;
            let improve = |base: Option<f64>, new: Option<f64>| match (baseline, base, new) {
                (true, Some(b), Some(n)) => relative_reduction(b, n),
                _ => None,
            };
            CompareRow {
                policy: run.trace.policy,
                workers: run.trace.workers,
                combined_mr: c.miss_rate,
                dag_mean_mr: run.metrics.dag_mean_miss_rate,
                max_lateness_us: c.max_lateness_us,
                mean_response_us: c.mean_response_us,
                p50_us: c.p50_us,
                p95_us: c.p95_us,
                p99_us: c.p99_us,
                mr_improvement: improve(c.miss_rate, rate.miss_rate),
                p99_improvement: improve(c.p99_us.map(|v| v as f64), rate.p99_us.map(|v| v as f64)),
            }
        })
        .collect())
}

pub fn compare_csv(rows: &[CompareRow]) -> String {
    let mut s = String::from(
        "policy,workers,combined_mr,dag_mean_mr,max_lateness_us,mean_response_us,p50_us,p95_us,p99_us,mr_improvement,p99_improvement\n",
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.policy,
            r.workers,
            fmt_opt_f64(r.combined_mr, 6),
            fmt_opt_f64(r.dag_mean_mr, 6),
            fmt_opt_u64(r.max_lateness_us),
            fmt_opt_f64(r.mean_response_us, 3),
            fmt_opt_u64(r.p50_us),
            fmt_opt_u64(r.p95_us),
            fmt_opt_u64(r.p99_us),
            fmt_opt_f64(r.mr_improvement, 6),
            fmt_opt_f64(r.p99_improvement, 6)
        );
    }
    s
}

pub(crate) fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Midpoint median (average of the two middle values for even counts).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}
