use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{mean, median, relative_reduction, run_once, HorizonPolicy};
use crate::file::{load_workload, FileError};
use crate::gen::{generate_workload, preset, GenError, GenSpec};
use crate::metrics::{fmt_opt_f64, fmt_opt_u64};
use crate::model::{scale_deadlines, validate_workload, with_caps, DeadlineScale, MaxActive, Workload};
use crate::sim::Policy;

pub const RESULTS_HEADER: &str = "seed,policy,workers,deadline_scale,cap1,cap2,dag1_mr,dag2_mr,combined_mr,max_lateness_us,mean_response_us,p50_us,p95_us,p99_us,all_enforced,deferred,executed,censored,error";

fn default_seeds() -> Vec<u64> {
    (1..=5).collect()
}

fn default_workers() -> Vec<u32> {
    vec![4, 6, 8, 10]
}

fn default_scales() -> Vec<DeadlineScale> {
    ["0.8", "0.9", "1.1", "1.2"].iter().map(|s| DeadlineScale::parse(s).expect("literal")).collect()
}

fn default_pairs() -> Vec<[MaxActive; 2]> {
    let caps = [2, 3, 5].map(MaxActive::Bounded);
    caps.iter().flat_map(|&a| caps.iter().map(move |&b| [a, b])).collect()
}

fn default_policies() -> Vec<Policy> {
    vec![Policy::RatePriority]
}

/// A sweep: the cartesian product of policies, worker counts, deadline
/// scales, cap pairs and seeds.
///
/// With `base_spec` every seed generates a fresh workload; with `workload`
/// the same file is used for all seeds. Omitting both uses the
/// `sweep_default` preset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub base_spec: Option<GenSpec>,
    #[serde(default)]
    pub workload: Option<PathBuf>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_workers")]
    pub worker_counts: Vec<u32>,
    #[serde(default = "default_scales")]
    pub deadline_scales: Vec<DeadlineScale>,
    #[serde(default = "default_pairs")]
    pub concurrency_pairs: Vec<[MaxActive; 2]>,
    #[serde(default = "default_policies")]
    pub policies: Vec<Policy>,
    #[serde(default)]
    pub horizon: HorizonPolicy,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            base_spec: None,
            workload: None,
            seeds: default_seeds(),
            worker_counts: default_workers(),
            deadline_scales: default_scales(),
            concurrency_pairs: default_pairs(),
            policies: default_policies(),
            horizon: HorizonPolicy::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep config: {0}")]
    Config(String),
    #[error(transparent)]
    File(#[from] FileError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Clone, Debug)]
pub enum SweepBase {
    Generated(GenSpec),
    Fixed(Workload),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Cell {
    policy: Policy,
    workers: u32,
    scale: DeadlineScale,
    caps: [MaxActive; 2],
    seed: u64,
}

impl SweepConfig {
    pub fn check(&self) -> Result<(), SweepError> {
        let bad = |m: &str| Err(SweepError::Config(m.to_string()));
        if self.base_spec.is_some() && self.workload.is_some() {
            return bad("give either base_spec or workload, not both");
        }
        if self.seeds.is_empty() || self.worker_counts.is_empty() || self.deadline_scales.is_empty() {
            return bad("seeds, worker_counts and deadline_scales must be non-empty");
        }
        if self.concurrency_pairs.is_empty() || self.policies.is_empty() {
            return bad("concurrency_pairs and policies must be non-empty");
        }
        if self.worker_counts.contains(&0) {
            return bad("worker counts must be positive");
        }
        Ok(())
    }

    /// Resolves the workload source; relative paths are taken from `root`.
    pub fn base(&self, root: &Path) -> Result<SweepBase, SweepError> {
        match (&self.base_spec, &self.workload) {
            (_, Some(path)) => Ok(SweepBase::Fixed(load_workload(&root.join(path))?.workload)),
            (Some(spec), None) => Ok(SweepBase::Generated(spec.clone())),
            (None, None) => Ok(SweepBase::Generated(preset("sweep_default").expect("built-in preset"))),
        }
    }

    fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &policy in &self.policies {
            // A single-threaded executor ignores the worker count.
            let workers: Vec<u32> =
                if policy == Policy::FifoSingle { vec![1] } else { dedup(self.worker_counts.clone()) };
            for &w in &workers {
                for &scale in &dedup(self.deadline_scales.clone()) {
                    for &caps in &dedup(self.concurrency_pairs.clone()) {
                        for &seed in &dedup(self.seeds.clone()) {
                            out.push(Cell { policy, workers: w, scale, caps, seed });
                        }
                    }
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }

    /// Number of simulations the sweep will run.
    pub fn cell_count(&self) -> usize {
        self.cells().len()
    }
}

fn dedup<T: Ord>(mut v: Vec<T>) -> Vec<T> {
    v.sort();
    v.dedup();
    v
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub seed: u64,
    pub policy: Policy,
    pub workers: u32,
    pub deadline_scale: DeadlineScale,
    pub cap1: MaxActive,
    pub cap2: MaxActive,
    pub dag1_mr: Option<f64>,
    pub dag2_mr: Option<f64>,
    pub combined_mr: Option<f64>,
    pub max_lateness_us: Option<u64>,
    pub mean_response_us: Option<f64>,
    pub p50_us: Option<u64>,
    pub p95_us: Option<u64>,
    pub p99_us: Option<u64>,
    /// From the independent trace replay.
    pub all_enforced: Option<bool>,
    pub deferred: u64,
    pub executed: u64,
    pub censored: u64,
    pub error: Option<String>,
}

impl SweepRow {
    fn empty(cell: &Cell, error: String) -> SweepRow {
        SweepRow {
            seed: cell.seed,
            policy: cell.policy,
            workers: cell.workers,
            deadline_scale: cell.scale,
            cap1: cell.caps[0],
            cap2: cell.caps[1],
            dag1_mr: None,
            dag2_mr: None,
            combined_mr: None,
            max_lateness_us: None,
            mean_response_us: None,
            p50_us: None,
            p95_us: None,
            p99_us: None,
            all_enforced: None,
            deferred: 0,
            executed: 0,
            censored: 0,
            error: Some(error),
        }
    }

    pub fn to_csv_line(&self) -> String {
        let error = self.error.as_deref().unwrap_or("").replace([',', '\n', '\r'], ";");
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.seed,
            self.policy,
            self.workers,
            self.deadline_scale,
            self.cap1,
            self.cap2,
            fmt_opt_f64(self.dag1_mr, 6),
            fmt_opt_f64(self.dag2_mr, 6),
            fmt_opt_f64(self.combined_mr, 6),
            fmt_opt_u64(self.max_lateness_us),
            fmt_opt_f64(self.mean_response_us, 3),
            fmt_opt_u64(self.p50_us),
            fmt_opt_u64(self.p95_us),
            fmt_opt_u64(self.p99_us),
            self.all_enforced.map_or(String::new(), |b| u8::from(b).to_string()),
            self.deferred,
            self.executed,
            self.censored,
            error
        )
    }
}

#[derive(Clone, Debug)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
}

impl SweepOutput {
    pub fn results_csv(&self) -> String {
        let mut s = String::from(RESULTS_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.to_csv_line());
            s.push('\n');
        }
        s
    }

    pub fn ok_rows(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.error.is_none())
    }
}

/// Runs every cell (in parallel) and returns rows in parameter order.
/// Failures are recorded on their row; the sweep always completes.
pub fn run_sweep(cfg: &SweepConfig, base: &SweepBase) -> Result<SweepOutput, SweepError> {
    cfg.check()?;
    let cells = cfg.cells();
    let one = DeadlineScale::ONE;
    let tightest = cfg.deadline_scales.iter().copied().min().unwrap_or(one).min(one);

    // One base workload per seed, generated with the tightest scale so that
    // every deadline variant stays feasible.
    let seeds = dedup(cfg.seeds.clone());
    let workloads: BTreeMap<u64, Result<Workload, String>> = seeds
        .par_iter()
        .map(|&seed| {
            let w = match base {
                SweepBase::Fixed(w) => Ok(w.clone()),
                SweepBase::Generated(spec) => {
                    let mut spec = spec.clone().with_seed(seed);
                    spec.deadline_scale = spec.deadline_scale.min(tightest);
                    generate_workload(&spec).map(|g| g.workload).map_err(|e: GenError| e.to_string())
                }
            };
            (seed, w)
        })
        .collect();

    let mut rows: Vec<SweepRow> = cells
        .par_iter()
        .map(|cell| match &workloads[&cell.seed] {
            Err(e) => SweepRow::empty(cell, e.clone()),
            Ok(w) => run_cell(cell, w, &cfg.horizon).unwrap_or_else(|e| SweepRow::empty(cell, e)),
        })
        .collect();
    rows.sort_by(|a, b| {
        (a.policy, a.workers, a.deadline_scale, a.cap1, a.cap2, a.seed).cmp(&(
            b.policy,
            b.workers,
            b.deadline_scale,
            b.cap1,
            b.cap2,
            b.seed,
        ))
    });
    Ok(SweepOutput { rows })
}

fn run_cell(cell: &Cell, base: &Workload, horizon: &HorizonPolicy) -> Result<SweepRow, String> {
    let scaled = scale_deadlines(base, cell.scale).map_err(|e| e.to_string())?;
    let w = validate_workload(with_caps(&scaled, &cell.caps)).map_err(|e| e.to_string())?;
    let run = run_once(&w, cell.policy, cell.workers, horizon).map_err(|e| e.to_string())?;
    let dag_mr = |i: usize| run.metrics.per_dag.get(i).and_then(|d| d.summary.miss_rate);
    let c = &run.metrics.combined;
    Ok(SweepRow {
        dag1_mr: dag_mr(0),
        dag2_mr: dag_mr(1),
        combined_mr: c.miss_rate,
        max_lateness_us: c.max_lateness_us,
        mean_response_us: c.mean_response_us,
        p50_us: c.p50_us,
        p95_us: c.p95_us,
        p99_us: c.p99_us,
        all_enforced: Some(run.enforcement.all_enforced),
        deferred: run.trace.total_deferred(),
        executed: run.trace.total_executed(),
        censored: c.censored,
        error: None,
        ..SweepRow::empty(cell, String::new())
    })
}

fn collect<'a>(rows: impl Iterator<Item = &'a &'a SweepRow>, f: impl Fn(&SweepRow) -> Option<f64>) -> Vec<f64> {
    rows.filter_map(|r| f(r)).collect()
}

/// Aggregate tables as `(file name, CSV body)`, all derived from the rows.
pub fn aggregate_tables(out: &SweepOutput) -> Vec<(&'static str, String)> {
    let ok: Vec<&SweepRow> = out.ok_rows().collect();
    let f6 = |v: Option<f64>| fmt_opt_f64(v, 6);

    // Combined MR against worker count, with the reduction relative to the
    // smallest worker count of the same policy.
    let mut by_workers: BTreeMap<(Policy, u32), Vec<&SweepRow>> = BTreeMap::new();
    for r in &ok {
        by_workers.entry((r.policy, r.workers)).or_default().push(r);
    }
    let mut workers_csv = String::from(
        "policy,workers,rows,mean_dag1_mr,mean_dag2_mr,mean_combined_mr,median_combined_mr,rel_reduction_vs_min_workers\n",
    );
    let mut first_mean: BTreeMap<Policy, Option<f64>> = BTreeMap::new();
    for ((policy, workers), rows) in &by_workers {
        let m = mean(&collect(rows.iter(), |r| r.combined_mr));
        let base = *first_mean.entry(*policy).or_insert(m);
        let red = base.zip(m).and_then(|(b, m)| relative_reduction(b, m));
        let _ = writeln!(
            workers_csv,
            "{policy},{workers},{},{},{},{},{},{}",
            rows.len(),
            f6(mean(&collect(rows.iter(), |r| r.dag1_mr))),
            f6(mean(&collect(rows.iter(), |r| r.dag2_mr))),
            f6(m),
            f6(median(&collect(rows.iter(), |r| r.combined_mr))),
            f6(red)
        );
    }

    let mut by_scale: BTreeMap<(Policy, DeadlineScale), Vec<&SweepRow>> = BTreeMap::new();
    for r in &ok {
        by_scale.entry((r.policy, r.deadline_scale)).or_default().push(r);
    }
    let mut scale_csv = String::from(
        "policy,deadline_scale,rows,mean_dag1_mr,mean_dag2_mr,mean_combined_mr,median_combined_mr,mean_max_lateness_us\n",
    );
    for ((policy, scale), rows) in &by_scale {
        let _ = writeln!(
            scale_csv,
            "{policy},{scale},{},{},{},{},{},{}",
            rows.len(),
            f6(mean(&collect(rows.iter(), |r| r.dag1_mr))),
            f6(mean(&collect(rows.iter(), |r| r.dag2_mr))),
            f6(mean(&collect(rows.iter(), |r| r.combined_mr))),
            f6(median(&collect(rows.iter(), |r| r.combined_mr))),
            fmt_opt_f64(mean(&collect(rows.iter(), |r| r.max_lateness_us.map(|v| v as f64))), 3)
        );
    }

    // Cap-pair heatmap, with the improvement over the worst pair.
    let mut by_caps: BTreeMap<(Policy, MaxActive, MaxActive), Vec<&SweepRow>> = BTreeMap::new();
    for r in &ok {
        by_caps.entry((r.policy, r.cap1, r.cap2)).or_default().push(r);
    }
    let cap_means: BTreeMap<_, Option<f64>> =
        by_caps.iter().map(|(k, rows)| (*k, mean(&collect(rows.iter(), |r| r.combined_mr)))).collect();
    let mut heat_csv =
        String::from("policy,cap1,cap2,rows,mean_combined_mr,median_combined_mr,rel_improvement_vs_worst_pair\n");
    for ((policy, c1, c2), rows) in &by_caps {
        let worst =
            cap_means.iter().filter(|((p, _, _), _)| p == policy).filter_map(|(_, m)| *m).max_by(f64::total_cmp);
        let m = cap_means[&(*policy, *c1, *c2)];
        let _ = writeln!(
            heat_csv,
            "{policy},{c1},{c2},{},{},{},{}",
            rows.len(),
            f6(m),
            f6(median(&collect(rows.iter(), |r| r.combined_mr))),
            f6(worst.zip(m).and_then(|(w, m)| relative_reduction(w, m)))
        );
    }

    // Per-policy summary with reductions relative to the multi-threaded FIFO.
    let mut by_policy: BTreeMap<Policy, Vec<&SweepRow>> = BTreeMap::new();
    for r in &ok {
        by_policy.entry(r.policy).or_default().push(r);
    }
    let policy_stats: BTreeMap<Policy, (Option<f64>, Option<f64>)> = by_policy
        .iter()
        .map(|(p, rows)| {
            (
                *p,
                (
                    mean(&collect(rows.iter(), |r| r.combined_mr)),
                    mean(&collect(rows.iter(), |r| r.p99_us.map(|v| v as f64))),
                ),
            )
        })
        .collect();
    let reference = policy_stats.get(&Policy::FifoMulti).copied();
    let mut policy_csv = String::from(
        "policy,rows,mean_combined_mr,median_combined_mr,mean_p99_us,mr_rel_reduction_vs_fifo_multi,p99_rel_reduction_vs_fifo_multi\n",
    );
    for (policy, rows) in &by_policy {
        let (mr, p99) = policy_stats[policy];
        let vs = |base: Option<f64>, new: Option<f64>| base.zip(new).and_then(|(b, n)| relative_reduction(b, n));
        let _ = writeln!(
            policy_csv,
            "{policy},{},{},{},{},{},{}",
            rows.len(),
            f6(mr),
            f6(median(&collect(rows.iter(), |r| r.combined_mr))),
            fmt_opt_f64(p99, 3),
            f6(reference.and_then(|(b, _)| vs(b, mr))),
            f6(reference.and_then(|(_, b)| vs(b, p99)))
        );
    }

    vec![
        ("mr_vs_workers.csv", workers_csv),
        ("mr_vs_scale.csv", scale_csv),
        ("cap_heatmap.csv", heat_csv),
        ("policy_summary.csv", policy_csv),
    ]
}

/// Writes `results.csv` plus every aggregate table into `dir`.
pub fn write_sweep_outputs(dir: &Path, out: &SweepOutput) -> Result<Vec<PathBuf>, SweepError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| SweepError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut files = vec![("results.csv", out.results_csv())];
    files.extend(aggregate_tables(out));
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).map_err(io(&path))?;
        written.push(path);
    }
    Ok(written)
}
