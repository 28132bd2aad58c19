//! `multidag`: generate workloads, simulate executors, sweep parameters and
//! check schedulability from the command line.
//!
//! Exit codes: 0 success, 1 input error, 2 unschedulable (`analyze` only),
//! 3 internal invariant violation or cap violation found in a trace.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use multidag_core::analysis::{schedulability_report, Overall, RtaVerdict};
use multidag_core::experiment::{
    compare_csv, compare_policies, run_id, run_once, run_sweep, write_run_artifacts, write_sweep_outputs,
    HorizonPolicy, SweepConfig,
};
use multidag_core::file::{load_validated, load_workload, save_workload};
use multidag_core::gen::{generate_workload, preset, presets, GenSpec, PeriodMode};
use multidag_core::model::{hyperperiod, DeadlineScale, MaxActive};
use multidag_core::sim::{read_events_jsonl, verify_enforcement, Policy, SimError};

const EXIT_INPUT: u8 = 1;
const EXIT_UNSCHEDULABLE: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

#[derive(Parser)]
#[command(name = "multidag", version, about = "Multi-DAG rate-priority executor experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic workload file.
    Gen(GenArgs),
    /// Simulate one workload under one policy and write per-run artifacts.
    Run(RunArgs),
    /// Run a parameter sweep described by a JSON config.
    Sweep(SweepArgs),
    /// Run all three policies on the same workload.
    Compare(CompareArgs),
    /// Rate-monotonic schedulability report (exit 2 if any task fails).
    Analyze(AnalyzeArgs),
    /// Replay a trace against the workload's concurrency caps.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Start from a named preset; other flags override its fields.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dags: Option<u32>,
    #[arg(long)]
    tasks_per_dag: Option<u32>,
    /// Target total utilization Σ C/T.
    #[arg(long)]
    utilization: Option<f64>,
    /// `harmonic` or `non-harmonic`.
    #[arg(long, value_parser = parse_period_mode)]
    period_mode: Option<PeriodMode>,
    #[arg(long)]
    period_min_us: Option<u64>,
    #[arg(long)]
    period_max_us: Option<u64>,
    #[arg(long)]
    edge_probability: Option<f64>,
    /// Per-DAG caps, comma separated; `inf` for unbounded.
    #[arg(long, value_delimiter = ',', value_parser = parse_cap)]
    max_active: Option<Vec<MaxActive>>,
    #[arg(long, value_parser = parse_scale)]
    deadline_scale: Option<DeadlineScale>,
    /// Worker count the workload is meant for; only used for the overload warning.
    #[arg(long, default_value_t = 1)]
    workers: u32,
    /// List presets and exit.
    #[arg(long)]
    list_presets: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Clone, Copy)]
struct HorizonArgs {
    /// Simulate this many hyperperiods.
    #[arg(long, default_value_t = 1)]
    hyperperiods: u32,
    /// Truncate the horizon at this many microseconds.
    #[arg(long, default_value_t = HorizonPolicy::default().cap_us)]
    horizon_cap_us: u64,
}

impl HorizonArgs {
    fn policy(self) -> HorizonPolicy {
        HorizonPolicy { hyperperiods: self.hyperperiods, cap_us: self.horizon_cap_us }
    }
}

#[derive(Args)]
struct RunArgs {
    workload: PathBuf,
    #[arg(long, default_value = "rate-priority", value_parser = parse_policy)]
    policy: Policy,
    #[arg(long, default_value_t = 4)]
    workers: u32,
    #[command(flatten)]
    horizon: HorizonArgs,
    /// Artifacts go to `<out-dir>/<run id>/`.
    #[arg(long, default_value = "runs")]
    out_dir: PathBuf,
    /// Also write the event trace as `trace.jsonl`.
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON sweep config; omitted fields take their defaults.
    config: Option<PathBuf>,
    #[arg(long, default_value = "sweep-out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    workload: PathBuf,
    #[arg(long, default_value_t = 4)]
    workers: u32,
    #[command(flatten)]
    horizon: HorizonArgs,
    /// Also write the table as CSV.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    workload: PathBuf,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ValidateArgs {
    /// Event trace in JSON-lines form, as written by `run --trace`.
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    workload: PathBuf,
}

fn parse_policy(s: &str) -> Result<Policy, String> {
    Policy::parse(s).ok_or_else(|| {
        let names: Vec<&str> = Policy::ALL.iter().map(|p| p.name()).collect();
        format!("unknown policy `{s}` (expected one of {})", names.join(", "))
    })
}

fn parse_period_mode(s: &str) -> Result<PeriodMode, String> {
    match s {
        "harmonic" => Ok(PeriodMode::Harmonic),
        "non-harmonic" => Ok(PeriodMode::NonHarmonic),
        _ => Err(format!("unknown period mode `{s}`")),
    }
}

fn parse_cap(s: &str) -> Result<MaxActive, String> {
    match s {
        "inf" | "none" => Ok(MaxActive::Unbounded),
        _ => s.parse().map(MaxActive::Bounded).map_err(|e| format!("bad cap `{s}`: {e}")),
    }
}

fn parse_scale(s: &str) -> Result<DeadlineScale, String> {
    DeadlineScale::parse(s).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let internal = e.chain().any(|c| c.downcast_ref::<SimError>().is_some_and(SimError::is_internal));
            ExitCode::from(if internal { EXIT_INTERNAL } else { EXIT_INPUT })
        }
    }
}

fn cmd_gen(a: GenArgs) -> Result<u8> {
    if a.list_presets {
        for (name, spec) in presets() {
            println!("{name}: {}", serde_json::to_string(&spec)?);
        }
        return Ok(0);
    }
    let mut spec: GenSpec = match &a.preset {
        Some(name) => preset(name).with_context(|| format!("unknown preset `{name}`"))?,
        None => preset("multi_baseline").expect("built-in preset"),
    };
    if let Some(v) = a.seed {
        spec.seed = v;
    }
    if let Some(v) = a.dags {
        spec.n_dags = v;
    }
    if let Some(v) = a.tasks_per_dag {
        spec.tasks_per_dag = v;
    }
    if let Some(v) = a.utilization {
        spec.target_utilization = v;
    }
    if let Some(v) = a.period_mode {
        spec.period_mode = v;
    }
    if let Some(v) = a.period_min_us {
        spec.period_range_us[0] = v;
    }
    if let Some(v) = a.period_max_us {
        spec.period_range_us[1] = v;
    }
    if let Some(v) = a.edge_probability {
        spec.edge_probability = v;
    }
    if let Some(v) = a.max_active {
        spec.max_active = v;
    }
    if let Some(v) = a.deadline_scale {
        spec.deadline_scale = v;
    }
    let output = a.output.context("--output is required")?;

    let generated = generate_workload(&spec)?;
    let u = generated.achieved_utilization;
    if u > a.workers as f64 {
        eprintln!("warning: utilization {u:.4} exceeds {} worker(s); the workload is overloaded", a.workers);
    }
    let hp = match hyperperiod(&generated.workload, u64::MAX) {
        Ok(h) => h.to_string(),
        Err(_) => "overflow".to_string(),
    };
    save_workload(&output, &generated.into_document())?;
    println!("wrote {} (U = {u:.6}, hyperperiod_us = {hp})", output.display());
    Ok(0)
}

fn cmd_run(a: RunArgs) -> Result<u8> {
    let w = load_validated(&a.workload)?;
    let horizon = a.horizon.policy();
    let run = run_once(&w, a.policy, a.workers, &horizon)?;
    let dir = a.out_dir.join(run_id(&w, a.policy, a.workers, &horizon));
    write_run_artifacts(&dir, &run, a.trace)?;
    println!("{}", run.summary_line());
    println!("artifacts: {}", dir.display());
    Ok(0)
}

fn cmd_sweep(a: SweepArgs) -> Result<u8> {
    let (cfg, root) = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            let cfg: SweepConfig =
                serde_json::from_str(&text).with_context(|| format!("invalid sweep config {}", path.display()))?;
            (cfg, path.parent().map(Path::to_path_buf).unwrap_or_default())
        }
        None => (SweepConfig::default(), PathBuf::new()),
    };
    cfg.check()?;
    println!("running {} cells", cfg.cell_count());
    let base = cfg.base(&root)?;
    let out = run_sweep(&cfg, &base)?;
    let files = write_sweep_outputs(&a.out_dir, &out)?;
    let failed = out.rows.iter().filter(|r| r.error.is_some()).count();
    let unenforced = out.rows.iter().filter(|r| r.all_enforced == Some(false)).count();
    println!("rows={} failed={failed} cap_violations={unenforced}", out.rows.len());
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(if unenforced > 0 { EXIT_INTERNAL } else { 0 })
}

fn cmd_compare(a: CompareArgs) -> Result<u8> {
    let w = load_validated(&a.workload)?;
    let rows = compare_policies(&w, a.workers, &a.horizon.policy())?;
    let csv = compare_csv(&rows);
    print!("{csv}");
    if let Some(path) = a.output {
        fs::write(&path, &csv).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(0)
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<u8> {
    let w = load_validated(&a.workload)?;
    let report = schedulability_report(&w);
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!("task  C_us  T_us  D_us  R_us  verdict  iterations");
        for r in &report.tasks {
            let t = w.task(r.task_id);
            let (resp, verdict, iters) = match r.verdict {
                RtaVerdict::Converged { response_us, iterations } => {
                    (response_us.to_string(), "ok", iterations.to_string())
                }
                RtaVerdict::Unschedulable { last_response_us } => {
                    (format!(">{last_response_us}"), "MISS", "-".to_string())
                }
            };
            println!("{}  {}  {}  {}  {resp}  {verdict}  {iters}", r.task_id.0, t.wcet, t.period, t.deadline);
        }
        println!(
            "U = {:.6} ({}), bound = {:.6}, {:?}, {:?}",
            report.utilization, report.utilization_exact, report.rm_bound, report.bound_verdict, report.overall
        );
    }
    Ok(match report.overall {
        Overall::AllSchedulable => 0,
        Overall::SomeUnschedulable => EXIT_UNSCHEDULABLE,
    })
}

fn cmd_validate(a: ValidateArgs) -> Result<u8> {
    let workload = load_workload(&a.workload)?.workload;
    let file = fs::File::open(&a.trace).with_context(|| format!("cannot open {}", a.trace.display()))?;
    let events = read_events_jsonl(BufReader::new(file))?;
    let report = verify_enforcement(&events, &workload)?;
    println!("all_enforced = {}", u8::from(report.all_enforced));
    for v in &report.violations {
        println!("violation t={} dag={} running={}", v.timestamp_us, v.dag_id.0, v.count);
    }
    if !report.all_enforced && report.violations.is_empty() {
        bail!("inconsistent enforcement report");
    }
    Ok(if report.all_enforced { 0 } else { EXIT_INTERNAL })
}
