use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn multidag(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multidag")).current_dir(dir).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, body: &str) {
    fs::write(dir.join(name), body).unwrap();
}

const SINGLE_TASK: &str = r#"{"dags":[{"dag_id":1,"max_active":null,"tasks":[
  {"id":1,"label":"only","wcet_us":1000,"period_us":10000,"criticality":0}],"edges":[]}]}"#;

const RTA_SET: &str = r#"{"dags":[{"dag_id":1,"max_active":null,"tasks":[
  {"id":1,"label":"a","wcet_us":1,"period_us":4,"criticality":0},
  {"id":2,"label":"b","wcet_us":2,"period_us":6,"criticality":0},
  {"id":3,"label":"c","wcet_us":3,"period_us":12,"criticality":0}],"edges":[]}]}"#;

const OVERLOADED_SET: &str = r#"{"dags":[{"dag_id":1,"max_active":null,"tasks":[
  {"id":1,"label":"a","wcet_us":3,"period_us":4,"criticality":0},
  {"id":2,"label":"b","wcet_us":3,"period_us":6,"criticality":0}],"edges":[]}]}"#;

const CAP_ONE_PAIR: &str = r#"{"dags":[{"dag_id":1,"max_active":1,"tasks":[
  {"id":1,"label":"a","wcet_us":5,"period_us":20,"criticality":0},
  {"id":2,"label":"b","wcet_us":5,"period_us":20,"criticality":0}],"edges":[]}]}"#;

#[test]
fn gen_is_deterministic() {
    let dir = TempDir::new().unwrap();
    for out in ["a.json", "b.json"] {
        let o = multidag(dir.path(), &["gen", "--preset", "multi_baseline", "--seed", "7", "-o", out]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).contains("U = 0.8"), "{}", stdout(&o));
    }
    let a = fs::read(dir.path().join("a.json")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.json")).unwrap());
    assert!(String::from_utf8(a).unwrap().contains("multidag-gen"));
}

#[test]
fn gen_warns_about_overload_but_writes() {
    let dir = TempDir::new().unwrap();
    let o = multidag(dir.path(), &["gen", "--utilization", "1.5", "--workers", "1", "-o", "w.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("warning"), "{}", stderr(&o));
    assert!(dir.path().join("w.json").exists());
}

#[test]
fn gen_reports_infeasible_specs() {
    let dir = TempDir::new().unwrap();
    let o =
        multidag(dir.path(), &["gen", "--dags", "1", "--tasks-per-dag", "2", "--utilization", "2.5", "-o", "w.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!dir.path().join("w.json").exists());
}

#[test]
fn run_single_task_has_no_misses_and_writes_artifacts() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "w.json", SINGLE_TASK);
    for policy in ["rate-priority", "fifo-multi", "fifo-single"] {
        let o = multidag(dir.path(), &["run", "w.json", "--policy", policy, "--workers", "2", "--trace"]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).contains("MR=0.000000"), "{}", stdout(&o));
        assert!(stdout(&o).contains("all_enforced=1"));
    }
    let runs: Vec<_> = fs::read_dir(dir.path().join("runs")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(runs.len(), 3, "one directory per distinct run");
    for r in runs {
        for f in ["jobs.csv", "metrics.csv", "metrics.json", "trace.jsonl"] {
            assert!(r.join(f).exists(), "{} missing in {}", f, r.display());
        }
    }
}

#[test]
fn run_overloaded_workload_misses() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "w.json", OVERLOADED_SET);
    let o = multidag(dir.path(), &["run", "w.json", "--workers", "1"]);
    assert!(o.status.success());
    assert!(!stdout(&o).contains("MR=0.000000"), "{}", stdout(&o));
}

#[test]
fn bad_inputs_exit_with_one() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "broken.json", "{\"dags\": [");
    write(dir.path(), "invalid.json", &SINGLE_TASK.replace("\"wcet_us\":1000", "\"wcet_us\":20000"));
    for args in [
        vec!["run", "missing.json"],
        vec!["run", "broken.json"],
        vec!["analyze", "invalid.json"],
        vec!["compare", "broken.json"],
    ] {
        let o = multidag(dir.path(), &args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn analyze_exit_codes() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "ok.json", RTA_SET);
    write(dir.path(), "bad.json", OVERLOADED_SET);
    let o = multidag(dir.path(), &["analyze", "ok.json"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for row in ["1  1  4  4  1  ok", "2  2  6  6  3  ok", "3  3  12  12  10  ok"] {
        assert!(text.contains(row), "{text}");
    }
    let o = multidag(dir.path(), &["analyze", "bad.json", "--json"]);
    assert_eq!(o.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["overall"], "some_unschedulable");
}

#[test]
fn validate_accepts_real_traces_and_rejects_forged_ones() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "w.json", CAP_ONE_PAIR);
    let o = multidag(dir.path(), &["run", "w.json", "--workers", "2", "--trace", "--out-dir", "out"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let run_dir = fs::read_dir(dir.path().join("out")).unwrap().next().unwrap().unwrap().path();
    let trace = run_dir.join("trace.jsonl");
    let trace_arg = trace.to_str().unwrap();

    let o = multidag(dir.path(), &["validate", "--trace", trace_arg, "--workload", "w.json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("all_enforced = 1"));

    // Both jobs running together in a cap-1 DAG.
    let forged = [
        r#"{"timestamp_us":0,"kind":"Dispatch","task_id":1,"instance":0,"worker":0}"#,
        r#"{"timestamp_us":0,"kind":"Dispatch","task_id":2,"instance":0,"worker":1}"#,
        r#"{"timestamp_us":5,"kind":"Complete","task_id":1,"instance":0,"worker":0}"#,
        r#"{"timestamp_us":5,"kind":"Complete","task_id":2,"instance":0,"worker":1}"#,
    ]
    .join("\n");
    write(dir.path(), "forged.jsonl", &forged);
    let o = multidag(dir.path(), &["validate", "--trace", "forged.jsonl", "--workload", "w.json"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("all_enforced = 0"));
    assert!(stdout(&o).contains("violation t=0 dag=1 running=2"), "{}", stdout(&o));

    write(dir.path(), "junk.jsonl", "not json\n");
    let o = multidag(dir.path(), &["validate", "--trace", "junk.jsonl", "--workload", "w.json"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn compare_on_a_slack_workload() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "w.json", SINGLE_TASK);
    let o = multidag(dir.path(), &["compare", "w.json", "--workers", "2", "-o", "cmp.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("cmp.csv")).unwrap();
    assert_eq!(csv, stdout(&o));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("rate-priority,2,0.000000,"));
    assert!(lines[2].starts_with("fifo-multi,2,0.000000,") && lines[2].ends_with(",0.000000,0.000000"));
    assert!(lines[3].starts_with("fifo-single,1,0.000000,"));
}

#[test]
fn sweep_is_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    write(
        dir.path(),
        "sweep.json",
        r#"{"base_spec":{"seed":1,"n_dags":2,"tasks_per_dag":4,"target_utilization":1.6,
            "period_mode":"non-harmonic","period_range_us":[1000,50000],"edge_probability":0.5},
            "seeds":[1,2],"worker_counts":[2,4],"deadline_scales":[0.8,1.2],
            "concurrency_pairs":[[2,2],[2,5]],"policies":["rate-priority","fifo-multi","fifo-single"],
            "horizon":{"hyperperiods":1,"cap_us":200000}}"#,
    );
    let mut outputs = Vec::new();
    for out in ["s1", "s2"] {
        let o = multidag(dir.path(), &["sweep", "sweep.json", "--out-dir", out]);
        assert!(o.status.success(), "{}", stderr(&o));
        // 2 policies x 2 workers x 2 scales x 2 pairs x 2 seeds + fifo-single at one worker.
        assert!(stdout(&o).starts_with("running 40 cells"), "{}", stdout(&o));
        outputs.push(dir.path().join(out));
    }
    for f in ["results.csv", "mr_vs_workers.csv", "mr_vs_scale.csv", "cap_heatmap.csv", "policy_summary.csv"] {
        let a = fs::read(outputs[0].join(f)).unwrap();
        assert_eq!(a, fs::read(outputs[1].join(f)).unwrap(), "{f} differs");
    }
    let results = fs::read_to_string(outputs[0].join("results.csv")).unwrap();
    assert!(results.starts_with(
        "seed,policy,workers,deadline_scale,cap1,cap2,dag1_mr,dag2_mr,combined_mr,max_lateness_us,mean_response_us,p50_us,p95_us,p99_us,all_enforced,deferred,executed,censored,error\n"
    ));
    assert_eq!(results.lines().count(), 41);
    assert!(results.lines().skip(1).all(|l| l.split(',').nth(14) == Some("1")));
}

#[test]
fn sweep_rejects_empty_lists() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "sweep.json", r#"{"seeds":[]}"#);
    let o = multidag(dir.path(), &["sweep", "sweep.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("non-empty"), "{}", stderr(&o));
}
