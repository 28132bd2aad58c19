//! JSON workload documents.
//!
//! ```json
//! {
//!   "deadline_scale": 1.0,
//!   "dags": [
//!     { "dag_id": 1, "max_active": 2,
//!       "tasks": [ { "id": 1, "label": "cam", "wcet_us": 500, "period_us": 10000,
//!                    "deadline_us": 10000, "criticality": 0 } ],
//!       "edges": [[1, 2]] }
//!   ],
//!   "provenance": { ... }
//! }
//! ```
//!
//! `deadline_us` defaults to the period and `max_active: null` means unbounded.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    validate_workload, DagId, DagSpec, DeadlineScale, Duration, MaxActive, Task, TaskId, ValidatedWorkload,
    ValidationErrors, Workload,
};

#[derive(Debug, Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error(transparent)]
    Invalid(#[from] ValidationErrors),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskDoc {
    id: u32,
    #[serde(default)]
    label: Option<String>,
    wcet_us: Duration,
    period_us: Duration,
    #[serde(default)]
    deadline_us: Option<Duration>,
    #[serde(default)]
    criticality: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DagDoc {
    dag_id: u32,
    #[serde(default = "unbounded")]
    max_active: MaxActive,
    tasks: Vec<TaskDoc>,
    #[serde(default)]
    edges: Vec<[u32; 2]>,
}

fn unbounded() -> MaxActive {
    MaxActive::Unbounded
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorkloadDoc {
    #[serde(default)]
    deadline_scale: DeadlineScale,
    dags: Vec<DagDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<serde_json::Value>,
}

/// A workload plus whatever provenance block travelled with it.
#[derive(Clone, Debug, PartialEq)]
pub struct WorkloadDocument {
    pub workload: Workload,
    pub provenance: Option<serde_json::Value>,
}

impl WorkloadDocument {
    pub fn new(workload: Workload) -> Self {
        WorkloadDocument { workload, provenance: None }
    }
}

impl From<&WorkloadDocument> for WorkloadDoc {
    fn from(doc: &WorkloadDocument) -> Self {
        WorkloadDoc {
            deadline_scale: doc.workload.deadline_scale,
            dags: doc
                .workload
                .dags
                .iter()
                .map(|dag| DagDoc {
                    dag_id: dag.dag_id.0,
                    max_active: dag.max_active,
                    tasks: dag
                        .tasks
                        .iter()
                        .map(|t| TaskDoc {
                            id: t.id.0,
                            label: Some(t.label.clone()),
                            wcet_us: t.wcet,
                            period_us: t.period,
                            deadline_us: Some(t.deadline),
                            criticality: t.criticality,
                        })
                        .collect(),
                    edges: dag.edges.iter().map(|&(a, b)| [a.0, b.0]).collect(),
                })
                .collect(),
            provenance: doc.provenance.clone(),
        }
    }
}

impl From<WorkloadDoc> for WorkloadDocument {
    fn from(doc: WorkloadDoc) -> Self {
        let dags = doc
            .dags
            .into_iter()
            .map(|dag| DagSpec {
                dag_id: DagId(dag.dag_id),
                max_active: dag.max_active,
                tasks: dag
                    .tasks
                    .into_iter()
                    .map(|t| Task {
                        id: TaskId(t.id),
                        dag_id: DagId(dag.dag_id),
                        wcet: t.wcet_us,
                        period: t.period_us,
                        deadline: t.deadline_us.unwrap_or(t.period_us),
                        criticality: t.criticality,
                        label: t.label.unwrap_or_else(|| format!("t{}", t.id)),
                    })
                    .collect(),
                edges: dag.edges.into_iter().map(|[a, b]| (TaskId(a), TaskId(b))).collect(),
            })
            .collect();
        WorkloadDocument { workload: Workload { dags, deadline_scale: doc.deadline_scale }, provenance: doc.provenance }
    }
}

pub fn parse_workload(text: &str) -> Result<WorkloadDocument, FileError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: WorkloadDoc = serde_path_to_error::deserialize(de)
        .map_err(|e| FileError::Parse { path: e.path().to_string(), message: e.inner().to_string() })?;
    Ok(doc.into())
}

/// Pretty JSON with a trailing newline. Byte-stable for equal inputs.
pub fn to_json_string(doc: &WorkloadDocument) -> String {
    let mut s = serde_json::to_string_pretty(&WorkloadDoc::from(doc)).expect("workload serializes");
    s.push('\n');
    s
}

pub fn load_workload(path: &Path) -> Result<WorkloadDocument, FileError> {
    let text = fs::read_to_string(path).map_err(|source| FileError::Io { path: path.display().to_string(), source })?;
    parse_workload(&text)
}

pub fn load_validated(path: &Path) -> Result<ValidatedWorkload, FileError> {
    Ok(validate_workload(load_workload(path)?.workload)?)
}

pub fn save_workload(path: &Path, doc: &WorkloadDocument) -> Result<(), FileError> {
    fs::write(path, to_json_string(doc)).map_err(|source| FileError::Io { path: path.display().to_string(), source })
}
