//! Multi-DAG real-time scheduling: task model, synthetic workload generation,
//! fixed-priority schedulability analysis, a deterministic executor simulator
//! and the metrics and experiment drivers built on top of them.

pub mod analysis;
pub mod experiment;
pub mod file;
pub mod gen;
pub mod metrics;
pub mod model;
pub mod sim;
