//! Benchmark harness: configuration, data, experiment sweeps and reports.

pub mod compare;
pub mod config;
pub mod data;
pub mod experiment;

pub use compare::compare_report;
pub use config::{ConfigError, MethodId, ProblemId, RunConfig};
pub use data::{build_network, gen_toy_dataset, load_csv_dataset};
pub use experiment::{run_experiment, HarnessError, Summary};
