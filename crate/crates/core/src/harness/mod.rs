//! Experiment engine behind the `vrql` CLI.

pub mod experiment;
pub mod generators;
pub mod summary;

pub use experiment::{run_experiment, run_trials, write_csv, AlgorithmSpec, ExperimentSpec, MdpSource, CSV_HEADER};
pub use generators::{generate_mdp, GeneratorKind, GeneratorParams};
pub use summary::{read_traces, summarize, summarize_traces, GroupSummary, Summary};
