//! Experiment plumbing: line-delimited datasets, budget sweeps over decoding
//! algorithms, reports, and DOT export of search trees.

mod dataset;
mod experiment;
mod report;
mod tree_export;

pub use dataset::{load_dataset, parse_dataset, Instance};
pub use experiment::{
    budget_parameter, cell_seed, decode_instance, run_experiment, run_oracle, search_tree, AlgorithmRun, CellOutcome,
    OracleEntry, RunConfig,
};
pub use report::{emit_report, read_report, render_table, Aggregate, Report, ReportEntry, ReportFormat};
pub use tree_export::{export_tree, render_dot};
