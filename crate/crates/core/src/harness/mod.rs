//! Experiment orchestration: configuration, the (method, seed) job grid,
//! result tables and plots.

mod config;
mod plots;
mod report;
mod run;

pub use config::{ExperimentConfig, Method, RoadnetSpec, TestSetSpec};
pub use plots::{emit_plots, episode_series, render_svg, Series};
pub use report::{
    best_baseline, read_records, records_from_csv, records_to_csv, relative_improvement, report_table, Improvement,
    ResultRecord, Table, TableRow,
};
pub use run::{prepare, run_experiment, write_outputs, Experiment, Prepared, RunTrace, TestSet};
