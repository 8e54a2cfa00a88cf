//! Dataset I/O, splits, checkpoints, grid execution and reports.

pub mod checkpoint;
pub mod dataset;
pub mod grid;
pub mod report;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointSeeds, FlatMlp, FlatPosterior};
pub use dataset::{load_dataset, make_splits, save_dataset, Dataset, Splits};
pub use grid::{
    run_grid, run_job, select_best, warm_start_study, GridConfig, JobResult, ModelKind, RunRecord,
    WarmStartConfig, WarmStartReport,
};
pub use report::{emit_report, load_records, report_rows, save_records};
