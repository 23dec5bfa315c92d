//! Continual-training orchestration, evaluation, metrics and reporting.

pub mod config;
pub mod metrics;
pub mod probe;
pub mod report;
pub mod run;

pub use config::{ExperimentConfig, IntransigenceReference, Seeds, TaskSchedule};
pub use metrics::{compute_metrics, AccuracyMatrix, MetricsReport};
pub use probe::{asymmetry_fraction, probe_loss_asymmetry, sample_indices, ProbeRow};
pub use report::{emit_report, read_report_config, ReportFiles};
pub use run::{
    evaluate, run_continual, run_multi_task, run_single_task_baseline, run_stream, ContinualRun,
    EpochEval,
};
