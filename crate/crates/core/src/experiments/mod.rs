//! Experiment drivers: convergence sweeps, trained-model trade-offs and
//! transfer, point-cloud classification, and their reference fixtures.

pub mod classify;
pub mod config;
pub mod curve;
pub mod off;
pub mod oracle;
pub mod plot;
pub mod report;
pub mod sweep;
pub mod task;
pub mod transfer;

pub use classify::{classify_experiment, synth_pointcloud_task, ClassifyConfig, ClassifyReport, CloudSet, ModelKind};
pub use config::{ArchSpec, FilterSpec, KernelSpec, SignalSpec, SweepConfig, TrainSettings};
pub use curve::{median, CurveRow, ErrorCurve, MedianRow};
pub use off::{off_load, off_load_subsampled};
pub use report::{densevs_sparse_report, ComparisonTable};
pub use sweep::convergence_sweep;
pub use task::RegressionTask;
pub use transfer::{lipschitz_tradeoff, train_regression, transferability_eval, RegressionConfig, TransferMode};
