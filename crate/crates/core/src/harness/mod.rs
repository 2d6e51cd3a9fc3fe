//! Experiment orchestration: Algorithm 1 end to end, seeded grid sweeps and
//! report emission.

mod config;
pub mod presets;
pub mod record;
pub mod report;
pub mod run;
pub mod sweep;

pub use config::{ExperimentConfig, ExperimentKind, FewShotConfig, GridPoint, MnistConfig, TaskParamsConfig};
pub use record::ExperimentRecord;
pub use report::{aggregate, emit_report, spearman, AggregateRow, ReportFormat};
pub use run::{run_algorithm1, Algorithm1Output, Algorithm1Params, FewShotParams, Metric};
pub use sweep::{run_sweep, SweepOptions};
