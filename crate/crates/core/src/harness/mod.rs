//! Configuration, experiment orchestration and artifact emission.

pub mod artifacts;
pub mod config;
pub mod experiments;
pub mod figures;

pub use artifacts::{
    format_number, ArtifactWriter, CsvTable, FileEntry, ManifestStatus, RunManifest,
};
pub use config::{emit_config, parse_config, ConfigError, ExperimentKind, ExperimentSpec};
pub use experiments::{
    double_limit_cells, run_experiment, sweep_double_limit, CellSummary, DoubleLimitReport,
};
pub use figures::{emit_figure_data, figure_runs, FigureId, FigureOutput, FigureRun, FigureStatus};
