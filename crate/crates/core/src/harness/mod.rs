//! Experiment runner: resolves a dataset, runs the method × time-steps matrix
//! for every entity and aggregates test MAPE.

mod config;
mod report;
mod run;

pub use config::{DatasetConfig, ExperimentConfig, ModelSelection};
pub use report::{
    emit_plot_data, emit_report, load_results, render_table, write_plot_data, write_train_reports, EntityMape,
    PlotRow, ReportFormat, ResultRow, ResultTable,
};
pub use run::{
    entity_seed, ingest, load_entities, predict_entity, run_experiment, write_outputs, ExperimentRun, JobKey,
    JobOutcome, JobSuccess,
};

/// Replaces characters that are awkward in file names.
pub fn file_safe(id: &str) -> String {
    let cleaned: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect();
    if cleaned.is_empty() {
        "_".into()
    } else {
        cleaned
    }
}
