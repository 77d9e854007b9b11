//! Configuration, ingestion, experiment pipelines and persisted outputs.

pub mod config;
pub mod data;
pub mod experiments;
pub mod manifest;
pub mod plot;

pub use config::{parse_seed_list, ExperimentConfig, ExperimentKind, Overrides};
pub use data::{load_idx_images, load_tabular_csv, parse_tabular_csv, resolve_data_path, TabularDataset, TabularSchema, DATA_ROOT_ENV};
pub use experiments::{run_experiment, RunOutcome};
pub use manifest::{OutputDir, RunManifest};
pub use plot::{aggregate, emit_plot_data, parse_plot_data, PlotRow};
