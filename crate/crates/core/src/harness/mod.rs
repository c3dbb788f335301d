//! Reproducible experiment orchestration: named presets, sweeps over
//! lambda / noise / augmentation fraction, seeded replication with
//! mean-and-deviation aggregation, and CSV/plot-data emission.

mod config;
mod records;
mod run;

pub use config::{
    default_mnist_paths, load_overrides, objective_tag, preset, preset_names, ConfigOverrides,
    DataConfig, ExperimentConfig, MnistPaths, BASE_SEED_DEFAULT,
};
pub use records::{
    aggregate, emit_aggregates_csv, emit_plot_data, emit_records_csv, read_records_csv,
    Aggregate, RunRecord, SweepAxis,
};
pub use run::{build_colored_task, build_rotated_task, mask_fraction, oracle_grid, run_experiment, sweep, DigitTask};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown preset `{name}`")]
    UnknownPreset { name: String },
    #[error("missing data file: {path}")]
    MissingData { path: String },
    #[error("no records to aggregate")]
    EmptyRecords,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Csv { path: String, msg: String },
    #[error(transparent)]
    Data(#[from] crate::error::DataError),
    #[error(transparent)]
    Train(#[from] crate::error::TrainError),
}
