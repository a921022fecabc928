//! Configuration-driven experiment runner, run comparison and the CLI.

mod cli;
mod compare;
mod config;
mod run;

pub use cli::{cli, exit_code, EXIT_ASSERT, EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, MARGIN_FILE};
pub use compare::{compare_runs, write_comparison, AlignedRow, ComparedRun, Comparison, COMPARISON_CSV, COMPARISON_JSON};
pub use config::{
    load_config, preset, ChecksConfig, DatasetConfig, ExperimentConfig, InitConfig, LossConfig, LrPolicy, OptimizerSection,
    PRESETS, SCHEMA_VERSION,
};
pub use run::{
    read_trajectory, run_experiment, series_csv, sha256_hex, verify_manifest, write_diagnostics, CheckOutcome, RunManifest,
    RunResult, ARTIFACT, DATASET_FILE, MANIFEST_FILE, REPORT_FILE, RESULT_FILE, SERIES_FILE, TRAJECTORY_FILE, VERSION,
};
