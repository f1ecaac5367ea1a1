//! Experiment specs, comparison sweeps, and the commands behind the CLI.

mod commands;
mod runner;
mod spec;

pub use commands::{eval, gen_data, train, GenDataSummary, TrainOutcome, STAGE1_CHECKPOINT, STAGE2_CHECKPOINT};
pub use runner::{
    compare_core, compare_losses, core_cells, core_parameter_counts, load_data, loss_cells, rows_from_csv, rows_to_csv,
    run_cells, train_magnitude, CellOutcome, Comparison, ResultRow, CORE_SWEEP_CR_PHA, CSV_HEADER,
};
pub use spec::{DataConfig, ExperimentSpec, GenDataConfig, Preset, SweepConfig};
