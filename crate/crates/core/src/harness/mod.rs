//! Experiment harness: configuration, dataset synthesis and persistence,
//! reconstruction runs, parameter sweeps and reports.

pub mod config;
pub mod dataset;
pub mod run;
pub mod sample;

pub use config::{
    desk_solver, ExperimentConfig, SampleConfig, SampleKind, SweepConfig, SweepParameter,
};
pub use run::{
    cell_config, derive_seed, load_dataset, reconstruct, reconstruct_dataset, report, sweep,
    synthesize, synthesize_in_memory, Dataset, RunMeta, RunOutput, SweepOutcome, Synthesis,
};
