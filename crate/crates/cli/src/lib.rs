//! Configuration parsing and run orchestration for the `aoheom` binary.

pub mod config;
pub mod error;
pub mod run;

pub use config::{parse_config, serialize_config, Component, EquilibrationPolicy, RunConfig};
pub use error::{AppError, AppResult};
pub use run::{
    equilibrate_with_policy, run_absorption, run_dump_matrices, run_equilibrate, run_golden_rule,
    run_truncation_study, with_workers, AbsorptionOutput, EquilibriumSummary, Metadata, Setup, TruncationDifference,
};
