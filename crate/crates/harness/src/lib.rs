//! Experiment orchestration for the phase-field lab: configs, the runs
//! behind each CLI subcommand and their CSV/JSON artifacts.

pub mod config;
pub mod report;
pub mod runs;

pub use config::ExperimentConfig;
pub use report::{CheckRow, Summary};
pub use runs::{
    run_command, run_formula_checks, run_report, run_semicontinuity, run_solve, run_spectrum, run_variation,
    run_varifold, Session,
};
