//! Batch runner for the `stochvar` experiments.
//!
//! [`run`] takes an effective [`Config`], executes the named experiment and
//! returns a [`RunReport`] with one verdict row per check plus a CSV series.
//! The `stochvar` binary wraps it with flag parsing and exit codes.

pub mod config;
pub mod experiments;
pub mod report;

use std::time::Instant;

use thiserror::Error;

pub use config::Config;
pub use report::{Check, RunReport, Series};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] stochvar::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 2 for invalid input, 1 for anything that went wrong while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e {
                stochvar::Error::Config(_)
                | stochvar::Error::Unsupported(_)
                | stochvar::Error::Format(_)
                | stochvar::Error::NotSteadyEuler { .. } => 2,
                _ => 1,
            },
            CliError::Io(_) | CliError::Csv(_) => 1,
        }
    }
}

pub fn run(config: &Config) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let experiment = config.experiment().to_string();
    let outcome = match experiment.as_str() {
        "ns-verify" => experiments::ns_verify(config)?,
        "criticality" => experiments::criticality(config)?,
        "noether" => experiments::noether(config)?,
        "spde-converge" => experiments::spde_converge(config)?,
        other => return Err(CliError::Usage(format!("unknown experiment `{other}`"))),
    };
    Ok(RunReport {
        experiment,
        seed: config.parsed("seed")?,
        config: config.effective(),
        checks: outcome.checks,
        notes: outcome.notes,
        series: outcome.series,
        wall_clock: start.elapsed().as_secs_f64(),
    })
}
