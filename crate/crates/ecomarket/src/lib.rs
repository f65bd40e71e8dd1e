//! Runner for the `ecomarket-core` artificial stock market.
//!
//! Adds what the core leaves out: TOML run configuration, CSV and
//! checkpoint files, a synthetic reference market, and parallel experiment
//! orchestration behind the `ecomarket` command line.

pub mod config;
pub mod error;
pub mod experiment;
pub mod formats;

pub use config::{parse_config, Mode, Overrides, PopulationKind, RunConfig, Variant};
pub use ecomarket_core as core;
pub use error::{Error, ExitCode};
pub use experiment::run_experiment;
