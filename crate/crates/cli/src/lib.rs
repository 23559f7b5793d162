//! Pipeline runner for translation-difficulty feature analysis: reads a
//! run configuration, runs the ingest, extract, fit, evaluate and report
//! stages, and records what it did in a run manifest.

pub mod config;
pub mod error;
pub mod features_table;
pub mod run;
pub mod stages;
pub mod synth;
pub mod tsv;

pub use config::{LoadedConfig, RunConfig};
pub use error::{CliError, Result};
pub use run::{run_stages, Manifest, RunOptions, Stage, StageStatus};
