//! Command-line front end: configuration files, experiment commands and CSV
//! outputs. All numerical work is delegated to `wirebeam-core`.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

pub use config::RunConfig;
pub use error::CliError;
pub use manifest::RunManifest;
