//! Everything that crosses the process boundary: file formats,
//! checkpoints, synthetic scene generation, and the `meshfield` CLI.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod lock;
pub mod pipeline;
pub mod synth;

pub use error::CliError;
