//! Command-line front end: benchmarking, training, inference, metrics, mask
//! generation and ablations.

pub mod ablate;
pub mod bench;
pub mod commands;
pub mod error;
pub mod imageio;
pub mod metrics;
pub mod settings;

pub use error::CliError;
