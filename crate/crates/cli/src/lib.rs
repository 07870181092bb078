//! Experiment runner: gradient-accuracy and sequential-design benchmarks with
//! CSV output.

pub mod bench;
pub mod commands;
pub mod config;
pub mod metrics;
pub mod output;

pub use config::ExperimentConfig;
