//! Command-line front end: run configuration, checkpointed pipeline stages
//! and the zero-shot LLM baseline.

pub mod app;
pub mod config;
pub mod error;
pub mod fixture;
pub mod llm;
pub mod manifest;
pub mod pipeline;

pub use error::{CliError, CliResult};
