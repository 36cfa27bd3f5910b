//! Command-line pipeline and HTTP service for attribute-driven BRDF editing.

pub mod commands;
pub mod server;

pub use commands::{run, Cli};
