//! Configuration, pipelines, plotting, and the CLI.

pub mod cli;
pub mod config;
pub mod pipelines;
pub mod svg;

pub use config::RunConfig;
pub use pipelines::Lab;
