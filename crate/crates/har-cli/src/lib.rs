//! File formats, configuration, synthetic corpora, and experiment
//! commands around the core library. The `har` binary dispatches into
//! [`commands`]; everything is exposed as a library so the test suites can
//! drive the same code paths directly.

pub mod binio;
pub mod ckpt_io;
pub mod commands;
pub mod config;
pub mod csvio;
pub mod error;
pub mod store_io;
pub mod svg;
pub mod synth;

pub use config::RunConfig;
pub use error::CliError;
