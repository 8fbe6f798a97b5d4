//! File formats, configuration and the experiment pipeline around
//! [`cfflow_core`]: CSV datasets and samples, binary checkpoints, TOML
//! experiment configs and oracle targets, run reports and SVG plots.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod io;
pub mod oracle_file;
pub mod parallel;
pub mod pipeline;
pub mod plot;
pub mod report;

pub use cfflow_core as core;
pub use config::{ExperimentConfig, Stage};
pub use error::{Error, Result};
pub use pipeline::Pipeline;
