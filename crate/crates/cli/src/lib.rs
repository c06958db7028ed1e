//! Batch front-end for the planar phase-macromodel library: configuration
//! parsing, the run pipeline and SVG rendering.

pub mod config;
pub mod run;
pub mod svg;

pub use config::{parse_config, ConfigError, RunConfig};
pub use run::{load_config, run, RunError, RunOutcome};
