//! Configuration files, orchestration and table output for the `wplap`
//! command line tool.

pub mod config;
pub mod run;

pub use config::{ConfigError, RunConfig};
pub use run::{Outcome, Prepared, RunError};
