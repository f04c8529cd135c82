//! Experiment harness for `critperc`: configuration, batch orchestration,
//! stable output schemas and the acceptance criteria.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod schema;
pub mod verify;

pub use config::RunConfig;
pub use error::{CliError, Result};
