//! File formats, run configuration, and the command-line front end for
//! [`egpt_core`].

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod report;

pub use error::{CliError, Result};
