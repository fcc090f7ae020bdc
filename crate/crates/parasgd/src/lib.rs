//! File formats, configuration, SVG rendering and the command-line driver
//! for [`parasgd_core`].

pub mod commands;
pub mod config;
pub mod error;
pub mod exec;
pub mod io;
pub mod report;
pub mod svg;

pub use error::{CliError, Result};
