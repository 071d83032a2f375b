//! File formats, scenario configuration, report emission and the scenario
//! runner behind the `gasnet` command line tool.

pub mod check;
pub mod config;
pub mod error;
pub mod matrix_io;
pub mod report;
pub mod run;

pub use error::{Error, Result};
