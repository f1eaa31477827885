//! File formats, dataset manifests, evaluation and benchmarking around
//! [`vadlite_core`], plus the `vadlite` command-line driver.

pub mod bench;
pub mod cli;
pub mod config;
pub mod error;
pub mod format;
pub mod manifest;
pub mod pipeline;
pub mod report;

pub use config::{Method, RunConfig};
pub use error::{Error, Result};
pub use pipeline::{fit, load_model, Model};
pub use report::{Report, ReportFormat};
