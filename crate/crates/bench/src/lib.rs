//! File formats, experiment orchestration and the `denobench` command line
//! on top of [`denobench_core`].

pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod images;
pub mod report;
pub mod storage;

pub use error::{BenchError, Result};
