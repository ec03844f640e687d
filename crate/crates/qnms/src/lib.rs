//! File formats, multi-threaded pipelines and the `qnms` command-line tool
//! on top of [`qnms_core`].

pub mod bench;
pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod report;

pub use error::{Error, Result};
