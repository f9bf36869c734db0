//! File formats, pipelines and the `stocast` command line built on
//! `stocast-core`.

pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod formats;
pub mod pipeline;
pub mod report;
pub mod runs;

pub use error::{Error, Result};
