//! File formats, experiment orchestration and the command line for
//! [`selfex_core`].

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod png_io;
pub mod report;
pub mod weights;

pub use error::{Error, Result};
