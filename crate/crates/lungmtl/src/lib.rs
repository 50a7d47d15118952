//! File formats, corpus ingestion and the `lungmtl` command line on top of
//! `lungmtl-core`.

pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod features;
pub mod fsio;
pub mod icbhi;
pub mod wav;

pub use error::{Error, Result};
