//! Core algorithms for joint lung-sound / lung-disease classification.
//!
//! Everything here is `no_std` + `alloc`: MFCC feature extraction, a small
//! dense-tensor network engine with explicit backward passes, the shared-trunk
//! multi-task models, evaluation metrics, and the COPD risk subsystem. File
//! formats, audio IO and the command line live in the `lungmtl` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod corpus;
pub mod dsp;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod risk;

pub use error::{Error, Result};
pub use nn::Real;
