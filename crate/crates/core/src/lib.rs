//! LLM-assisted initial coding of interview transcripts, reduction of the
//! resulting codes to a unique codebook, and inductive thematic saturation
//! (ITS) metrics.

pub mod assignment;
pub mod codebook;
pub mod coder;
pub mod compiler;
pub mod config;
pub mod error;
pub mod gateway;
pub mod judge;
pub mod metrics;
pub mod pipeline;
pub mod plot;
pub mod program;
pub mod reducer;
pub mod sequence;
pub mod similarity;

pub use error::{Error, Result};
