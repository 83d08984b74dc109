//! File formats, run configuration, and command orchestration for the
//! margin-softmax laboratory. The math lives in `amlab-core`; this
//! crate adds the IDX dataset reader, the checkpoint format, CSV/JSON
//! exports, and the `amlab` command-line interface.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod export;
pub mod idx;
pub mod run;

pub use error::Error;
