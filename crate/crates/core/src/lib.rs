//! Attribute-grounded synthetic time series with paired Q&A data, plus the
//! scoring harness used to evaluate text-answering models on them.
//!
//! The pipeline runs in one direction:
//!
//! 1. [`taxonomy`] fixes the attribute vocabulary and the metric catalog.
//! 2. [`genpool`] samples ground-truth [`genpool::AttributePool`]s.
//! 3. [`synth`] renders pools into value arrays, normalizes them and
//!    re-checks the arrays against the pools.
//! 4. [`describe`] turns pools into descriptions and template Q&A records.
//! 5. [`tsevol`] evolves seed Q&As through a text generator and filters
//!    the results with an attribute-based eliminator.
//! 6. [`datasets`] assembles prompt documents and corpora and persists
//!    them as JSONL.
//! 7. [`evalkit`] scores answers and runs benchmarks, including the
//!    controlled-accuracy tool study.

pub mod datasets;
pub mod describe;
pub mod error;
pub mod evalkit;
pub mod genpool;
mod par;
pub mod rng;
pub mod synth;
pub mod taxonomy;
pub mod tsevol;

pub use error::{Error, Result};

/// Version string written into corpus manifests.
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");
