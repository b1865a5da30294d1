//! Monthly playa inundation modeling.
//!
//! The crate covers the whole workflow for predicting whether a playa wetland
//! holds water in a given month:
//!
//! - [`raster`]: Monte-Carlo land-cover fractions inside a fixed-radius buffer
//!   around each playa center.
//! - [`data`]: CSV ingestion, binary labels, year-based splits, the
//!   train-fit standardizer and a synthetic fixture generator.
//! - [`model`]: a single-layer LSTM with categorical entity embeddings and
//!   full backpropagation through time.
//! - [`optim`]: Adam with step-decay learning rate, coupled L2, early stopping
//!   and the epoch loop.
//! - [`eval`]: confusion counts, precision/recall/F1, ROC/AUC, cutoff
//!   selection, per-playa metrics and the regional inundation fraction.
//! - [`cli`]: the `playa` command line wiring the modules into reproducible runs.
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod numeric;
pub mod optim;
pub mod raster;
pub mod report;
pub mod rng;

pub use error::{Error, Result};
