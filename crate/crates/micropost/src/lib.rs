//! Configuration, file formats, parallel drivers and command line for the
//! micropost simulator. The physics lives in `micropost-core`.
//!
//! - [`config`]: TOML preset files and their resolution into an
//!   [`config::ExperimentConfig`].
//! - [`io`]: CSV, key-value and binary formats.
//! - [`sim`]: block-parallel Monte Carlo drivers, cavity runs, sweeps and
//!   `p2` calibration.
//! - [`report`]: the one-shot reproduction pipeline.
//! - [`cli`]: the `micropost` command.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod report;
pub mod sim;
pub mod svg;

pub use error::{Error, SimError};
