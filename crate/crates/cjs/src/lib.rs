//! File formats, the experiment harness and the command line around
//! `cjs-core`.
//!
//! - [`io`]: plans, measurement sets, images and reports on disk.
//! - [`config`]: the JSON experiment configuration.
//! - [`experiment`]: the pipeline, noise and spacing sweeps, replay.

pub mod config;
pub mod error;
pub mod experiment;
pub mod io;

pub use config::{ExperimentConfig, PhantomSpec, SolverKind};
pub use error::{Error, Result};
