//! File formats, replication experiments and command-line support for
//! `gibbspl-core`.

pub mod error;
pub mod harness;
pub mod io;
pub mod qq;

pub use error::{Error, Result};
pub use harness::{run_experiment, ExperimentSpec, MetricsReport, RunOptions};
pub use io::{read_pattern, write_pattern, ModelDescription};
