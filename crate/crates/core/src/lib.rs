//! Simulation and pseudolikelihood estimation for pairwise-interaction Gibbs
//! point processes with infinite-range potentials.
//!
//! The crate is `no_std` (with `alloc`). Everything here is pure computation
//! over in-memory point configurations; file formats, the command line and
//! the replication harness live in the companion `gibbspl` crate.
//!
//! Module map:
//!
//! - [`geometry`]: rectangular windows, erosion, configurations and range queries.
//! - [`model`]: exponential-family pair potentials, sufficient statistics and
//!   the Papangelou conditional intensity.
//! - [`simulate`]: birth-death-move Metropolis-Hastings sampling.
//! - [`estimate`]: truncated pseudolikelihood and logistic contrasts with exact
//!   score and Hessian, fitted by damped Newton.
//! - [`inference`]: block sandwich covariance and GNZ residuals.
//! - [`metrics`]: weighted error summaries over replications.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

mod error;
mod linalg;
mod sum;

pub mod estimate;
pub mod geometry;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod simulate;

pub use error::{Error, Result};
pub use estimate::{Contrast, ContrastTerms, FitConfig, FitResult, QuadratureGrid, Rescale};
pub use geometry::{Configuration, Point, RangeIndex, Window};
pub use inference::{BlockPartition, CovarianceReport, GnzStatistic};
pub use linalg::Matrix;
pub use metrics::Metrics;
pub use model::{BasisFunction, LjParams, ModelSpec, ThetaNatural};
pub use simulate::{MhConfig, RandomStream};
