//! Graphical horseshoe estimation of sparse precision matrices.
//!
//! The crate is organised bottom-up:
//!
//! * [`matrix`]: dense symmetric types, Cholesky checks, column partitions.
//! * [`samplers`]: seeded gamma, inverse-gamma and multivariate normal draws.
//! * [`gibbs`] and [`chain`]: the block Gibbs sampler and its retained draws.
//! * [`structure`]: ground-truth sparsity patterns and data simulation.
//! * [`metrics`] and [`theory`]: losses, selection statistics, ROC, and the
//!   shrinkage-bias checks.
//! * [`archive`], [`experiment`], [`trace`], [`report`]: persistence and the
//!   experiment drivers behind the `ghs` binary.

pub mod archive;
pub mod chain;
pub mod error;
pub mod experiment;
pub mod gibbs;
pub mod matrix;
pub mod metrics;
pub mod report;
pub mod samplers;
pub mod structure;
pub mod theory;
pub mod trace;

pub use chain::{Chain, StoragePolicy};
pub use error::{GhsError, Result};
pub use gibbs::{run_ghs, GhsConfig, GhsSampler, SamplerState, ShrinkageState};
pub use matrix::{Adjacency, CovarianceMatrix, PrecisionMatrix, ScatterMatrix};
pub use samplers::RngHandle;
