//! Simulation and numerics for the mean-field forest-fire model.
//!
//! * [`finite_model`]: the `n`-vertex process with growth and lightning.
//! * [`kinetics`]: the limiting size distribution and its burn rate.
//! * [`characteristics`]: characteristic curves and explosion probabilities.
//! * [`limit_process`]: Monte Carlo for the limiting tagged-cluster process.
//! * [`coupling`]: a joint construction of the finite and limiting tagged clusters.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod characteristics;
pub mod coupling;
pub mod error;
pub mod finite_model;
pub mod interp;
pub mod kinetics;
pub mod limit_process;
pub mod mass;
pub mod rng;
pub mod state;
pub mod stats;

/// Crate version stamped into artifacts.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::{Error, Result};
pub use mass::{sample_size, MassDistribution, Paintbox, TailModel};
pub use rng::{seeded_stream, Stream};
pub use state::{metric_d_e, SizeState};
