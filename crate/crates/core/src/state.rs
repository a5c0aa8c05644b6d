//! The compactified cluster-size space: positive integers with the point at
//! infinity glued onto 1.

use serde::{Deserialize, Serialize};

/// A cluster size. Infinity and 1 are the same point, so an exploded cluster
/// re-enters the state space as a singleton.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SizeState(u64);

impl SizeState {
    pub const ONE: SizeState = SizeState(1);
    pub const INFINITY: SizeState = SizeState(1);

    pub fn new(value: u64) -> Option<Self> {
        (value >= 1).then_some(SizeState(value))
    }

    pub fn value(self) -> u64 {
        self.0
    }

    /// Position of the state under the embedding used by the metric.
    pub fn embed(self) -> f64 {
        embed(self.0)
    }
}

fn embed(i: u64) -> f64 {
    if i <= 1 {
        0.0
    } else {
        1.0 / i as f64
    }
}

/// Distance `|f(i) - f(j)|` with `f(1) = 0` and `f(i) = 1/i` otherwise.
pub fn metric_d_e(i: u64, j: u64) -> f64 {
    debug_assert!(i >= 1 && j >= 1);
    (embed(i) - embed(j)).abs()
}
