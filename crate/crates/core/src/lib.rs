//! Interpretable first-order Takagi-Sugeno fuzzy regression.
//!
//! Models are built from expert-configured grid partitions of z-scored
//! inputs, pruned by cumulative firing strength and given consequents by a
//! single global ridge least-squares fit. A Gustafson-Kessel clustering
//! baseline with similarity-driven set merging is included for comparison.

pub mod baseline;
pub mod data;
pub mod engine;
mod error;
pub mod estimate;
pub mod features;
pub mod metrics;
pub mod partition;

pub use data::{Dataset, NormStats, Schema, SplitSpec};
pub use engine::{Rule, RuleBase, TSModel};
pub use error::{Error, Result};
pub use partition::{FuzzyPartition, GaussianMF, GridSpec};
