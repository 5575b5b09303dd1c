//! Privacy-utility trade-offs for time-series data release.
//!
//! A user observes a Markov sequence `x_1, x_2, ...` and releases a distorted
//! sequence `y_1, y_2, ...`. Leakage is the mutual information between the two
//! sequences; utility loss is a per-symbol distortion. This crate provides the
//! source models, the belief-state MDP that makes the problem tractable,
//! actor-critic training of release policies, a myopic rate-distortion
//! baseline, exact enumeration checks for small instances, GPS trace ingestion
//! and a memory-limited adversary.

pub mod a2c;
pub mod adversary;
pub mod belief;
pub mod distortion;
pub mod error;
pub mod geolife;
pub mod myopic;
pub mod nn;
pub mod oracle;
pub mod prob;
pub mod source;

pub use error::{PutError, Result};
