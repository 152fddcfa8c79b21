//! Reward-aware proto-representations for tabular reinforcement learning.
//!
//! The crate computes and learns the successor representation (SR), the
//! default representation (DR) and the maximum-entropy representation (MER),
//! and uses them for planning, reward shaping, option discovery, count-based
//! exploration and transfer.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod mdp;
pub mod options;
pub mod planning;
pub mod repr;

pub use error::{Error, Result};
