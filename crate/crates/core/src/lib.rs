//! Simulation and Hilbert-metric certification of consensus dynamics
//! `ẋ = A(t, x) x` with Metzler, zero-row-sum interaction matrices.

// `!(x > 0.0)` is used on purpose so NaN falls on the rejecting side.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod graph;
pub mod hilbert;
pub mod linalg;
pub mod output;
pub mod plot;
pub mod rng;
pub mod scenario;
pub mod topology;

pub use error::{Error, Result};
