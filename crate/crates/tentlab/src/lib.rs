//! Numerical laboratory for weighted Bergman projections with matrix weights
//! on the unit disc and the unit ball of C^2.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod domination;
pub mod dyadic;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod projection;
pub mod weights;

pub use error::{LabError, Result};
