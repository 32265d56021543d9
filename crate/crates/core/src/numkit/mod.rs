//! Numeric foundation: matrices, a reverse-mode differentiation graph, a
//! seeded random stream, and a finite-difference gradient checker.
//!
//! Everything downstream (the policy network, PPO, the probe classifier)
//! builds on these four pieces. The design favors auditability over raw
//! speed: f64 throughout, explicit shapes, and validation at every boundary.

mod gradcheck;
mod graph;
mod matrix;
mod rng;

pub use gradcheck::check_gradient;
pub use graph::{AttnMask, Graph, Node};
pub use matrix::Matrix;
pub use rng::{derive_seed, Rng};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumError {
    #[error("shape mismatch in {op}: {a} vs {b}")]
    ShapeMismatch { op: &'static str, a: String, b: String },

    #[error("matrix dimensions must be nonzero, got {rows}x{cols}")]
    ZeroDim { rows: usize, cols: usize },

    #[error("buffer length {len} does not match {rows}x{cols}")]
    LengthMismatch { rows: usize, cols: usize, len: usize },

    #[error("non-finite value produced by {ctx} at ({row}, {col})")]
    NonFinite { ctx: &'static str, row: usize, col: usize },

    #[error("ln of non-positive entry {value} at ({row}, {col})")]
    LnDomain { value: f64, row: usize, col: usize },

    #[error("{0}")]
    Invalid(String),
}
