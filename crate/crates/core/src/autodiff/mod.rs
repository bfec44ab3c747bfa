//! Dense-tensor arithmetic with reverse-mode differentiation.
//!
//! Every gradient used by training flows through this module. The tape is
//! dynamic: each forward pass records the nodes it executes, so graph depth
//! may depend on the data (the decoder stops at a data-dependent step).
//! All arithmetic is 64-bit; gradients are verifiable against central
//! differences via [`grad_check`].

mod checkpoint;
mod gradcheck;
mod graph;
mod store;
mod tensor;

pub use checkpoint::{read_checkpoint, write_checkpoint, CKPT_MAGIC, CKPT_VERSION};
pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{Graph, NodeId};
pub use store::{AdamConfig, ParamEntry, ParamStore};
pub use tensor::Tensor;

use std::fmt;

/// Errors raised by tensor construction, graph ops, and checkpoint I/O.
#[derive(Clone, Debug, PartialEq)]
pub enum DiffError {
    /// Operand shapes do not conform for the named op.
    Shape { op: &'static str, detail: String },
    /// A value outside an op's domain (e.g. log of a non-positive value).
    Domain { op: &'static str, detail: String },
    /// A caller-side contract violation (non-scalar loss, missing param, ...).
    Contract(String),
    /// The function under gradient check returned different values for
    /// identical parameters.
    Determinism { first: f64, second: f64 },
    /// Checkpoint container could not be read or written.
    Checkpoint(String),
}

impl fmt::Display for DiffError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiffError::Shape { op, detail } => write!(f, "shape error in {op}: {detail}"),
            DiffError::Domain { op, detail } => write!(f, "domain error in {op}: {detail}"),
            DiffError::Contract(msg) => write!(f, "contract violation: {msg}"),
            DiffError::Determinism { first, second } => write!(
                f,
                "function under check is not deterministic: {first} vs {second}"
            ),
            DiffError::Checkpoint(msg) => write!(f, "checkpoint error: {msg}"),
        }
    }
}

impl std::error::Error for DiffError {}
