//! Generative route-list recommendation at desk scale.
//!
//! The crate is organized around the pipeline:
//!
//! * [`autodiff`] — dense f64 tensors, a dynamic reverse-mode tape, Adam,
//!   finite-difference gradient checking, and the checkpoint container.
//! * [`world`] — synthetic road network, candidate-route generation,
//!   user-choice simulation, coverage labels, and dataset I/O.
//! * [`features`] — z-score normalization, discrete embeddings, history
//!   attention, and assembly of per-route representations.
//! * [`model`] — encoder with scene-conditioned modulation, sigmoid state
//!   attention, masked autoregressive decoding with a stop token.
//! * [`rewards`] — stepwise corrective reward, stop-token reward, labels,
//!   and the noise-aware weight adaptation.
//! * [`trainer`] — reward-weighted supervised training, the REINFORCE
//!   variant, and run orchestration with logging and checkpoints.
//! * [`evalkit`] — offline metrics, the list objective and its enumeration
//!   check, and the MMR / DPP / pointwise baselines.

pub mod autodiff;
pub mod evalkit;
pub mod features;
pub mod model;
pub mod rewards;
pub mod trainer;
pub mod util;
pub mod world;

pub use autodiff::{
    grad_check, read_checkpoint, write_checkpoint, DiffError, GradCheckReport, Graph, NodeId,
    ParamStore, Tensor,
};
pub use world::{RoadGraph, Route, Sample};
