//! Synthetic route-recommendation world.
//!
//! A grid road network stands in for a real map: candidate routes come from
//! jittered shortest-path draws, user choices from a per-user linear utility
//! with Gumbel noise, and trajectories from the chosen route with a
//! controllable deviation fraction. Coverage labels are Jaccard similarities
//! over edge-id sets. Everything is reproducible from `(config, seed)`.

mod dataset;
mod gen;
mod grid;

pub use dataset::{read_dataset, read_dataset_str, write_dataset, write_dataset_string, SCHEMA_VERSION};
pub use gen::{
    coverage_rate, derive_trajectory, generate_candidates, generate_dataset, inject_noise,
    route_features, simulate_choice, GenConfig,
};
pub use grid::{build_grid_graph, EdgeAttr, RoadGraph};

use serde::{Deserialize, Serialize};
use std::fmt;

/// One candidate route: an ordered simple path plus its feature vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub edge_ids: Vec<u32>,
    pub features: Vec<f64>,
}

/// One query: candidates, scene context, user history, the observed
/// trajectory, per-candidate coverage, and the ground-truth index.
///
/// `is_noisy` marks samples whose trajectory was corrupted by the misclick
/// simulator; it exists for evaluation only and must not feed the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub schema_version: u32,
    pub sample_id: u64,
    pub n_candidates: usize,
    pub candidates: Vec<Route>,
    pub scene: Vec<f64>,
    pub history: Vec<Vec<f64>>,
    pub trajectory_edge_ids: Vec<u32>,
    pub cr: Vec<f64>,
    pub gt_index: usize,
    pub is_noisy: bool,
}

impl Sample {
    /// Coverage rate of the ground-truth route.
    pub fn gt_cr(&self) -> f64 {
        self.cr[self.gt_index]
    }
}

/// Errors from world construction, simulation, and dataset I/O.
#[derive(Clone, Debug, PartialEq)]
pub enum WorldError {
    /// Invalid configuration (grid too small, zero candidates, ...).
    Config(String),
    /// A caller-side contract violation (empty candidate set, ...).
    Contract(String),
    /// A dataset line failed to parse.
    Parse { line: usize, detail: String },
    /// A dataset line carries an unsupported schema version.
    Version { line: usize, found: u32, expected: u32 },
    /// Underlying file I/O failed.
    Io(String),
}

impl fmt::Display for WorldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WorldError::Config(msg) => write!(f, "config error: {msg}"),
            WorldError::Contract(msg) => write!(f, "contract violation: {msg}"),
            WorldError::Parse { line, detail } => {
                write!(f, "parse error at line {line}: {detail}")
            }
            WorldError::Version {
                line,
                found,
                expected,
            } => write!(
                f,
                "schema version mismatch at line {line}: found {found}, expected {expected}"
            ),
            WorldError::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl std::error::Error for WorldError {}
