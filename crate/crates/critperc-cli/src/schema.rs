//! CSV row types. Column order is the field order; `docs/cli.md` lists them.

use serde::{Deserialize, Serialize};

pub const EXCURSION_COLUMNS: &[&str] = &["sample_id", "tau", "Z_tau", "Z_tau_minus_1", "gamma_max", "n_subexcursions"];
pub const CLUSTER_COLUMNS: &[&str] = &["sample_id", "tau", "size", "diameter", "root_loop_size", "gamma_max"];
pub const SURVIVAL_COLUMNS: &[&str] = &["x", "empirical_survival"];
pub const WALK_COLUMNS: &[&str] = &["trace_id", "t", "displacement"];
pub const SCALING_COLUMNS: &[&str] = &["sample_id", "n", "tau", "size", "rescaled_diameter", "distortion"];

/// Peeling excursion or contour process summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcursionRow {
    pub sample_id: String,
    pub tau: usize,
    #[serde(rename = "Z_tau")]
    pub z_tau: i64,
    #[serde(rename = "Z_tau_minus_1")]
    pub z_tau_minus_1: i64,
    pub gamma_max: u64,
    pub n_subexcursions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRow {
    pub sample_id: String,
    pub tau: usize,
    pub size: usize,
    pub diameter: u32,
    pub root_loop_size: usize,
    pub gamma_max: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRow {
    pub x: f64,
    pub empirical_survival: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkRow {
    pub trace_id: String,
    pub t: f64,
    pub displacement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub sample_id: String,
    pub n: u64,
    pub tau: usize,
    pub size: usize,
    pub rescaled_diameter: f64,
    pub distortion: f64,
}

/// Cluster export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterExport {
    pub n_vertices: usize,
    pub n_edges: usize,
    pub root: usize,
    pub adjacency: Vec<Vec<u32>>,
    pub provenance: Vec<String>,
    pub source_path_digest: String,
}

pub fn sample_id(seed: u64, task: usize) -> String {
    format!("{seed}-{task}")
}
