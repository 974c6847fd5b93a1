//! Differentially private synthetic graph release.

pub mod lp;
pub mod unweighted;
pub mod weighted;

use serde::{Deserialize, Serialize};

/// Largest constraint violation of a post-processed release, measured on a
/// freshly drawn constraint sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub lambda: f64,
    pub constraints_checked: usize,
    pub seed: u64,
}

/// Metadata accompanying a released graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReleaseOutput {
    pub mechanism: String,
    pub epsilon: f64,
    pub delta: f64,
    /// Laplace scale per coordinate; 0 when no noise was added.
    pub noise_scale: f64,
    /// Budget spent on each sign channel.
    pub channel_epsilon: f64,
    pub channel_delta: f64,
    pub postprocess: String,
    pub audit: Option<AuditReport>,
    /// False for the non-private test modes.
    pub private: bool,
    pub seed: u64,
}
