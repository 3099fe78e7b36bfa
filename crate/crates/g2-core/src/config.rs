//! Run configuration shared by the library and the CLI.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::client::ClientConfig;
use crate::graph::EvolutionConfig;

/// How node attributes and semantic edges evolve.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvolutionMode {
    /// Model-driven joint update of attributes and connections.
    #[default]
    Vlm,
    /// Rule-based embedding propagation, no chat calls.
    Lite,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    #[default]
    Sequential,
    Parallel,
}

fn default_window() -> usize {
    2
}
fn default_top_k() -> usize {
    5
}
fn default_iters() -> u64 {
    3
}
fn default_alpha() -> f64 {
    0.5
}
fn default_lite_k() -> usize {
    5
}
fn default_k() -> usize {
    5
}
fn default_tau_max() -> u64 {
    3
}

/// Full pipeline configuration. The JSON form of this struct is the config
/// file format; command-line flags override file values, which override the
/// built-in defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub client: ClientConfig,
    /// Structural window: units within this reading-order distance are
    /// linked at initialization.
    pub window: usize,
    /// Similarity candidates shown to the evolver per node.
    pub top_k: usize,
    /// Evolution passes over the content graph.
    pub iters: u64,
    pub mode: EvolutionMode,
    /// Lite blend factor.
    pub alpha: f64,
    /// Lite neighbor count.
    pub lite_k: usize,
    /// Retrieval node budget per readout.
    pub k: usize,
    /// Maximum planning refinement rounds.
    pub tau_max: u64,
    pub schedule: Schedule,
    /// Store directory, when driven from a config file.
    pub store: Option<PathBuf>,
    /// Mock script path for fully offline runs.
    pub mock_script: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            client: ClientConfig::default(),
            window: default_window(),
            top_k: default_top_k(),
            iters: default_iters(),
            mode: EvolutionMode::default(),
            alpha: default_alpha(),
            lite_k: default_lite_k(),
            k: default_k(),
            tau_max: default_tau_max(),
            schedule: Schedule::default(),
            store: None,
            mock_script: None,
        }
    }
}

impl RunConfig {
    pub fn evolution(&self) -> EvolutionConfig {
        EvolutionConfig {
            iterations: self.iters,
            mode: self.mode,
            schedule: self.schedule,
            candidate_top_k: self.top_k,
            alpha: self.alpha,
            lite_top_k: self.lite_k,
        }
    }
}
