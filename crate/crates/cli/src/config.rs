//! Experiment configuration: one JSON file covering every subcommand, with
//! the reference network and learner hyperparameters as defaults so an empty
//! config reproduces paper-shaped runs.

use nafd_core::madrl::TrainConfig;
use nafd_core::scenario::SystemConfig;
use nafd_core::sweep::NmseSweepConfig;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// Settings of the scheme-comparison command.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CompareConfig {
    /// Master seed of the held-out evaluation episodes.
    pub eval_seed: u64,
    /// Number of held-out episodes.
    pub episodes: usize,
    /// Checkpoint of a trained MATD3 run to include.
    pub matd3_checkpoint: Option<PathBuf>,
    /// Checkpoint of a trained MADDPG run to include.
    pub maddpg_checkpoint: Option<PathBuf>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            eval_seed: 9_000,
            episodes: 50,
            matd3_checkpoint: None,
            maddpg_checkpoint: None,
        }
    }
}

/// Settings of the validation command.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidateConfig {
    /// Seed of all validation randomness.
    pub seed: u64,
    /// Monte Carlo trials of the MMSE-consistency suite.
    pub mmse_trials: usize,
    /// Monte Carlo trials of the Jensen suite.
    pub jensen_trials: usize,
    /// Fault-injection hook: flips the sign of the downlink
    /// estimation-error term inside the Jensen suite. Only useful for
    /// testing that the suite actually detects broken rate expressions.
    pub flip_dee_sign: bool,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        ValidateConfig {
            seed: 77,
            mmse_trials: 2000,
            jensen_trials: 4000,
            flip_dee_sign: false,
        }
    }
}

/// Root configuration document.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub train: TrainConfig,
    pub sweep: NmseSweepConfig,
    pub compare: CompareConfig,
    pub validate: ValidateConfig,
}

impl ExperimentConfig {
    pub fn load(path: &std::path::Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}
