//! Desk-scale policy and value stack over a micro-vocabulary.

pub mod dialogue;
pub mod features;
pub mod model;
pub mod vocab;

pub use dialogue::{DecodeConfig, Dialogue, GeneratedStep, ObservationStep, SampledTurn, SegmentLimits};
pub use features::{Context, FeatureMap, Features, ObservationKind, ObservationView, QuestionView};
pub use model::{
    log_prob_and_grad, masked_dist, masked_log_prob_and_grad, next_token_dist, softmax, value_and_grad,
    PolicyParams, ValueParams,
};
pub use vocab::{ActionSpace, Segment, Vocab};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub feature_dim: usize,
    pub vocab_size: usize,
    pub seed: u64,
}

/// Policy, value head and the feature window they were trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub window: usize,
    pub policy: Vec<f64>,
    pub value: Vec<f64>,
}

impl Checkpoint {
    pub fn new(policy: &PolicyParams, value: &ValueParams, window: usize, seed: u64) -> Self {
        Self {
            header: CheckpointHeader {
                feature_dim: policy.feature_dim(),
                vocab_size: policy.vocab_size(),
                seed,
            },
            window,
            policy: policy.weights().to_vec(),
            value: value.weights().to_vec(),
        }
    }

    pub fn params(&self) -> Result<(PolicyParams, ValueParams)> {
        let h = self.header;
        let policy = PolicyParams::from_weights(h.vocab_size, h.feature_dim, self.policy.clone())?;
        if self.value.len() != h.feature_dim {
            return Err(Error::config(format!(
                "value head has {} weights, header says {}",
                self.value.len(),
                h.feature_dim
            )));
        }
        Ok((policy, ValueParams::from_weights(self.value.clone())?))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_vec(self)?)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| Error::config(format!("checkpoint {}: {e}", path.display())))
    }
}
