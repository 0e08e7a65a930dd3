//! CNN document classifier over acoustic-unit sequences: embedding lookup,
//! one windowed convolution with ReLU, max-over-time pooling, a hidden layer
//! and a softmax or sigmoid head.

mod io;
mod model;
mod train;

pub use io::{load_checkpoint, save_checkpoint, save_training_log};
pub use model::{
    adadelta_step, backward, binary_cross_entropy, categorical_cross_entropy, forward,
    AdadeltaState, CnnModel, ForwardCache, Gradients, PaddedBatch,
};
pub use train::{predict_classes, predict_scores, train, CnnDataset, CnnVocab, EpochLog, ModelSelection};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    /// Single-label classification; rows of the output sum to one.
    Softmax,
    /// Multi-label classification; independent per-label probabilities.
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub embed_dim: usize,
    /// Convolution n-gram window; must be odd.
    pub conv_window: usize,
    pub conv_units: usize,
    pub hidden_units: usize,
    pub dropout: f64,
    /// 18 for single-label runs, 30 for multi-label runs.
    pub batch_size: usize,
    pub max_epochs: usize,
    pub head: Head,
    pub num_classes: usize,
    /// Adadelta decay and stabilizer.
    pub rho: f64,
    pub epsilon: f64,
    pub rng_seed: u64,
}

impl Default for CnnConfig {
    fn default() -> Self {
        Self {
            embed_dim: 50,
            conv_window: 7,
            conv_units: 1024,
            hidden_units: 1024,
            dropout: 0.2,
            batch_size: 18,
            max_epochs: 100,
            head: Head::Softmax,
            num_classes: 2,
            rho: 0.95,
            epsilon: 1e-6,
            rng_seed: 0,
        }
    }
}

impl CnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.conv_window % 2 == 0 {
            return Err(Error::InvalidConfig(
                "convolution window must be odd".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig("dropout must be in [0, 1)".into()));
        }
        if self.batch_size == 0 || self.num_classes == 0 {
            return Err(Error::InvalidConfig(
                "batch size and classes must be >= 1".into(),
            ));
        }
        if self.embed_dim == 0 || self.conv_units == 0 || self.hidden_units == 0 {
            return Err(Error::InvalidConfig("layer sizes must be >= 1".into()));
        }
        Ok(())
    }
}
