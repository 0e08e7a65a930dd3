//! Acoustic unit discovery: a truncated Dirichlet-process phone loop of
//! GMM-HMM units, trained with variational Bayes and decoded with Viterbi
//! into full-coverage unit sequences.

mod inference;
mod io;
mod model;
mod train;

pub use inference::{forward_backward, viterbi_decode, FbResult, SuffStats, UnifiedHmm};
pub use io::{load_model, load_unit_sequences, save_model, save_unit_sequences};
pub use model::{init_model, stick_weights, PhoneLoopModel, Priors};
pub use train::{distinct_units, tokenize_corpus_aud, vb_train};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudConfig {
    /// Maximum number of units in the truncated infinite mixture.
    pub truncation: usize,
    pub states_per_unit: usize,
    pub gaussians_per_state: usize,
    /// Stick-breaking concentration; tuned over {1.0, 10.0}.
    pub concentration: f64,
    pub training_iterations: usize,
    pub rng_seed: u64,
}

impl Default for AudConfig {
    fn default() -> Self {
        Self {
            truncation: 200,
            states_per_unit: 3,
            gaussians_per_state: 2,
            concentration: 1.0,
            training_iterations: 10,
            rng_seed: 0,
        }
    }
}

impl AudConfig {
    pub fn validate(&self) -> Result<()> {
        if self.truncation == 0 || self.states_per_unit == 0 || self.gaussians_per_state == 0 {
            return Err(Error::InvalidConfig("counts must be >= 1".into()));
        }
        if self.concentration <= 0.0 {
            return Err(Error::InvalidConfig("concentration must be > 0".into()));
        }
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.truncation * self.states_per_unit
    }

    pub fn num_components(&self) -> usize {
        self.num_states() * self.gaussians_per_state
    }
}

/// Full-coverage tokenization of one utterance: contiguous, non-overlapping
/// unit segments covering every frame. Spans are inclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitSequence {
    pub utterance_id: String,
    /// `(unit, start_frame, end_frame)` segments.
    pub units: Vec<(u32, usize, usize)>,
}

impl UnitSequence {
    /// The unit ids in order, one per segment.
    pub fn unit_ids(&self) -> Vec<u32> {
        self.units.iter().map(|&(u, _, _)| u).collect()
    }

    /// Check contiguity and full coverage of `num_frames`.
    pub fn covers(&self, num_frames: usize) -> bool {
        let mut expected = 0usize;
        for &(_, start, end) in &self.units {
            if start != expected || end < start {
                return false;
            }
            expected = end + 1;
        }
        expected == num_frames
    }
}
