//! Unsupervised term discovery: find repeated word-like segments across
//! utterance pairs with a sparse cosine similarity matrix, diagonal median
//! filtering and band-constrained segmental DTW, then cluster the matches
//! into term categories via thresholded connected components.

mod cluster;
mod dtw;
mod pipeline;
mod rescore;
mod sparse;

pub use cluster::{cluster_terms, tokenize_documents_utd, SegmentNode, TermClusterSet};
pub use dtw::segmental_dtw;
pub use pipeline::discover_matches;
pub use rescore::{
    band_features, load_rescorer, rescore, save_rescorer, train_rescorer, RescoreModel,
    RescoreTrainConfig,
};
pub use sparse::{diagonal_search, sparse_cosine_matrix, SeedSegment, SparseSim};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UtdConfig {
    /// Cosine similarity threshold for the sparse matrix.
    pub cosine_threshold: f64,
    /// Diagonal median filter duration in seconds; tuned over {0.6, 0.7}.
    pub median_filter_duration: f64,
    /// Minimum duration of a reported match in seconds.
    pub min_match_duration: f64,
    /// Graph edge threshold; tuned over {0.85, 0.88, 0.90, 0.92}.
    pub graph_edge_threshold: f64,
    pub use_rescoring: bool,
    /// Half-width of the DTW search band around the seed diagonal, in frames.
    pub dtw_band_width: usize,
}

impl Default for UtdConfig {
    fn default() -> Self {
        Self {
            cosine_threshold: 0.5,
            median_filter_duration: 0.7,
            min_match_duration: 0.5,
            graph_edge_threshold: 0.88,
            use_rescoring: false,
            dtw_band_width: 75,
        }
    }
}

impl UtdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.cosine_threshold && self.cosine_threshold < 1.0) {
            return Err(Error::InvalidConfig(
                "cosine threshold must be in (0, 1)".into(),
            ));
        }
        if self.median_filter_duration <= 0.0 || self.min_match_duration <= 0.0 {
            return Err(Error::InvalidConfig("durations must be positive".into()));
        }
        if !(0.0 < self.graph_edge_threshold && self.graph_edge_threshold < 1.0) {
            return Err(Error::InvalidConfig(
                "graph edge threshold must be in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// A matching pair of segments found by segmental DTW. Spans are inclusive
/// frame ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub utt_a: String,
    pub utt_b: String,
    pub span_a: (usize, usize),
    pub span_b: (usize, usize),
    /// `1 - mean cosine distance` along the best alignment path, in [0, 1].
    pub dtw_similarity: f64,
    pub rescored_similarity: Option<f64>,
}

impl Match {
    /// Similarity used for graph edges under the given rescoring setting.
    pub fn edge_weight(&self, use_rescoring: bool) -> f64 {
        if use_rescoring {
            self.rescored_similarity.unwrap_or(self.dtw_similarity)
        } else {
            self.dtw_similarity
        }
    }
}
