//! Data model and I/O for utterances, documents and labels, plus synthetic
//! corpus generation used as desk-scale ground truth.

mod io;
mod synthetic;

pub use io::{load_feature_file, load_manifest, save_manifest, write_feature_file, ManifestDoc};
pub use synthetic::{
    generate_planted_corpus, generate_synthetic_corpus, PlantedOccurrence, PlantedTermSpec,
    SyntheticGroundTruth, SyntheticSpec,
};

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default frame period in seconds (10 ms hop).
pub const DEFAULT_FRAME_PERIOD: f64 = 0.010;

/// Per-utterance acoustic feature matrix, `num_frames x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub utterance_id: String,
    /// Seconds per frame; used to convert second-valued parameters to frames.
    pub frame_period: f64,
    pub data: Array2<f64>,
}

impl FeatureMatrix {
    pub fn new(utterance_id: impl Into<String>, data: Array2<f64>) -> Result<Self> {
        Self::with_frame_period(utterance_id, data, DEFAULT_FRAME_PERIOD)
    }

    pub fn with_frame_period(
        utterance_id: impl Into<String>,
        data: Array2<f64>,
        frame_period: f64,
    ) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::ShapeMismatch(format!(
                "feature matrix must be at least 1x1, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        for ((frame, dim), v) in data.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite { frame, dim });
            }
        }
        Ok(Self {
            utterance_id: utterance_id.into(),
            frame_period,
            data,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }
}

/// Topic annotation of one spoken document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Labels {
    /// Exactly one topic id.
    Single(usize),
    /// A subset of the label inventory. May be empty only through an explicit
    /// out-of-domain label, which callers model as a regular label id.
    Multi(Vec<usize>),
}

/// One spoken document: an ordered list of utterances plus its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SpokenDocument {
    pub doc_id: String,
    pub utterance_ids: Vec<String>,
    pub labels: Labels,
}

/// A corpus: documents plus the feature matrices they reference.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub documents: Vec<SpokenDocument>,
    pub utterances: BTreeMap<String, FeatureMatrix>,
}

impl Corpus {
    /// Validate referential integrity and dimensional consistency.
    pub fn validate(&self) -> Result<()> {
        let mut dim = None;
        for m in self.utterances.values() {
            match dim {
                None => dim = Some(m.dim()),
                Some(d) if d != m.dim() => {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        got: m.dim(),
                    })
                }
                _ => {}
            }
        }
        for doc in &self.documents {
            if doc.utterance_ids.is_empty() {
                return Err(Error::Format(format!(
                    "document {} has no utterances",
                    doc.doc_id
                )));
            }
            for utt in &doc.utterance_ids {
                if !self.utterances.contains_key(utt) {
                    return Err(Error::MissingUtterance {
                        doc: doc.doc_id.clone(),
                        utterance: utt.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Feature dimensionality; `None` for an empty corpus.
    pub fn dim(&self) -> Option<usize> {
        self.utterances.values().next().map(|m| m.dim())
    }

    pub fn total_frames(&self) -> usize {
        self.utterances.values().map(|m| m.num_frames()).sum()
    }

    /// Utterance ids in sorted order, the canonical iteration order for
    /// deterministic parallel reductions.
    pub fn utterance_ids(&self) -> Vec<&str> {
        self.utterances.keys().map(|s| s.as_str()).collect()
    }
}
