//! Seeded synthetic corpora with known unit sequences, topics and planted
//! term repetitions. These provide the ground truth that desk-scale tests
//! measure discovery and classification against.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use super::{Corpus, FeatureMatrix, Labels, SpokenDocument};
use crate::{Error, Result};

/// Generative model for a unit-structured corpus: each topic has its own
/// unigram distribution over latent units; each unit emits a left-to-right
/// sequence of Gaussian states.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_topics: usize,
    pub num_latent_units: usize,
    pub states_per_unit: usize,
    /// Dirichlet concentration of the per-topic unit distributions. Smaller
    /// values give peakier, more separable topics.
    pub topic_concentration: f64,
    pub docs_per_topic: usize,
    pub utterances_per_doc: usize,
    /// Inclusive range of unit tokens per utterance.
    pub units_per_utterance: (usize, usize),
    /// Inclusive range of frames per unit token.
    pub frames_per_unit: (usize, usize),
    pub feature_dim: usize,
    /// Scale of the per-state Gaussian means.
    pub emission_scale: f64,
    /// Standard deviation of the additive frame noise. Zero is permitted and
    /// makes frames equal the state means exactly.
    pub noise_std: f64,
    pub rng_seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_topics: 6,
            num_latent_units: 40,
            states_per_unit: 2,
            topic_concentration: 0.2,
            docs_per_topic: 30,
            utterances_per_doc: 3,
            units_per_utterance: (15, 25),
            frames_per_unit: (4, 8),
            feature_dim: 10,
            emission_scale: 1.0,
            noise_std: 0.1,
            rng_seed: 0,
        }
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        let counts = [
            self.num_topics,
            self.num_latent_units,
            self.states_per_unit,
            self.docs_per_topic,
            self.utterances_per_doc,
            self.units_per_utterance.0,
            self.frames_per_unit.0,
            self.feature_dim,
        ];
        if counts.contains(&0) {
            return Err(Error::InvalidConfig("all counts must be positive".into()));
        }
        if self.units_per_utterance.0 > self.units_per_utterance.1
            || self.frames_per_unit.0 > self.frames_per_unit.1
        {
            return Err(Error::InvalidConfig("empty range".into()));
        }
        if self.topic_concentration <= 0.0 || self.emission_scale <= 0.0 {
            return Err(Error::InvalidConfig(
                "concentration and emission scale must be positive".into(),
            ));
        }
        if self.noise_std < 0.0 {
            return Err(Error::InvalidConfig("noise std must be >= 0".into()));
        }
        Ok(())
    }
}

/// What the generator actually drew: the oracle for discovery quality.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SyntheticGroundTruth {
    /// doc_id -> topic id
    pub topics: BTreeMap<String, usize>,
    /// utterance_id -> (unit, start_frame, end_frame) segments, inclusive ends.
    pub units: BTreeMap<String, Vec<(usize, usize, usize)>>,
}

/// Generate a corpus from `spec`. Pure function of the spec: identical specs
/// produce bit-identical corpora.
pub fn generate_synthetic_corpus(spec: &SyntheticSpec) -> Result<(Corpus, SyntheticGroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");

    // Per-(unit, state) mean vectors.
    let n_units = spec.num_latent_units;
    let n_states = spec.states_per_unit;
    let mut means = Array2::<f64>::zeros((n_units * n_states, spec.feature_dim));
    for mut row in means.rows_mut() {
        for v in row.iter_mut() {
            *v = spec.emission_scale * std_normal.sample(&mut rng);
        }
    }

    // Per-topic unigram distributions over units, via normalized Gamma draws.
    let gamma = Gamma::new(spec.topic_concentration, 1.0)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut topic_dists = Vec::with_capacity(spec.num_topics);
    for _ in 0..spec.num_topics {
        let mut weights: Vec<f64> = (0..n_units).map(|_| gamma.sample(&mut rng)).collect();
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            // All-zero draws only happen for extreme concentrations; fall back
            // to uniform rather than emitting NaN weights.
            weights = vec![1.0 / n_units as f64; n_units];
        } else {
            for w in &mut weights {
                *w /= total;
            }
        }
        topic_dists.push(weights);
    }

    let mut corpus = Corpus::default();
    let mut truth = SyntheticGroundTruth::default();

    for topic in 0..spec.num_topics {
        let dist = &topic_dists[topic];
        for d in 0..spec.docs_per_topic {
            let doc_id = format!("t{topic:02}_d{d:03}");
            let mut utterance_ids = Vec::with_capacity(spec.utterances_per_doc);
            for u in 0..spec.utterances_per_doc {
                let utt_id = format!("{doc_id}_u{u:02}");
                let n_tokens =
                    rng.random_range(spec.units_per_utterance.0..=spec.units_per_utterance.1);
                let mut frames: Vec<f64> = Vec::new();
                let mut segments = Vec::with_capacity(n_tokens);
                let mut cursor = 0usize;
                for _ in 0..n_tokens {
                    let unit = sample_categorical(&mut rng, dist);
                    let n_frames =
                        rng.random_range(spec.frames_per_unit.0..=spec.frames_per_unit.1);
                    for f in 0..n_frames {
                        // Left-to-right state assignment within the token.
                        let state = f * n_states / n_frames;
                        let mean = means.row(unit * n_states + state);
                        for &m in mean.iter() {
                            let noise = if spec.noise_std > 0.0 {
                                spec.noise_std * std_normal.sample(&mut rng)
                            } else {
                                0.0
                            };
                            frames.push(m + noise);
                        }
                    }
                    segments.push((unit, cursor, cursor + n_frames - 1));
                    cursor += n_frames;
                }
                let data = Array2::from_shape_vec((cursor, spec.feature_dim), frames)
                    .expect("frame buffer matches shape");
                corpus
                    .utterances
                    .insert(utt_id.clone(), FeatureMatrix::new(utt_id.clone(), data)?);
                truth.units.insert(utt_id.clone(), segments);
                utterance_ids.push(utt_id);
            }
            truth.topics.insert(doc_id.clone(), topic);
            corpus.documents.push(SpokenDocument {
                doc_id,
                utterance_ids,
                labels: Labels::Single(topic),
            });
        }
    }
    corpus.validate()?;
    Ok((corpus, truth))
}

fn sample_categorical(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let r: f64 = rng.random::<f64>();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if r < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Corpus with repeated "signature" segments planted into documents of the
/// same topic, surrounded by non-repeating filler. The repeated segments are
/// what term discovery is expected to find.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantedTermSpec {
    pub num_topics: usize,
    /// Distinct signature terms per topic.
    pub terms_per_topic: usize,
    /// Frames per signature term (>= 60 keeps terms above a 0.6 s minimum at
    /// the default frame period).
    pub term_frames: usize,
    /// Planted term occurrences per document.
    pub occurrences_per_doc: usize,
    pub docs_per_topic: usize,
    /// Inclusive range of filler frames around each occurrence.
    pub filler_frames: (usize, usize),
    pub feature_dim: usize,
    /// Noise added to each planted copy of a term.
    pub noise_std: f64,
    pub rng_seed: u64,
}

impl Default for PlantedTermSpec {
    fn default() -> Self {
        Self {
            num_topics: 6,
            terms_per_topic: 3,
            term_frames: 70,
            occurrences_per_doc: 3,
            docs_per_topic: 30,
            filler_frames: (20, 40),
            feature_dim: 10,
            noise_std: 0.05,
            rng_seed: 0,
        }
    }
}

/// One planted term occurrence, for recovery scoring.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedOccurrence {
    pub utterance_id: String,
    /// Inclusive frame span.
    pub span: (usize, usize),
    pub term_id: usize,
    pub topic: usize,
}

/// Generate a planted-term corpus; one utterance per document.
pub fn generate_planted_corpus(spec: &PlantedTermSpec) -> Result<(Corpus, Vec<PlantedOccurrence>)> {
    if spec.num_topics == 0
        || spec.terms_per_topic == 0
        || spec.term_frames == 0
        || spec.occurrences_per_doc == 0
        || spec.docs_per_topic == 0
        || spec.feature_dim == 0
    {
        return Err(Error::InvalidConfig("all counts must be positive".into()));
    }
    if spec.filler_frames.0 > spec.filler_frames.1 || spec.filler_frames.0 == 0 {
        return Err(Error::InvalidConfig("bad filler range".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");

    // Signature templates, unit-normalized per frame so cosine similarity
    // between noisy copies stays close to 1.
    let n_terms = spec.num_topics * spec.terms_per_topic;
    let mut templates = Vec::with_capacity(n_terms);
    for _ in 0..n_terms {
        let mut t = Array2::<f64>::zeros((spec.term_frames, spec.feature_dim));
        for mut row in t.rows_mut() {
            let mut norm = 0.0;
            for v in row.iter_mut() {
                *v = std_normal.sample(&mut rng);
                norm += *v * *v;
            }
            let norm = norm.sqrt().max(1e-12);
            for v in row.iter_mut() {
                *v /= norm;
            }
        }
        templates.push(t);
    }

    let mut corpus = Corpus::default();
    let mut occurrences = Vec::new();

    for topic in 0..spec.num_topics {
        for d in 0..spec.docs_per_topic {
            let doc_id = format!("t{topic:02}_d{d:03}");
            let utt_id = format!("{doc_id}_u00");
            let mut frames: Vec<f64> = Vec::new();
            let mut cursor = 0usize;
            let push_filler = |rng: &mut ChaCha8Rng, frames: &mut Vec<f64>, cursor: &mut usize| {
                let n = rng.random_range(spec.filler_frames.0..=spec.filler_frames.1);
                for _ in 0..n {
                    for _ in 0..spec.feature_dim {
                        frames.push(std_normal.sample(rng));
                    }
                }
                *cursor += n;
            };
            push_filler(&mut rng, &mut frames, &mut cursor);
            for _ in 0..spec.occurrences_per_doc {
                let term_local = rng.random_range(0..spec.terms_per_topic);
                let term_id = topic * spec.terms_per_topic + term_local;
                let start = cursor;
                for row in templates[term_id].rows() {
                    for &v in row.iter() {
                        let noise = if spec.noise_std > 0.0 {
                            spec.noise_std * std_normal.sample(&mut rng)
                        } else {
                            0.0
                        };
                        frames.push(v + noise);
                    }
                }
                cursor += spec.term_frames;
                occurrences.push(PlantedOccurrence {
                    utterance_id: utt_id.clone(),
                    span: (start, cursor - 1),
                    term_id,
                    topic,
                });
                push_filler(&mut rng, &mut frames, &mut cursor);
            }
            let data = Array2::from_shape_vec((cursor, spec.feature_dim), frames)
                .expect("frame buffer matches shape");
            corpus
                .utterances
                .insert(utt_id.clone(), FeatureMatrix::new(utt_id.clone(), data)?);
            corpus.documents.push(SpokenDocument {
                doc_id,
                utterance_ids: vec![utt_id],
                labels: Labels::Single(topic),
            });
        }
    }
    corpus.validate()?;
    Ok((corpus, occurrences))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_is_bit_identical() {
        let spec = SyntheticSpec {
            docs_per_topic: 2,
            num_topics: 2,
            ..Default::default()
        };
        let (a, ta) = generate_synthetic_corpus(&spec).unwrap();
        let (b, tb) = generate_synthetic_corpus(&spec).unwrap();
        assert_eq!(ta.topics, tb.topics);
        assert_eq!(ta.units, tb.units);
        for (id, m) in &a.utterances {
            assert_eq!(m.data, b.utterances[id].data);
        }
    }

    #[test]
    fn zero_noise_frames_equal_state_means() {
        let spec = SyntheticSpec {
            num_topics: 1,
            num_latent_units: 2,
            states_per_unit: 1,
            docs_per_topic: 1,
            utterances_per_doc: 1,
            units_per_utterance: (3, 3),
            frames_per_unit: (2, 2),
            noise_std: 0.0,
            ..Default::default()
        };
        let (corpus, truth) = generate_synthetic_corpus(&spec).unwrap();
        let utt = corpus.utterances.values().next().unwrap();
        for &(_, start, end) in truth.units.values().next().unwrap() {
            // All frames of a 1-state token are identical.
            for f in start..=end {
                assert_eq!(utt.data.row(f), utt.data.row(start));
            }
        }
    }

    #[test]
    fn document_counts_and_labels_are_balanced() {
        let spec = SyntheticSpec {
            num_topics: 6,
            docs_per_topic: 30,
            utterances_per_doc: 1,
            units_per_utterance: (2, 3),
            frames_per_unit: (2, 3),
            ..Default::default()
        };
        let (corpus, _) = generate_synthetic_corpus(&spec).unwrap();
        assert_eq!(corpus.documents.len(), 180);
        let mut per_topic = vec![0usize; 6];
        for doc in &corpus.documents {
            match doc.labels {
                Labels::Single(t) => per_topic[t] += 1,
                _ => panic!("synthetic corpus is single-label"),
            }
        }
        assert_eq!(per_topic, vec![30; 6]);
    }

    #[test]
    fn planted_occurrences_lie_within_their_utterances() {
        let spec = PlantedTermSpec {
            num_topics: 2,
            docs_per_topic: 2,
            ..Default::default()
        };
        let (corpus, occs) = generate_planted_corpus(&spec).unwrap();
        assert_eq!(occs.len(), 2 * 2 * spec.occurrences_per_doc);
        for occ in &occs {
            let utt = &corpus.utterances[&occ.utterance_id];
            assert!(occ.span.1 < utt.num_frames());
            assert_eq!(occ.span.1 - occ.span.0 + 1, spec.term_frames);
        }
    }
}
