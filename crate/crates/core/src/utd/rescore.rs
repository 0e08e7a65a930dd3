//! Logistic-regression rescoring of DTW matches. Acoustically stationary
//! fillers match all over the similarity matrix while contentful terms
//! concentrate near the main diagonal, so the features are sparse-matrix
//! occupancy counts in diagonal bands at increasing offsets from the match
//! diagonal.

use serde::{Deserialize, Serialize};

use super::sparse::SparseSim;
use super::Match;
use crate::util::sigmoid;
use crate::{Error, Result};

/// Width of each diagonal band in frames.
const BAND_WIDTH: i64 = 5;
/// Band center offsets; the +-5 and +-10 bands are pooled over sign.
const BAND_OFFSETS: [i64; 3] = [0, 5, 10];

/// Number of pooled band-count features.
pub const NUM_BAND_FEATURES: usize = BAND_OFFSETS.len();

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescoreModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl RescoreModel {
    pub fn zeros(num_features: usize) -> Self {
        Self {
            weights: vec![0.0; num_features],
            bias: 0.0,
        }
    }
}

/// Count sparse-matrix entries in five diagonal bands of width 5 centered at
/// offsets 0, +-5 and +-10 from the match diagonal, pooled over sign and
/// normalized by the match length in frames. Only rows inside the match span
/// are counted.
pub fn band_features(m: &Match, sim: &SparseSim) -> [f64; NUM_BAND_FEATURES] {
    let diag = m.span_a.0 as i64 - m.span_b.0 as i64;
    let half = BAND_WIDTH / 2;
    let mut counts = [0.0f64; NUM_BAND_FEATURES];
    for &(i, j, _) in &sim.entries {
        let i = i as usize;
        if i < m.span_a.0 || i > m.span_a.1 {
            continue;
        }
        let off = (i as i64 - j as i64) - diag;
        for (band, center) in BAND_OFFSETS.iter().enumerate() {
            if (off.abs() - center).abs() <= half {
                counts[band] += 1.0;
            }
        }
    }
    let len = (m.span_a.1 - m.span_a.0 + 1) as f64;
    for c in &mut counts {
        *c /= len;
    }
    counts
}

/// Rescored similarity in (0, 1): `sigmoid(w . f + b)` over the band
/// features.
pub fn rescore(m: &Match, sim: &SparseSim, model: &RescoreModel) -> f64 {
    let f = band_features(m, sim);
    let z: f64 = f
        .iter()
        .zip(&model.weights)
        .map(|(x, w)| x * w)
        .sum::<f64>()
        + model.bias;
    sigmoid(z)
}

/// Rescoring model as JSON.
pub fn save_rescorer(path: &std::path::Path, model: &RescoreModel) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(model)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_rescorer(path: &std::path::Path) -> Result<RescoreModel> {
    let bytes = std::fs::read(path)?;
    let model: RescoreModel = serde_json::from_slice(&bytes)?;
    if !model.bias.is_finite() || model.weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Format("non-finite rescorer weights".into()));
    }
    Ok(model)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RescoreTrainConfig {
    pub iterations: usize,
    pub learning_rate: f64,
}

impl Default for RescoreTrainConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            learning_rate: 1.0,
        }
    }
}

/// Fit the logistic regression by full-batch gradient descent on the mean
/// log-loss, starting from zero weights. Full-batch descent from a symmetric
/// start point makes the fit deterministic and invariant to duplicating the
/// data set.
pub fn train_rescorer(
    examples: &[(Vec<f64>, bool)],
    config: &RescoreTrainConfig,
) -> Result<RescoreModel> {
    if examples.is_empty() {
        return Err(Error::InvalidConfig("no training examples".into()));
    }
    let has_pos = examples.iter().any(|(_, y)| *y);
    let has_neg = examples.iter().any(|(_, y)| !*y);
    if !has_pos || !has_neg {
        return Err(Error::SingleClass);
    }
    let num_features = examples[0].0.len();
    if examples.iter().any(|(f, _)| f.len() != num_features) {
        return Err(Error::LengthMismatch {
            left: num_features,
            right: examples
                .iter()
                .map(|(f, _)| f.len())
                .find(|&l| l != num_features)
                .unwrap_or(num_features),
        });
    }
    let mut model = RescoreModel::zeros(num_features);
    let inv_n = 1.0 / examples.len() as f64;
    let mut grad_w = vec![0.0f64; num_features];
    for _ in 0..config.iterations {
        grad_w.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_b = 0.0;
        for (f, y) in examples {
            let z: f64 = f
                .iter()
                .zip(&model.weights)
                .map(|(x, w)| x * w)
                .sum::<f64>()
                + model.bias;
            let err = sigmoid(z) - if *y { 1.0 } else { 0.0 };
            for (g, x) in grad_w.iter_mut().zip(f) {
                *g += err * x;
            }
            grad_b += err;
        }
        for (w, g) in model.weights.iter_mut().zip(&grad_w) {
            *w -= config.learning_rate * g * inv_n;
        }
        model.bias -= config.learning_rate * grad_b * inv_n;
    }
    if !model.bias.is_finite() || model.weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFiniteLikelihood("rescorer diverged".into()));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_match() -> Match {
        Match {
            utt_a: "a".into(),
            utt_b: "b".into(),
            span_a: (10, 19),
            span_b: (30, 39),
            dtw_similarity: 0.9,
            rescored_similarity: None,
        }
    }

    fn sim_with(entries: Vec<(u32, u32, f64)>) -> SparseSim {
        SparseSim {
            rows: 60,
            cols: 60,
            entries,
        }
    }

    #[test]
    fn zero_model_scores_half() {
        let m = toy_match();
        let sim = sim_with(vec![(12, 32, 0.9)]);
        let model = RescoreModel::zeros(NUM_BAND_FEATURES);
        assert_eq!(rescore(&m, &sim, &model), 0.5);
    }

    #[test]
    fn main_diagonal_mass_with_positive_weight_scores_above_half() {
        let m = toy_match();
        // All entries on the match diagonal (offset 0).
        let entries = (10..20).map(|i| (i as u32, i as u32 + 20, 0.9)).collect();
        let sim = sim_with(entries);
        let model = RescoreModel {
            weights: vec![2.0, 0.0, 0.0],
            bias: 0.0,
        };
        assert!(rescore(&m, &sim, &model) > 0.5);
    }

    #[test]
    fn toy_matrix_matches_hand_evaluated_logistic() {
        let m = toy_match();
        // Offsets relative to diag = -20: entry (i, j) has off = i - j + 20.
        let sim = sim_with(vec![
            (10, 30, 0.9), // off 0 -> band 0
            (11, 30, 0.9), // off 1 -> band 0
            (15, 29, 0.9), // off 6 -> band 1 (|6| within 5 +- 2)
            (18, 40, 0.9), // off -2 -> band 0
            (12, 40, 0.9), // off -8 -> band 2
            (19, 27, 0.9), // off 12 -> band 2
            (5, 30, 0.9),  // row outside the span: ignored
        ]);
        let f = band_features(&m, &sim);
        assert_eq!(f, [3.0 / 10.0, 1.0 / 10.0, 2.0 / 10.0]);
        let model = RescoreModel {
            weights: vec![0.5, -1.0, 0.25],
            bias: 0.1,
        };
        let expected = sigmoid(0.5 * 0.3 - 1.0 * 0.1 + 0.25 * 0.2 + 0.1);
        assert!((rescore(&m, &sim, &model) - expected).abs() < 1e-15);
    }

    #[test]
    fn separable_set_reaches_full_accuracy() {
        let examples: Vec<(Vec<f64>, bool)> = (0..20)
            .map(|i| {
                let y = i % 2 == 0;
                let x = if y { 1.0 } else { -1.0 };
                (vec![x, 0.5 * x], y)
            })
            .collect();
        let model = train_rescorer(&examples, &RescoreTrainConfig::default()).unwrap();
        for (f, y) in &examples {
            let z: f64 = f.iter().zip(&model.weights).map(|(x, w)| x * w).sum::<f64>() + model.bias;
            assert_eq!(sigmoid(z) > 0.5, *y);
        }
    }

    #[test]
    fn flipped_labels_negate_weights() {
        let examples: Vec<(Vec<f64>, bool)> = vec![
            (vec![1.0, 0.2], true),
            (vec![0.8, -0.1], true),
            (vec![-0.9, 0.4], false),
            (vec![-1.1, -0.3], false),
        ];
        let flipped: Vec<(Vec<f64>, bool)> =
            examples.iter().map(|(f, y)| (f.clone(), !y)).collect();
        let cfg = RescoreTrainConfig::default();
        let a = train_rescorer(&examples, &cfg).unwrap();
        let b = train_rescorer(&flipped, &cfg).unwrap();
        for (wa, wb) in a.weights.iter().zip(&b.weights) {
            assert!((wa + wb).abs() < 1e-12);
        }
        assert!((a.bias + b.bias).abs() < 1e-12);
    }

    #[test]
    fn duplicated_data_gives_same_model() {
        let examples: Vec<(Vec<f64>, bool)> = vec![
            (vec![1.0], true),
            (vec![0.5], true),
            (vec![-0.7], false),
            (vec![-1.2], false),
        ];
        let mut doubled = examples.clone();
        doubled.extend(examples.clone());
        let cfg = RescoreTrainConfig::default();
        let a = train_rescorer(&examples, &cfg).unwrap();
        let b = train_rescorer(&doubled, &cfg).unwrap();
        for (wa, wb) in a.weights.iter().zip(&b.weights) {
            assert!((wa - wb).abs() < 1e-9);
        }
        assert!((a.bias - b.bias).abs() < 1e-9);
    }

    #[test]
    fn rescorer_round_trips_through_json() {
        let model = RescoreModel {
            weights: vec![0.25, -1.5, 3.0],
            bias: -0.125,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rescorer.json");
        save_rescorer(&path, &model).unwrap();
        assert_eq!(load_rescorer(&path).unwrap(), model);
    }

    #[test]
    fn single_class_data_is_rejected() {
        let examples = vec![(vec![1.0], true), (vec![2.0], true)];
        assert!(matches!(
            train_rescorer(&examples, &RescoreTrainConfig::default()),
            Err(Error::SingleClass)
        ));
    }
}
