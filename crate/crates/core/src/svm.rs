//! Stochastic-gradient linear SVM with hinge loss and L1/L2 regularization,
//! one-vs-rest multiclass, and binary-relevance multi-label training.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bow::DocVector;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    L1,
    L2,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvmConfig {
    pub penalty: Penalty,
    /// Regularization constant; tuned over {1e-3, 1e-4} in the experiments.
    pub alpha: f64,
    /// SGD epochs; tuned over {30, 50}.
    pub epochs: usize,
    pub rng_seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            penalty: Penalty::L2,
            alpha: 1e-4,
            epochs: 50,
            rng_seed: 0,
        }
    }
}

/// Linear decision function `w . x + b`. The bias is unregularized.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![0.0; dim],
            bias: 0.0,
        }
    }

    /// Constant-negative fallback used when a label has no positive examples.
    pub fn constant_negative(dim: usize) -> Self {
        Self {
            weights: vec![0.0; dim],
            bias: -1.0,
        }
    }
}

pub fn decision(model: &LinearModel, x: &DocVector) -> f64 {
    x.dot_dense(&model.weights) + model.bias
}

/// Sign of the decision value; ties (exactly 0) go to +1.
pub fn predict(model: &LinearModel, x: &DocVector) -> i8 {
    if decision(model, x) >= 0.0 {
        1
    } else {
        -1
    }
}

/// `max(0, 1 - y (w.x + b))` for `y` in {-1, +1}.
pub fn hinge_loss(model: &LinearModel, x: &DocVector, y: i8) -> f64 {
    (1.0 - f64::from(y) * decision(model, x)).max(0.0)
}

/// Regularized training objective: mean hinge loss plus the penalty implied
/// by the update rule (L2: alpha/2 ||w||^2, L1: alpha ||w||_1).
pub fn objective(model: &LinearModel, xs: &[DocVector], ys: &[i8], config: &SvmConfig) -> f64 {
    let mean_hinge = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| hinge_loss(model, x, y))
        .sum::<f64>()
        / xs.len().max(1) as f64;
    let penalty = match config.penalty {
        Penalty::L2 => 0.5 * config.alpha * model.weights.iter().map(|w| w * w).sum::<f64>(),
        Penalty::L1 => config.alpha * model.weights.iter().map(|w| w.abs()).sum::<f64>(),
    };
    mean_hinge + penalty
}

/// Train a binary hinge-loss classifier with the Pegasos learning-rate
/// schedule `eta_t = 1 / (alpha (t + t0))`, `t0` chosen so `eta_1 <= 1`.
/// Data order is reshuffled each epoch from the config seed.
pub fn train_binary(
    xs: &[DocVector],
    ys: &[i8],
    dim: usize,
    config: &SvmConfig,
) -> Result<LinearModel> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if config.alpha <= 0.0 {
        return Err(Error::InvalidConfig("alpha must be positive".into()));
    }
    let has_pos = ys.iter().any(|&y| y > 0);
    let has_neg = ys.iter().any(|&y| y < 0);
    if !has_pos || !has_neg {
        return Err(Error::SingleClass);
    }

    let mut model = LinearModel::zeros(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let t0 = (1.0 / config.alpha).ceil();
    let mut t = 0f64;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1.0;
            let eta = 1.0 / (config.alpha * (t + t0));
            let x = &xs[i];
            let y = f64::from(ys[i]);
            let margin = y * decision(&model, x);
            match config.penalty {
                Penalty::L2 => {
                    let shrink = 1.0 - eta * config.alpha;
                    for w in &mut model.weights {
                        *w *= shrink;
                    }
                }
                Penalty::L1 => {
                    let step = eta * config.alpha;
                    for w in &mut model.weights {
                        // signum with sign(0) = 0
                        if *w > 0.0 {
                            *w -= step;
                        } else if *w < 0.0 {
                            *w += step;
                        }
                    }
                }
            }
            if margin < 1.0 {
                for &(j, v) in &x.entries {
                    model.weights[j] += eta * y * v;
                }
                model.bias += eta * y;
            }
        }
    }
    Ok(model)
}

/// One-vs-rest multiclass model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OvrModel {
    pub models: Vec<LinearModel>,
}

impl OvrModel {
    /// Argmax of the per-class decisions; ties go to the lowest class id.
    pub fn predict(&self, x: &DocVector) -> usize {
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for (c, m) in self.models.iter().enumerate() {
            let s = decision(m, x);
            if s > best_score {
                best_score = s;
                best = c;
            }
        }
        best
    }

    pub fn decisions(&self, x: &DocVector) -> Vec<f64> {
        self.models.iter().map(|m| decision(m, x)).collect()
    }
}

/// Train `num_classes` one-vs-rest binary models. Per-class trainings are
/// independent and run in parallel; every class uses the same config seed so
/// that relabeling classes permutes the models without changing them.
pub fn train_multiclass_ovr(
    xs: &[DocVector],
    labels: &[usize],
    dim: usize,
    num_classes: usize,
    config: &SvmConfig,
) -> Result<OvrModel> {
    if xs.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: labels.len(),
        });
    }
    let models: Result<Vec<LinearModel>> = (0..num_classes)
        .into_par_iter()
        .map(|c| {
            let ys: Vec<i8> = labels.iter().map(|&l| if l == c { 1 } else { -1 }).collect();
            // A class absent from the training data gets the constant
            // negative model instead of failing the whole rotation.
            if !ys.iter().any(|&y| y > 0) {
                return Ok(LinearModel::constant_negative(dim));
            }
            train_binary(xs, &ys, dim, config)
        })
        .collect();
    Ok(OvrModel { models: models? })
}

/// Binary relevance: one independent binary model per label. Labels with no
/// positive (or no negative) examples fall back to a constant-negative model.
pub fn train_binary_relevance(
    xs: &[DocVector],
    label_matrix: &[Vec<bool>],
    dim: usize,
    num_labels: usize,
    config: &SvmConfig,
) -> Result<Vec<LinearModel>> {
    if xs.len() != label_matrix.len() {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: label_matrix.len(),
        });
    }
    let models: Result<Vec<LinearModel>> = (0..num_labels)
        .into_par_iter()
        .map(|k| {
            let ys: Vec<i8> = label_matrix
                .iter()
                .map(|row| if row.get(k).copied().unwrap_or(false) { 1 } else { -1 })
                .collect();
            let has_pos = ys.iter().any(|&y| y > 0);
            let has_neg = ys.iter().any(|&y| y < 0);
            if !has_pos || !has_neg {
                return Ok(LinearModel::constant_negative(dim));
            }
            train_binary(xs, &ys, dim, config)
        })
        .collect();
    models
}

/// Serialized form of a linear model: sparse weight entries plus bias.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SparseModel {
    weights: Vec<(usize, f64)>,
    bias: f64,
    dim: usize,
}

impl SparseModel {
    fn from_model(m: &LinearModel) -> Self {
        Self {
            weights: m
                .weights
                .iter()
                .enumerate()
                .filter(|(_, w)| **w != 0.0)
                .map(|(i, w)| (i, *w))
                .collect(),
            bias: m.bias,
            dim: m.weights.len(),
        }
    }

    fn to_model(&self) -> LinearModel {
        let mut weights = vec![0.0; self.dim];
        for &(i, w) in &self.weights {
            weights[i] = w;
        }
        LinearModel {
            weights,
            bias: self.bias,
        }
    }
}

/// Write a set of per-class/per-label models with their config as JSON.
pub fn save_models_json(
    path: &std::path::Path,
    models: &[LinearModel],
    config: &SvmConfig,
) -> Result<()> {
    let sparse: Vec<SparseModel> = models.iter().map(SparseModel::from_model).collect();
    let value = serde_json::json!({ "config": config, "models": sparse });
    let mut bytes = serde_json::to_vec_pretty(&value).map_err(Error::Json)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_models_json(path: &std::path::Path) -> Result<(Vec<LinearModel>, SvmConfig)> {
    let bytes = std::fs::read(path)?;
    let value: serde_json::Value = serde_json::from_slice(&bytes).map_err(Error::Json)?;
    let config: SvmConfig = serde_json::from_value(
        value
            .get("config")
            .cloned()
            .ok_or_else(|| Error::Format("missing config".into()))?,
    )
    .map_err(Error::Json)?;
    let sparse: Vec<SparseModel> = serde_json::from_value(
        value
            .get("models")
            .cloned()
            .ok_or_else(|| Error::Format("missing models".into()))?,
    )
    .map_err(Error::Json)?;
    Ok((sparse.iter().map(SparseModel::to_model).collect(), config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn dense(doc_id: &str, values: &[f64]) -> DocVector {
        DocVector {
            doc_id: doc_id.into(),
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i, *v))
                .collect(),
        }
    }

    /// Two Gaussian blobs around +-center, labels +-1.
    fn blobs(n_per_class: usize, center: f64, seed: u64) -> (Vec<DocVector>, Vec<i8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..2 * n_per_class {
            let y: i8 = if i < n_per_class { 1 } else { -1 };
            let c = f64::from(y) * center;
            let v = [
                c + 0.1 * rng.random::<f64>(),
                -c + 0.1 * rng.random::<f64>(),
            ];
            xs.push(dense(&format!("d{i}"), &v));
            ys.push(y);
        }
        (xs, ys)
    }

    #[test]
    fn hinge_loss_examples() {
        let model = LinearModel {
            weights: vec![1.0, 0.0],
            bias: 0.0,
        };
        // margin 0.3 -> loss 0.7
        assert!((hinge_loss(&model, &dense("a", &[0.3, 0.0]), 1) - 0.7).abs() < 1e-12);
        // margin >= 1 -> 0
        assert_eq!(hinge_loss(&model, &dense("b", &[2.0, 0.0]), 1), 0.0);
        // zero model -> 1 for any x, y
        let zero = LinearModel::zeros(2);
        assert_eq!(hinge_loss(&zero, &dense("c", &[5.0, -3.0]), -1), 1.0);
    }

    #[test]
    fn decision_and_predict_tie_rule() {
        let model = LinearModel {
            weights: vec![1.0, 0.0],
            bias: 0.0,
        };
        let x = dense("a", &[2.0, 5.0]);
        assert_eq!(decision(&model, &x), 2.0);
        assert_eq!(predict(&model, &x), 1);
        // decision exactly 0 predicts +1
        assert_eq!(predict(&LinearModel::zeros(2), &x), 1);
        // scaling x scales the decision (b = 0)
        let x2 = dense("b", &[4.0, 10.0]);
        assert_eq!(decision(&model, &x2), 4.0);
    }

    #[test]
    fn separable_set_reaches_full_training_accuracy() {
        let (xs, ys) = blobs(10, 1.0, 3);
        let cfg = SvmConfig {
            epochs: 50,
            ..Default::default()
        };
        let model = train_binary(&xs, &ys, 2, &cfg).unwrap();
        let correct = xs
            .iter()
            .zip(&ys)
            .filter(|(x, &y)| predict(&model, x) == y)
            .count();
        assert_eq!(correct, xs.len());
    }

    #[test]
    fn objective_decreases_on_separable_data() {
        let (xs, ys) = blobs(10, 1.0, 4);
        let cfg = SvmConfig {
            epochs: 1,
            ..Default::default()
        };
        let after_one = train_binary(&xs, &ys, 2, &cfg).unwrap();
        let cfg50 = SvmConfig {
            epochs: 50,
            ..cfg
        };
        let after_fifty = train_binary(&xs, &ys, 2, &cfg50).unwrap();
        assert!(
            objective(&after_fifty, &xs, &ys, &cfg50) < objective(&after_one, &xs, &ys, &cfg50)
        );
    }

    #[test]
    fn huge_alpha_shrinks_weights() {
        let (xs, ys) = blobs(10, 1.0, 5);
        let cfg = SvmConfig {
            alpha: 1e3,
            epochs: 50,
            ..Default::default()
        };
        let model = train_binary(&xs, &ys, 2, &cfg).unwrap();
        let norm = model.weights.iter().map(|w| w * w).sum::<f64>().sqrt();
        assert!(norm < 1e-2, "norm = {norm}");
    }

    #[test]
    fn training_is_deterministic() {
        let (xs, ys) = blobs(8, 1.0, 6);
        let cfg = SvmConfig::default();
        let a = train_binary(&xs, &ys, 2, &cfg).unwrap();
        let b = train_binary(&xs, &ys, 2, &cfg).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.bias, b.bias);
    }

    #[test]
    fn single_class_is_an_error() {
        let (xs, _) = blobs(4, 1.0, 7);
        let ys = vec![1i8; xs.len()];
        assert!(matches!(
            train_binary(&xs, &ys, 2, &SvmConfig::default()),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn flipped_labels_negate_the_model() {
        let (xs, ys) = blobs(8, 1.0, 8);
        let flipped: Vec<i8> = ys.iter().map(|y| -y).collect();
        let cfg = SvmConfig::default();
        let a = train_binary(&xs, &ys, 2, &cfg).unwrap();
        let b = train_binary(&xs, &flipped, 2, &cfg).unwrap();
        for (wa, wb) in a.weights.iter().zip(&b.weights) {
            assert!((wa + wb).abs() < 1e-12);
        }
        assert!((a.bias + b.bias).abs() < 1e-12);
    }

    #[test]
    fn ovr_class_model_matches_binary_training() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut xs = Vec::new();
        let mut labels = Vec::new();
        for i in 0..30 {
            let c = i % 3;
            let mut v = [0.0; 3];
            v[c] = 1.0 + 0.1 * rng.random::<f64>();
            xs.push(dense(&format!("d{i}"), &v));
            labels.push(c);
        }
        let cfg = SvmConfig::default();
        let ovr = train_multiclass_ovr(&xs, &labels, 3, 3, &cfg).unwrap();
        let ys: Vec<i8> = labels.iter().map(|&l| if l == 1 { 1 } else { -1 }).collect();
        let binary = train_binary(&xs, &ys, 3, &cfg).unwrap();
        assert_eq!(ovr.models[1].weights, binary.weights);
        assert_eq!(ovr.models[1].bias, binary.bias);

        // Well-separated clusters classify correctly.
        let correct = xs
            .iter()
            .zip(&labels)
            .filter(|(x, &l)| ovr.predict(x) == l)
            .count();
        assert!(correct as f64 / xs.len() as f64 >= 0.95);
    }

    #[test]
    fn permuting_class_ids_permutes_predictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut xs = Vec::new();
        let mut labels = Vec::new();
        for i in 0..24 {
            let c = i % 3;
            let mut v = [0.0; 3];
            v[c] = 1.0 + 0.1 * rng.random::<f64>();
            xs.push(dense(&format!("d{i}"), &v));
            labels.push(c);
        }
        let perm = [2usize, 0, 1];
        let permuted: Vec<usize> = labels.iter().map(|&l| perm[l]).collect();
        let cfg = SvmConfig::default();
        let a = train_multiclass_ovr(&xs, &labels, 3, 3, &cfg).unwrap();
        let b = train_multiclass_ovr(&xs, &permuted, 3, 3, &cfg).unwrap();
        for x in &xs {
            assert_eq!(perm[a.predict(x)], b.predict(x));
        }
    }

    #[test]
    fn binary_relevance_fallback_and_reduction() {
        let (xs, ys) = blobs(6, 1.0, 11);
        // Label 0 mirrors ys; label 1 has no positives.
        let matrix: Vec<Vec<bool>> = ys.iter().map(|&y| vec![y > 0, false]).collect();
        let cfg = SvmConfig::default();
        let models = train_binary_relevance(&xs, &matrix, 2, 2, &cfg).unwrap();
        // K=1 case reduces to train_binary.
        let binary = train_binary(&xs, &ys, 2, &cfg).unwrap();
        assert_eq!(models[0].weights, binary.weights);
        // Fallback decides -1 everywhere.
        for x in &xs {
            assert_eq!(decision(&models[1], x), -1.0);
        }
    }

    #[test]
    fn complementary_labels_give_negated_decisions() {
        let (xs, ys) = blobs(8, 1.0, 12);
        let matrix: Vec<Vec<bool>> = ys.iter().map(|&y| vec![y > 0, y < 0]).collect();
        let models =
            train_binary_relevance(&xs, &matrix, 2, 2, &SvmConfig::default()).unwrap();
        for x in &xs {
            let d0 = decision(&models[0], x);
            let d1 = decision(&models[1], x);
            assert!((d0 + d1).abs() < 1e-12);
        }
    }

    #[test]
    fn models_round_trip_through_sparse_json() {
        let (xs, ys) = blobs(6, 1.0, 20);
        let cfg = SvmConfig::default();
        let model = train_binary(&xs, &ys, 2, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("svm.json");
        save_models_json(&path, &[model.clone()], &cfg).unwrap();
        let (back, cfg_back) = load_models_json(&path).unwrap();
        assert_eq!(back[0].weights, model.weights);
        assert_eq!(back[0].bias, model.bias);
        assert_eq!(cfg_back.alpha, cfg.alpha);
    }

    #[test]
    fn l1_yields_at_least_as_many_exact_zeros_as_l2() {
        let mut zeros_l1 = Vec::new();
        let mut zeros_l2 = Vec::new();
        for seed in 0..5u64 {
            // 6 dims, only the first 2 informative; the rest are rare noise.
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for i in 0..40 {
                let y: i8 = if i % 2 == 0 { 1 } else { -1 };
                let mut v = [0.0; 6];
                v[0] = f64::from(y) + 0.05 * rng.random::<f64>();
                v[1] = -f64::from(y) + 0.05 * rng.random::<f64>();
                if rng.random::<f64>() < 0.1 {
                    v[2 + (i % 4)] = rng.random::<f64>();
                }
                xs.push(dense(&format!("d{i}"), &v));
                ys.push(y);
            }
            let count_zeros = |penalty: Penalty| {
                let cfg = SvmConfig {
                    penalty,
                    alpha: 1e-2,
                    epochs: 30,
                    rng_seed: seed,
                };
                let m = train_binary(&xs, &ys, 6, &cfg).unwrap();
                m.weights.iter().filter(|w| **w == 0.0).count()
            };
            zeros_l1.push(count_zeros(Penalty::L1) as f64);
            zeros_l2.push(count_zeros(Penalty::L2) as f64);
        }
        zeros_l1.sort_by(f64::total_cmp);
        zeros_l2.sort_by(f64::total_cmp);
        assert!(zeros_l1[2] >= zeros_l2[2], "{zeros_l1:?} vs {zeros_l2:?}");
    }
}
