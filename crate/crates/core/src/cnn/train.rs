//! CNN training loop: seeded shuffling, Adadelta updates and best-model
//! selection on a validation set.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{
    adadelta_step, backward, batch_loss, forward, AdadeltaState, CnnModel, PaddedBatch,
};
use super::CnnConfig;
use crate::eval::average_precision;
use crate::{Error, Result};

/// Maps raw unit ids to CNN token indices 1..=V; 0 is PAD. Units unseen at
/// fit time map to PAD.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnnVocab {
    pub units: Vec<u32>,
}

impl CnnVocab {
    pub fn fit<'a>(sequences: impl IntoIterator<Item = &'a Vec<u32>>) -> Self {
        let mut units: Vec<u32> = sequences.into_iter().flatten().cloned().collect();
        units.sort_unstable();
        units.dedup();
        Self { units }
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn map(&self, sequence: &[u32]) -> Vec<u32> {
        sequence
            .iter()
            .map(|u| match self.units.binary_search(u) {
                Ok(i) => i as u32 + 1,
                Err(_) => 0,
            })
            .collect()
    }
}

/// Mapped sequences plus target rows, padded to the dataset-wide maximum
/// sequence length.
#[derive(Debug, Clone)]
pub struct CnnDataset {
    pub sequences: Vec<Vec<u32>>,
    pub targets: Array2<f64>,
    pub m_max: usize,
}

impl CnnDataset {
    pub fn new(sequences: Vec<Vec<u32>>, targets: Array2<f64>, m_max: usize) -> Result<Self> {
        if sequences.len() != targets.nrows() {
            return Err(Error::LengthMismatch {
                left: sequences.len(),
                right: targets.nrows(),
            });
        }
        if sequences.iter().any(|s| s.is_empty()) {
            return Err(Error::InvalidConfig("empty sequence in dataset".into()));
        }
        let longest = sequences.iter().map(Vec::len).max().unwrap_or(0);
        if longest > m_max {
            return Err(Error::ShapeMismatch(format!(
                "sequence of length {longest} exceeds dataset padding {m_max}"
            )));
        }
        Ok(Self {
            sequences,
            targets,
            m_max,
        })
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    fn batch_of(&self, ids: &[usize]) -> PaddedBatch {
        let seqs: Vec<&[u32]> = ids.iter().map(|&i| self.sequences[i].as_slice()).collect();
        let mut targets = Array2::zeros((ids.len(), self.targets.ncols()));
        for (r, &i) in ids.iter().enumerate() {
            targets.row_mut(r).assign(&self.targets.row(i));
        }
        PaddedBatch::new(&seqs, targets, self.m_max).expect("dataset invariants hold")
    }
}

/// How to pick the returned model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSelection {
    /// Snapshot with the best validation accuracy; ties keep the earliest
    /// epoch. The single-label protocol.
    BestValidationAccuracy,
    /// Snapshot with the best validation mean average precision.
    BestValidationAp,
    /// The model after the last epoch, for fixed-epoch multi-label runs.
    FinalEpoch,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_metric: Option<f64>,
}

/// Mean prediction scores of a dataset in evaluation mode (no dropout).
pub fn predict_scores(model: &CnnModel, data: &CnnDataset) -> Result<Array2<f64>> {
    let batch_size = model.config.batch_size;
    let mut scores = Array2::zeros((data.len(), model.config.num_classes));
    let ids: Vec<usize> = (0..data.len()).collect();
    for chunk in ids.chunks(batch_size) {
        let batch = data.batch_of(chunk);
        let (out, _) = forward(model, &batch, None)?;
        for (r, &i) in chunk.iter().enumerate() {
            scores.row_mut(i).assign(&out.row(r));
        }
    }
    Ok(scores)
}

/// Argmax class per row.
pub fn predict_classes(scores: &Array2<f64>) -> Vec<usize> {
    scores
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            let mut best_v = f64::NEG_INFINITY;
            for (k, &v) in row.iter().enumerate() {
                if v > best_v {
                    best_v = v;
                    best = k;
                }
            }
            best
        })
        .collect()
}

fn validation_metric(
    model: &CnnModel,
    val: &CnnDataset,
    selection: ModelSelection,
) -> Result<f64> {
    let scores = predict_scores(model, val)?;
    match selection {
        ModelSelection::BestValidationAccuracy => {
            let pred = predict_classes(&scores);
            let truth = predict_classes(&val.targets.clone());
            let correct = pred.iter().zip(&truth).filter(|(a, b)| a == b).count();
            Ok(correct as f64 / pred.len().max(1) as f64)
        }
        ModelSelection::BestValidationAp => {
            let k = val.targets.ncols();
            let mut aps = Vec::new();
            for label in 0..k {
                let s: Vec<f64> = scores.column(label).to_vec();
                let rel: Vec<bool> = val.targets.column(label).iter().map(|&v| v > 0.5).collect();
                if let Some(ap) = average_precision(&s, &rel)? {
                    aps.push(ap);
                }
            }
            if aps.is_empty() {
                Ok(0.0)
            } else {
                Ok(aps.iter().sum::<f64>() / aps.len() as f64)
            }
        }
        ModelSelection::FinalEpoch => Ok(0.0),
    }
}

/// Train up to `config.max_epochs` with per-epoch seeded shuffling, tracking
/// the validation metric and returning the selected snapshot plus the
/// training log. With `FinalEpoch` selection no snapshotting happens and the
/// last model is returned.
pub fn train(
    config: &CnnConfig,
    vocab_size: usize,
    pretrained: Option<Array2<f64>>,
    train_set: &CnnDataset,
    val_set: Option<&CnnDataset>,
    selection: ModelSelection,
) -> Result<(CnnModel, Vec<EpochLog>)> {
    if train_set.is_empty() {
        return Err(Error::InvalidConfig("empty training set".into()));
    }
    if matches!(
        selection,
        ModelSelection::BestValidationAccuracy | ModelSelection::BestValidationAp
    ) && val_set.is_none()
    {
        return Err(Error::InvalidConfig(
            "best-on-validation selection requires a validation set".into(),
        ));
    }
    let mut model = CnnModel::init(config, vocab_size, pretrained)?;
    let mut state = AdadeltaState::new(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::with_capacity(config.max_epochs);
    let mut best: Option<(f64, CnnModel)> = None;

    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch = train_set.batch_of(chunk);
            let (outputs, cache) = forward(&model, &batch, Some(&mut rng))?;
            loss_sum += batch_loss(config.head, &outputs, &batch.targets);
            let grads = backward(&model, &batch, &outputs, &cache);
            adadelta_step(&mut model, &grads, &mut state);
            batches += 1;
        }
        let train_loss = loss_sum / batches.max(1) as f64;
        let val_metric = match (val_set, selection) {
            (Some(val), sel)
                if matches!(
                    sel,
                    ModelSelection::BestValidationAccuracy | ModelSelection::BestValidationAp
                ) =>
            {
                let metric = validation_metric(&model, val, sel)?;
                let improved = best.as_ref().is_none_or(|(b, _)| metric > *b);
                if improved {
                    best = Some((metric, model.clone()));
                }
                Some(metric)
            }
            _ => None,
        };
        log.push(EpochLog {
            epoch,
            train_loss,
            val_metric,
        });
    }
    let final_model = match (selection, best) {
        (ModelSelection::FinalEpoch, _) | (_, None) => model,
        (_, Some((_, snapshot))) => snapshot,
    };
    Ok((final_model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::model::{batch_loss, Gradients};
    use crate::cnn::Head;
    use crate::cnn::{binary_cross_entropy, categorical_cross_entropy};
    use rand::Rng;

    fn tiny_config(head: Head, k: usize) -> CnnConfig {
        CnnConfig {
            embed_dim: 2,
            conv_window: 3,
            conv_units: 3,
            hidden_units: 3,
            dropout: 0.0,
            batch_size: 2,
            max_epochs: 5,
            head,
            num_classes: k,
            rng_seed: 1,
            ..Default::default()
        }
    }

    fn one_hot(labels: &[usize], k: usize) -> Array2<f64> {
        let mut t = Array2::zeros((labels.len(), k));
        for (i, &l) in labels.iter().enumerate() {
            t[(i, l)] = 1.0;
        }
        t
    }

    /// Two topics with disjoint unit vocabularies.
    fn separable_dataset(n_per_class: usize, seed: u64) -> (Vec<Vec<u32>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seqs = Vec::new();
        let mut labels = Vec::new();
        for i in 0..2 * n_per_class {
            let class = i % 2;
            let base = 10 * class as u32;
            let len = rng.random_range(8..14);
            seqs.push((0..len).map(|_| base + rng.random_range(0..5)).collect());
            labels.push(class);
        }
        (seqs, labels)
    }

    #[test]
    fn loss_values_match_hand_computation() {
        assert!(categorical_cross_entropy(&[1.0, 0.0], &[1.0, 0.0]).abs() < 1e-10);
        let l = categorical_cross_entropy(&[0.5, 0.5], &[1.0, 0.0]);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        let l = categorical_cross_entropy(&[0.9, 0.1], &[0.0, 1.0]);
        assert!((l - (-(0.1f64).ln())).abs() < 1e-12);

        let l = binary_cross_entropy(&[1.0, 0.0], &[1.0, 0.0]);
        assert!(l < 1e-10);
        let l = binary_cross_entropy(&[0.5, 0.5], &[1.0, 0.0]);
        assert!((l - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        let l = binary_cross_entropy(&[0.9, 0.1, 0.8], &[1.0, 0.0, 1.0]);
        let expected = -((0.9f64).ln() + (0.9f64).ln() + (0.8f64).ln());
        assert!((l - expected).abs() < 1e-10);
    }

    #[test]
    fn all_pad_input_with_zero_biases_outputs_bias_softmax() {
        let cfg = tiny_config(Head::Softmax, 2);
        let model = CnnModel::init(&cfg, 4, None).unwrap();
        let batch = PaddedBatch::new(
            &[&[0u32, 0, 0][..]],
            one_hot(&[0], 2),
            3,
        )
        .unwrap();
        let (out, cache) = forward(&model, &batch, None).unwrap();
        // Zero embedding everywhere and zero conv bias: pooled = ReLU(0) = 0.
        assert!(cache.examples[0].pooled_relu.iter().all(|&v| v == 0.0));
        // Output = softmax of the output bias (zero at init): uniform.
        for &v in out.row(0) {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one_and_sigmoid_stays_in_range() {
        for head in [Head::Softmax, Head::Sigmoid] {
            let cfg = tiny_config(head, 3);
            let model = CnnModel::init(&cfg, 6, None).unwrap();
            let batch = PaddedBatch::new(
                &[&[1u32, 2, 3, 0][..], &[4, 5][..]],
                Array2::zeros((2, 3)),
                4,
            )
            .unwrap();
            let (out, _) = forward(&model, &batch, None).unwrap();
            for row in out.rows() {
                match head {
                    Head::Softmax => {
                        let s: f64 = row.iter().sum();
                        assert!((s - 1.0).abs() < 1e-10);
                    }
                    Head::Sigmoid => {
                        assert!(row.iter().all(|&v| v > 0.0 && v < 1.0));
                    }
                }
            }
        }
    }

    #[test]
    fn single_window_output_matches_hand_arithmetic() {
        // Vocabulary of 2, one real token at one position, hand-set weights.
        let cfg = CnnConfig {
            embed_dim: 2,
            conv_window: 3,
            conv_units: 2,
            hidden_units: 2,
            dropout: 0.0,
            batch_size: 1,
            max_epochs: 1,
            head: Head::Softmax,
            num_classes: 2,
            rng_seed: 0,
            ..Default::default()
        };
        let mut model = CnnModel::init(&cfg, 2, None).unwrap();
        model.embedding = ndarray::array![[0.0, 0.0], [1.0, 2.0], [-1.0, 0.5]];
        // Windows are (prev, cur, next) embeddings concatenated; weights pick
        // out the current token's first dim for filter 0, second for 1.
        model.conv_w = Array2::zeros((6, 2));
        model.conv_w[(2, 0)] = 1.0;
        model.conv_w[(3, 1)] = 1.0;
        model.conv_b = ndarray::array![0.1, -0.1];
        model.hidden_w = ndarray::array![[1.0, 0.0], [0.0, 1.0]];
        model.hidden_b = ndarray::array![0.0, 0.0];
        model.out_w = ndarray::array![[1.0, -1.0], [0.5, 0.5]];
        model.out_b = ndarray::array![0.0, 0.2];

        let batch = PaddedBatch::new(&[&[1u32][..]], one_hot(&[0], 2), 1).unwrap();
        let (out, _) = forward(&model, &batch, None).unwrap();
        // h1 = relu([1*1 + 0.1, 2*1 - 0.1]) = [1.1, 1.9]; pooled = same;
        // h2 = relu([1.1, 1.9]); logits = [1.1*1 + 1.9*0.5, 1.1*-1 + 1.9*0.5 + 0.2]
        let z0: f64 = 1.1 + 0.95;
        let z1: f64 = -1.1 + 0.95 + 0.2;
        let m = z0.max(z1);
        let e0 = (z0 - m).exp();
        let e1 = (z1 - m).exp();
        assert!((out[(0, 0)] - e0 / (e0 + e1)).abs() < 1e-12);
        assert!((out[(0, 1)] - e1 / (e0 + e1)).abs() < 1e-12);
    }

    #[test]
    fn pooled_output_is_invariant_to_window_position() {
        // One real window surrounded by PAD: moving it does not change the
        // pooled vector.
        let cfg = tiny_config(Head::Softmax, 2);
        let model = CnnModel::init(&cfg, 5, None).unwrap();
        let a = PaddedBatch::new(&[&[0u32, 2, 3, 0, 0, 0, 0, 0][..]], one_hot(&[0], 2), 8).unwrap();
        let b = PaddedBatch::new(&[&[0u32, 0, 0, 0, 2, 3, 0, 0][..]], one_hot(&[0], 2), 8).unwrap();
        let (_, ca) = forward(&model, &a, None).unwrap();
        let (_, cb) = forward(&model, &b, None).unwrap();
        for (x, y) in ca.examples[0]
            .pooled_relu
            .iter()
            .zip(&cb.examples[0].pooled_relu)
        {
            assert!((x - y).abs() < 1e-12);
        }
    }

    fn numerical_gradient_check(head: Head) {
        let k = 2;
        let cfg = tiny_config(head, k);
        let mut model = CnnModel::init(&cfg, 4, None).unwrap();
        // Scale weights up so activations and gradients are O(0.1..1) and
        // finite-difference noise stays negligible.
        for w in [
            &mut model.conv_w,
            &mut model.hidden_w,
            &mut model.out_w,
        ] {
            w.mapv_inplace(|v| 8.0 * v);
        }
        for r in 1..model.embedding.nrows() {
            for v in model.embedding.row_mut(r).iter_mut() {
                *v *= 8.0;
            }
        }
        let model = model;
        let targets = match head {
            Head::Softmax => one_hot(&[0, 1], k),
            Head::Sigmoid => ndarray::array![[1.0, 0.0], [1.0, 1.0]],
        };
        let batch = PaddedBatch::new(&[&[1u32, 2, 3][..], &[4, 1][..]], targets, 3).unwrap();
        let (outputs, cache) = forward(&model, &batch, None).unwrap();
        let grads = backward(&model, &batch, &outputs, &cache);

        let loss_of = |m: &CnnModel| {
            let (out, _) = forward(m, &batch, None).unwrap();
            batch_loss(head, &out, &batch.targets)
        };

        let h = 1e-6;
        let mut checked = 0usize;
        let mut max_rel: f64 = 0.0;
        // Walk every parameter array through a mutator to keep this generic.
        type Access = (
            &'static str,
            fn(&mut CnnModel) -> &mut [f64],
            fn(&Gradients) -> &[f64],
        );
        let accessors: Vec<Access> = vec![
            (
                "embedding",
                |m| m.embedding.as_slice_mut().unwrap(),
                |g| g.embedding.as_slice().unwrap(),
            ),
            (
                "conv_w",
                |m| m.conv_w.as_slice_mut().unwrap(),
                |g| g.conv_w.as_slice().unwrap(),
            ),
            (
                "conv_b",
                |m| m.conv_b.as_slice_mut().unwrap(),
                |g| g.conv_b.as_slice().unwrap(),
            ),
            (
                "hidden_w",
                |m| m.hidden_w.as_slice_mut().unwrap(),
                |g| g.hidden_w.as_slice().unwrap(),
            ),
            (
                "hidden_b",
                |m| m.hidden_b.as_slice_mut().unwrap(),
                |g| g.hidden_b.as_slice().unwrap(),
            ),
            (
                "out_w",
                |m| m.out_w.as_slice_mut().unwrap(),
                |g| g.out_w.as_slice().unwrap(),
            ),
            (
                "out_b",
                |m| m.out_b.as_slice_mut().unwrap(),
                |g| g.out_b.as_slice().unwrap(),
            ),
        ];
        for (name, get_mut, get_grad) in accessors {
            let len = get_grad(&grads).len();
            // The PAD embedding row is frozen: its analytic gradient is
            // defined as zero even though the loss depends on it.
            let skip = if name == "embedding" { cfg.embed_dim } else { 0 };
            for idx in skip..len {
                let mut plus = model.clone();
                get_mut(&mut plus)[idx] += h;
                let mut minus = model.clone();
                get_mut(&mut minus)[idx] -= h;
                let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
                let g = get_grad(&grads)[idx];
                if fd.abs() < 1e-6 && g.abs() < 1e-6 {
                    continue;
                }
                let rel = (g - fd).abs() / fd.abs().max(g.abs()).max(1e-8);
                assert!(
                    rel < 1e-4,
                    "{name}[{idx}]: analytic {g} vs numeric {fd} (rel {rel})"
                );
                max_rel = max_rel.max(rel);
                checked += 1;
            }
        }
        assert!(checked > 30, "only {checked} gradients checked");
    }

    #[test]
    fn gradients_match_finite_differences_softmax() {
        numerical_gradient_check(Head::Softmax);
    }

    #[test]
    fn gradients_match_finite_differences_sigmoid() {
        numerical_gradient_check(Head::Sigmoid);
    }

    #[test]
    fn pad_embedding_gradient_is_zero_and_duplication_doubles() {
        let cfg = tiny_config(Head::Softmax, 2);
        let model = CnnModel::init(&cfg, 4, None).unwrap();
        let single = PaddedBatch::new(&[&[1u32, 0, 0][..]], one_hot(&[0], 2), 3).unwrap();
        let (o1, c1) = forward(&model, &single, None).unwrap();
        let g1 = backward(&model, &single, &o1, &c1);
        assert!(g1.embedding.row(0).iter().all(|&v| v == 0.0));

        // Duplicating the example doubles its (pre-mean) contribution; with
        // mean reduction the batch gradient stays identical.
        let double =
            PaddedBatch::new(&[&[1u32, 0, 0][..], &[1u32, 0, 0][..]], one_hot(&[0, 0], 2), 3)
                .unwrap();
        let (o2, c2) = forward(&model, &double, None).unwrap();
        let g2 = backward(&model, &double, &o2, &c2);
        for (a, b) in g1.embedding.iter().zip(g2.embedding.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn adadelta_first_step_matches_closed_form() {
        let cfg = tiny_config(Head::Softmax, 2);
        let mut model = CnnModel::init(&cfg, 2, None).unwrap();
        let before = model.out_b.clone();
        let mut grads = Gradients::zeros_like(&model);
        grads.out_b[0] = 0.3;
        let mut state = AdadeltaState::new(&model);
        adadelta_step(&mut model, &grads, &mut state);
        let g: f64 = 0.3;
        let eps = cfg.epsilon;
        let expected = -(eps.sqrt() / (0.05 * g * g + eps).sqrt()) * g;
        assert!((model.out_b[0] - (before[0] + expected)).abs() < 1e-15);
        // Zero gradient -> zero update.
        assert_eq!(model.out_b[1], before[1]);

        // Sign flip produces the mirrored update.
        let mut model2 = CnnModel::init(&cfg, 2, None).unwrap();
        let mut grads2 = Gradients::zeros_like(&model2);
        grads2.out_b[0] = -0.3;
        let mut state2 = AdadeltaState::new(&model2);
        adadelta_step(&mut model2, &grads2, &mut state2);
        assert!((model2.out_b[0] - (before[0] - expected)).abs() < 1e-15);
    }

    #[test]
    fn training_is_deterministic_and_selection_is_argmax() {
        let (seqs, labels) = separable_dataset(8, 3);
        let vocab = CnnVocab::fit(seqs.iter());
        let mapped: Vec<Vec<u32>> = seqs.iter().map(|s| vocab.map(s)).collect();
        let m_max = mapped.iter().map(Vec::len).max().unwrap();
        let targets = one_hot(&labels, 2);
        let train_ids: Vec<usize> = (0..12).collect();
        let val_ids: Vec<usize> = (12..16).collect();
        let subset = |ids: &[usize]| {
            CnnDataset::new(
                ids.iter().map(|&i| mapped[i].clone()).collect(),
                {
                    let mut t = Array2::zeros((ids.len(), 2));
                    for (r, &i) in ids.iter().enumerate() {
                        t.row_mut(r).assign(&targets.row(i));
                    }
                    t
                },
                m_max,
            )
            .unwrap()
        };
        let train_set = subset(&train_ids);
        let val_set = subset(&val_ids);
        let cfg = CnnConfig {
            embed_dim: 6,
            conv_window: 3,
            conv_units: 8,
            hidden_units: 8,
            dropout: 0.2,
            batch_size: 4,
            max_epochs: 6,
            head: Head::Softmax,
            num_classes: 2,
            rng_seed: 5,
            ..Default::default()
        };
        let (m1, log1) = train(
            &cfg,
            vocab.len(),
            None,
            &train_set,
            Some(&val_set),
            ModelSelection::BestValidationAccuracy,
        )
        .unwrap();
        let (m2, log2) = train(
            &cfg,
            vocab.len(),
            None,
            &train_set,
            Some(&val_set),
            ModelSelection::BestValidationAccuracy,
        )
        .unwrap();
        assert_eq!(m1, m2);
        assert_eq!(log1.len(), log2.len());

        // The returned model's validation metric equals the best logged one.
        let best_logged = log1
            .iter()
            .filter_map(|l| l.val_metric)
            .fold(f64::NEG_INFINITY, f64::max);
        let returned = validation_metric(&m1, &val_set, ModelSelection::BestValidationAccuracy)
            .unwrap();
        assert!(returned >= best_logged - 1e-12);
    }

    #[test]
    fn ap_selection_tracks_validation_ap() {
        let (seqs, labels) = separable_dataset(8, 9);
        let vocab = CnnVocab::fit(seqs.iter());
        let mapped: Vec<Vec<u32>> = seqs.iter().map(|s| vocab.map(s)).collect();
        let m_max = mapped.iter().map(Vec::len).max().unwrap();
        // Two independent binary labels.
        let mut targets = Array2::zeros((mapped.len(), 2));
        for (i, &l) in labels.iter().enumerate() {
            targets[(i, l)] = 1.0;
        }
        let split = mapped.len() * 3 / 4;
        let train_set = CnnDataset::new(
            mapped[..split].to_vec(),
            targets.slice(ndarray::s![..split, ..]).to_owned(),
            m_max,
        )
        .unwrap();
        let val_set = CnnDataset::new(
            mapped[split..].to_vec(),
            targets.slice(ndarray::s![split.., ..]).to_owned(),
            m_max,
        )
        .unwrap();
        let cfg = CnnConfig {
            embed_dim: 6,
            conv_window: 3,
            conv_units: 16,
            hidden_units: 16,
            dropout: 0.0,
            batch_size: 4,
            max_epochs: 4,
            head: Head::Sigmoid,
            num_classes: 2,
            rng_seed: 4,
            ..Default::default()
        };
        let (model, log) = train(
            &cfg,
            vocab.len(),
            None,
            &train_set,
            Some(&val_set),
            ModelSelection::BestValidationAp,
        )
        .unwrap();
        let best_logged = log
            .iter()
            .filter_map(|l| l.val_metric)
            .fold(f64::NEG_INFINITY, f64::max);
        let returned =
            validation_metric(&model, &val_set, ModelSelection::BestValidationAp).unwrap();
        assert!(returned >= best_logged - 1e-12);
        assert!(log.iter().all(|l| l.val_metric.is_some()));
    }

    #[test]
    fn separable_data_reaches_full_validation_accuracy() {
        let (seqs, labels) = separable_dataset(16, 7);
        let vocab = CnnVocab::fit(seqs.iter());
        let mapped: Vec<Vec<u32>> = seqs.iter().map(|s| vocab.map(s)).collect();
        let m_max = mapped.iter().map(Vec::len).max().unwrap();
        let targets = one_hot(&labels, 2);
        let n = mapped.len();
        let split = n * 3 / 4;
        let train_set = CnnDataset::new(
            mapped[..split].to_vec(),
            targets.slice(ndarray::s![..split, ..]).to_owned(),
            m_max,
        )
        .unwrap();
        let val_set = CnnDataset::new(
            mapped[split..].to_vec(),
            targets.slice(ndarray::s![split.., ..]).to_owned(),
            m_max,
        )
        .unwrap();
        // Narrow models start with near-zero logits and Adadelta crawls;
        // 64 filters put the initial logits at a workable scale.
        let cfg = CnnConfig {
            embed_dim: 8,
            conv_window: 3,
            conv_units: 64,
            hidden_units: 64,
            dropout: 0.2,
            batch_size: 4,
            max_epochs: 40,
            head: Head::Softmax,
            num_classes: 2,
            rng_seed: 2,
            ..Default::default()
        };
        let (model, _) = train(
            &cfg,
            vocab.len(),
            None,
            &train_set,
            Some(&val_set),
            ModelSelection::BestValidationAccuracy,
        )
        .unwrap();
        let acc =
            validation_metric(&model, &val_set, ModelSelection::BestValidationAccuracy).unwrap();
        assert_eq!(acc, 1.0);
    }
}
