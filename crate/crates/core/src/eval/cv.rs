//! Cross-validation drivers: the 9/1 SVM protocol, the 8/1/1 CNN protocol
//! and the fold-count learning curve. Vocabularies and IDF statistics are
//! fitted inside each fold on its training documents only.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, multilabel_ap_report, ApReport};
use super::FoldPlan;
use crate::bow::{fit_idf, transform, NgramCounts, Vocabulary};
use crate::cnn::{self, CnnConfig, CnnDataset, CnnVocab, ModelSelection};
use crate::embed::{export_for_cnn, EmbeddingTable};
use crate::svm::{train_binary_relevance, train_multiclass_ovr, SvmConfig};
use crate::{Error, Result};

/// One document's inputs to a CV experiment.
#[derive(Debug, Clone)]
pub struct CvDataset {
    pub doc_ids: Vec<String>,
    /// Raw n-gram counts per document (bag-of-words path).
    pub counts: Vec<NgramCounts>,
    /// Unit sequences per document (CNN path); empty when unused.
    pub sequences: Vec<Vec<u32>>,
}

impl CvDataset {
    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }
}

/// The fold roles and result of one CV rotation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldRun {
    pub test_fold: usize,
    pub val_fold: Option<usize>,
    pub train_folds: Vec<usize>,
    /// Accuracy for single-label runs.
    pub metric: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvmCvOptions {
    pub ngram_order: usize,
    pub use_idf: bool,
    pub l2_normalize: bool,
    pub svm: SvmConfig,
}

impl Default for SvmCvOptions {
    fn default() -> Self {
        Self {
            ngram_order: 3,
            use_idf: true,
            l2_normalize: true,
            svm: SvmConfig::default(),
        }
    }
}

fn fold_indices(plan: &FoldPlan, doc_ids: &[String]) -> Result<Vec<usize>> {
    doc_ids
        .iter()
        .map(|id| {
            plan.assignment
                .get(id)
                .copied()
                .ok_or_else(|| Error::InvalidConfig(format!("doc {id} missing from fold plan")))
        })
        .collect()
}

/// Fit vocab + idf on the training documents and produce vectors for both
/// sets.
fn featurize_fold(
    data: &CvDataset,
    train_docs: &[usize],
    test_docs: &[usize],
    opts: &SvmCvOptions,
) -> Result<(Vec<crate::bow::DocVector>, Vec<crate::bow::DocVector>, usize)> {
    let train_counts: Vec<NgramCounts> =
        train_docs.iter().map(|&i| data.counts[i].clone()).collect();
    let vocab = Vocabulary::fit(&train_counts, opts.ngram_order);
    let idf = if opts.use_idf {
        Some(fit_idf(&train_counts, &vocab)?)
    } else {
        None
    };
    let make = |docs: &[usize]| {
        docs.iter()
            .map(|&i| {
                transform(
                    &data.doc_ids[i],
                    &data.counts[i],
                    &vocab,
                    idf.as_deref(),
                    opts.l2_normalize,
                )
            })
            .collect::<Vec<_>>()
    };
    Ok((make(train_docs), make(test_docs), vocab.len()))
}

/// Single-label SVM cross-validation: train on k-1 folds, test on the held
/// out fold, for every fold. Returns one `FoldRun` per fold in fold order.
pub fn run_cv_svm(
    data: &CvDataset,
    labels: &[usize],
    num_classes: usize,
    plan: &FoldPlan,
    opts: &SvmCvOptions,
) -> Result<Vec<FoldRun>> {
    if data.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: data.len(),
            right: labels.len(),
        });
    }
    let folds = fold_indices(plan, &data.doc_ids)?;
    let mut runs = Vec::with_capacity(plan.k);
    for test_fold in 0..plan.k {
        let train_docs: Vec<usize> = (0..data.len())
            .filter(|&i| folds[i] != test_fold)
            .collect();
        let test_docs: Vec<usize> = (0..data.len())
            .filter(|&i| folds[i] == test_fold)
            .collect();
        let (train_x, test_x, dim) = featurize_fold(data, &train_docs, &test_docs, opts)?;
        let train_y: Vec<usize> = train_docs.iter().map(|&i| labels[i]).collect();
        let model = train_multiclass_ovr(&train_x, &train_y, dim, num_classes, &opts.svm)?;
        let predictions: Vec<usize> = test_x.iter().map(|x| model.predict(x)).collect();
        let truth: Vec<usize> = test_docs.iter().map(|&i| labels[i]).collect();
        runs.push(FoldRun {
            test_fold,
            val_fold: None,
            train_folds: (0..plan.k).filter(|&f| f != test_fold).collect(),
            metric: accuracy(&predictions, &truth)?,
        });
    }
    Ok(runs)
}

/// Multi-label SVM cross-validation with binary relevance. Test-fold decision
/// scores are pooled over folds into one ranking per label, giving a single
/// AP report for the whole CV run.
pub fn run_cv_svm_multilabel(
    data: &CvDataset,
    label_matrix: &[Vec<bool>],
    num_labels: usize,
    out_of_domain: usize,
    plan: &FoldPlan,
    opts: &SvmCvOptions,
) -> Result<ApReport> {
    if data.len() != label_matrix.len() {
        return Err(Error::LengthMismatch {
            left: data.len(),
            right: label_matrix.len(),
        });
    }
    let folds = fold_indices(plan, &data.doc_ids)?;
    let mut scores = vec![vec![0.0f64; data.len()]; num_labels];
    for test_fold in 0..plan.k {
        let train_docs: Vec<usize> = (0..data.len())
            .filter(|&i| folds[i] != test_fold)
            .collect();
        let test_docs: Vec<usize> = (0..data.len())
            .filter(|&i| folds[i] == test_fold)
            .collect();
        let (train_x, test_x, dim) = featurize_fold(data, &train_docs, &test_docs, opts)?;
        let train_y: Vec<Vec<bool>> = train_docs.iter().map(|&i| label_matrix[i].clone()).collect();
        let models = train_binary_relevance(&train_x, &train_y, dim, num_labels, &opts.svm)?;
        for (pos, &doc) in test_docs.iter().enumerate() {
            for (k, model) in models.iter().enumerate() {
                scores[k][doc] = crate::svm::decision(model, &test_x[pos]);
            }
        }
    }
    let truths: Vec<Vec<bool>> = (0..num_labels)
        .map(|k| label_matrix.iter().map(|row| row[k]).collect())
        .collect();
    multilabel_ap_report(&scores, &truths, out_of_domain)
}

#[derive(Debug, Clone)]
pub struct CnnCvOptions {
    pub config: CnnConfig,
    pub selection: ModelSelection,
    /// Skip-gram table used to initialize embeddings; random init when None.
    pub pretrained: Option<EmbeddingTable>,
}

fn one_hot(labels: &[usize], k: usize) -> Array2<f64> {
    let mut t = Array2::zeros((labels.len(), k));
    for (i, &l) in labels.iter().enumerate() {
        t[(i, l)] = 1.0;
    }
    t
}

/// Single-label CNN cross-validation with the 8/1/1 split: for test fold
/// `f`, fold `(f + 1) mod k` is validation and the rest train.
pub fn run_cv_cnn(
    data: &CvDataset,
    labels: &[usize],
    num_classes: usize,
    plan: &FoldPlan,
    opts: &CnnCvOptions,
) -> Result<Vec<FoldRun>> {
    if data.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: data.len(),
            right: labels.len(),
        });
    }
    let folds = fold_indices(plan, &data.doc_ids)?;
    // Sequences are zero-padded to the longest document in the dataset.
    let m_max = data
        .sequences
        .iter()
        .map(Vec::len)
        .max()
        .ok_or(Error::EmptyCorpus)?;
    let mut runs = Vec::with_capacity(plan.k);
    for test_fold in 0..plan.k {
        let val_fold = (test_fold + 1) % plan.k;
        let train_docs: Vec<usize> = (0..data.len())
            .filter(|&i| folds[i] != test_fold && folds[i] != val_fold)
            .collect();
        let val_docs: Vec<usize> = (0..data.len()).filter(|&i| folds[i] == val_fold).collect();
        let test_docs: Vec<usize> = (0..data.len()).filter(|&i| folds[i] == test_fold).collect();

        let vocab = CnnVocab::fit(train_docs.iter().map(|&i| &data.sequences[i]));
        let subset = |docs: &[usize]| -> Result<CnnDataset> {
            CnnDataset::new(
                docs.iter().map(|&i| vocab.map(&data.sequences[i])).collect(),
                one_hot(
                    &docs.iter().map(|&i| labels[i]).collect::<Vec<_>>(),
                    num_classes,
                ),
                m_max,
            )
        };
        let train_set = subset(&train_docs)?;
        let val_set = subset(&val_docs)?;
        let test_set = subset(&test_docs)?;

        let mut config = opts.config.clone();
        config.num_classes = num_classes;
        let pretrained = opts
            .pretrained
            .as_ref()
            .map(|t| export_for_cnn(t, &vocab.units, config.rng_seed));
        if let Some(p) = &pretrained {
            if p.ncols() != config.embed_dim {
                return Err(Error::ShapeMismatch(format!(
                    "pretrained dim {} != embed dim {}",
                    p.ncols(),
                    config.embed_dim
                )));
            }
        }
        let (model, _) = cnn::train(
            &config,
            vocab.len(),
            pretrained,
            &train_set,
            Some(&val_set),
            opts.selection,
        )?;
        let scores = cnn::predict_scores(&model, &test_set)?;
        let predictions = cnn::predict_classes(&scores);
        let truth: Vec<usize> = test_docs.iter().map(|&i| labels[i]).collect();
        runs.push(FoldRun {
            test_fold,
            val_fold: Some(val_fold),
            train_folds: (0..plan.k)
                .filter(|&f| f != test_fold && f != val_fold)
                .collect(),
            metric: accuracy(&predictions, &truth)?,
        });
    }
    Ok(runs)
}

/// Multi-label CNN cross-validation (sigmoid head), pooling test-fold scores
/// into one AP report.
pub fn run_cv_cnn_multilabel(
    data: &CvDataset,
    label_matrix: &[Vec<bool>],
    num_labels: usize,
    out_of_domain: usize,
    plan: &FoldPlan,
    opts: &CnnCvOptions,
) -> Result<ApReport> {
    if data.len() != label_matrix.len() {
        return Err(Error::LengthMismatch {
            left: data.len(),
            right: label_matrix.len(),
        });
    }
    let folds = fold_indices(plan, &data.doc_ids)?;
    let m_max = data
        .sequences
        .iter()
        .map(Vec::len)
        .max()
        .ok_or(Error::EmptyCorpus)?;
    let targets_of = |docs: &[usize]| {
        let mut t = Array2::zeros((docs.len(), num_labels));
        for (r, &i) in docs.iter().enumerate() {
            for k in 0..num_labels {
                t[(r, k)] = if label_matrix[i][k] { 1.0 } else { 0.0 };
            }
        }
        t
    };
    let mut scores = vec![vec![0.0f64; data.len()]; num_labels];
    for test_fold in 0..plan.k {
        let val_fold = (test_fold + 1) % plan.k;
        let train_docs: Vec<usize> = (0..data.len())
            .filter(|&i| folds[i] != test_fold && folds[i] != val_fold)
            .collect();
        let val_docs: Vec<usize> = (0..data.len()).filter(|&i| folds[i] == val_fold).collect();
        let test_docs: Vec<usize> = (0..data.len()).filter(|&i| folds[i] == test_fold).collect();

        let vocab = CnnVocab::fit(train_docs.iter().map(|&i| &data.sequences[i]));
        let subset = |docs: &[usize]| -> Result<CnnDataset> {
            CnnDataset::new(
                docs.iter().map(|&i| vocab.map(&data.sequences[i])).collect(),
                targets_of(docs),
                m_max,
            )
        };
        let train_set = subset(&train_docs)?;
        let val_set = subset(&val_docs)?;
        let test_set = subset(&test_docs)?;
        let mut config = opts.config.clone();
        config.num_classes = num_labels;
        config.head = cnn::Head::Sigmoid;
        let pretrained = opts
            .pretrained
            .as_ref()
            .map(|t| export_for_cnn(t, &vocab.units, config.rng_seed));
        let (model, _) = cnn::train(
            &config,
            vocab.len(),
            pretrained,
            &train_set,
            Some(&val_set),
            opts.selection,
        )?;
        let out = cnn::predict_scores(&model, &test_set)?;
        for (pos, &doc) in test_docs.iter().enumerate() {
            for k in 0..num_labels {
                scores[k][doc] = out[(pos, k)];
            }
        }
    }
    let truths: Vec<Vec<bool>> = (0..num_labels)
        .map(|k| label_matrix.iter().map(|row| row[k]).collect())
        .collect();
    multilabel_ap_report(&scores, &truths, out_of_domain)
}

/// Fold-count learning curve: for each training-set size `t` in 1..k-1, run
/// one rotation per fold, training on the `t` folds after the held-out test
/// fold (cyclically) and leaving the others idle. Returns the mean metric
/// per `t`, so `t = k-1` reproduces the full CV protocol.
pub fn learning_curve<F>(k: usize, mut eval_rotation: F) -> Result<Vec<f64>>
where
    F: FnMut(&[usize], usize) -> Result<f64>,
{
    if k < 2 {
        return Err(Error::InvalidConfig("learning curve needs k >= 2".into()));
    }
    let mut points = Vec::with_capacity(k - 1);
    for t in 1..k {
        let mut sum = 0.0;
        for test_fold in 0..k {
            let train_folds: Vec<usize> = (1..=t).map(|d| (test_fold + d) % k).collect();
            sum += eval_rotation(&train_folds, test_fold)?;
        }
        points.push(sum / k as f64);
    }
    Ok(points)
}

/// Learning curve for the multi-label SVM: in-domain mean AP versus
/// training-fold count. Each rotation's AP is computed on its own held-out
/// fold and rotations are averaged per curve point.
pub fn learning_curve_svm_multilabel(
    data: &CvDataset,
    label_matrix: &[Vec<bool>],
    num_labels: usize,
    out_of_domain: usize,
    plan: &FoldPlan,
    opts: &SvmCvOptions,
) -> Result<Vec<f64>> {
    let folds = fold_indices(plan, &data.doc_ids)?;
    learning_curve(plan.k, |train_folds, test_fold| {
        let train_docs: Vec<usize> = (0..data.len())
            .filter(|&i| train_folds.contains(&folds[i]))
            .collect();
        let test_docs: Vec<usize> = (0..data.len())
            .filter(|&i| folds[i] == test_fold)
            .collect();
        let (train_x, test_x, dim) = featurize_fold(data, &train_docs, &test_docs, opts)?;
        let train_y: Vec<Vec<bool>> =
            train_docs.iter().map(|&i| label_matrix[i].clone()).collect();
        let models = train_binary_relevance(&train_x, &train_y, dim, num_labels, &opts.svm)?;
        let scores: Vec<Vec<f64>> = (0..num_labels)
            .map(|k| test_x.iter().map(|x| crate::svm::decision(&models[k], x)).collect())
            .collect();
        let truths: Vec<Vec<bool>> = (0..num_labels)
            .map(|k| test_docs.iter().map(|&i| label_matrix[i][k]).collect())
            .collect();
        let report = multilabel_ap_report(&scores, &truths, out_of_domain)?;
        Ok(report.in_domain)
    })
}

/// Learning curve for the single-label SVM: accuracy versus training-fold
/// count.
pub fn learning_curve_svm(
    data: &CvDataset,
    labels: &[usize],
    num_classes: usize,
    plan: &FoldPlan,
    opts: &SvmCvOptions,
) -> Result<Vec<f64>> {
    let folds = fold_indices(plan, &data.doc_ids)?;
    learning_curve(plan.k, |train_folds, test_fold| {
        let train_docs: Vec<usize> = (0..data.len())
            .filter(|&i| train_folds.contains(&folds[i]))
            .collect();
        let test_docs: Vec<usize> = (0..data.len())
            .filter(|&i| folds[i] == test_fold)
            .collect();
        let (train_x, test_x, dim) = featurize_fold(data, &train_docs, &test_docs, opts)?;
        let train_y: Vec<usize> = train_docs.iter().map(|&i| labels[i]).collect();
        let model = train_multiclass_ovr(&train_x, &train_y, dim, num_classes, &opts.svm)?;
        let predictions: Vec<usize> = test_x.iter().map(|x| model.predict(x)).collect();
        let truth: Vec<usize> = test_docs.iter().map(|&i| labels[i]).collect();
        accuracy(&predictions, &truth)
    })
}
