//! Cross-validation protocols, classification metrics and repeated-experiment
//! reporting.

mod cv;
mod metrics;

pub use cv::{
    learning_curve, learning_curve_svm, learning_curve_svm_multilabel, run_cv_cnn,
    run_cv_cnn_multilabel, run_cv_svm, run_cv_svm_multilabel, CnnCvOptions, CvDataset, FoldRun,
    SvmCvOptions,
};
pub use metrics::{accuracy, average_precision, multilabel_ap_report, ApReport};

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::util::{mean_std, sha256_hex};
use crate::{Error, Result};

/// A fixed assignment of documents to folds. Created once per dataset and
/// reused across every experiment on it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldPlan {
    /// Documents assigned to `fold`.
    pub fn fold_members(&self, fold: usize) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k];
        for &f in self.assignment.values() {
            sizes[f] += 1;
        }
        sizes
    }

    /// Stable content hash, used to assert that SVM and CNN experiments on a
    /// dataset really share one plan.
    pub fn plan_hash(&self) -> String {
        let mut buf = String::new();
        buf.push_str(&format!("k={};seed={}", self.k, self.seed));
        for (id, f) in &self.assignment {
            buf.push_str(&format!(";{id}={f}"));
        }
        sha256_hex(buf.as_bytes())
    }
}

/// Seeded, label-stratified fold assignment. Fold sizes differ by at most
/// one; within each stratum the spread over folds also differs by at most
/// one. For multi-label documents the stratum is the full label subset.
pub fn make_folds(
    doc_ids: &[String],
    strata: &[String],
    k: usize,
    seed: u64,
) -> Result<FoldPlan> {
    if k == 0 || k > doc_ids.len() {
        return Err(Error::InvalidConfig(format!(
            "k = {k} must be in 1..={}",
            doc_ids.len()
        )));
    }
    if doc_ids.len() != strata.len() {
        return Err(Error::LengthMismatch {
            left: doc_ids.len(),
            right: strata.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Group documents by stratum in sorted order, shuffle within groups.
    let mut groups: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (id, s) in doc_ids.iter().zip(strata) {
        groups.entry(s.as_str()).or_default().push(id.as_str());
    }
    let mut assignment = BTreeMap::new();
    let mut cursor = 0usize;
    for (_, mut members) in groups {
        members.sort_unstable();
        members.shuffle(&mut rng);
        for id in members {
            if assignment.insert(id.to_string(), cursor % k).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate doc id {id}")));
            }
            cursor += 1;
        }
    }
    Ok(FoldPlan {
        k,
        seed,
        assignment,
    })
}

/// Mean and standard deviation over repeated runs of one experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepeatedResult {
    pub values: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation (denominator n).
    pub std: f64,
}

impl fmt::Display for RepeatedResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3} \u{b1} {:.3}", self.mean, self.std)
    }
}

/// Run `experiment` once per repeat with a distinct training seed, keeping
/// everything else (fold plan included) fixed. The experiment receives
/// `(repeat_index, seed)`.
pub fn repeat_experiment<F>(mut experiment: F, repeats: usize, base_seed: u64) -> RepeatedResult
where
    F: FnMut(usize, u64) -> f64,
{
    let values: Vec<f64> = (0..repeats)
        .map(|r| {
            let seed = crate::util::derive_seed(base_seed, &format!("repeat-{r}"));
            experiment(r, seed)
        })
        .collect();
    let (mean, std) = mean_std(&values);
    RepeatedResult { values, mean, std }
}
