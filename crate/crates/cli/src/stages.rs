//! Stage implementations behind the subcommands. Every stage writes its
//! outputs plus a manifest into the output directory and fails with a
//! non-zero exit on any error.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use log::info;

use zrtopic_core::aud::{
    self, init_model, load_model, load_unit_sequences, save_model, save_unit_sequences,
    tokenize_corpus_aud, vb_train, UnitSequence,
};
use zrtopic_core::bow::{count_ngrams_multi, NgramCounts};
use zrtopic_core::cnn::ModelSelection;
use zrtopic_core::corpus::{
    generate_planted_corpus, generate_synthetic_corpus, load_manifest, save_manifest, Corpus,
    Labels,
};
use zrtopic_core::embed::{
    load_embedding_table, save_embedding_table, train_skipgram, EmbeddingTable,
};
use zrtopic_core::eval::{
    learning_curve_svm, learning_curve_svm_multilabel, make_folds, repeat_experiment, run_cv_cnn,
    run_cv_cnn_multilabel, run_cv_svm, run_cv_svm_multilabel, CnnCvOptions, CvDataset, FoldRun,
};
use zrtopic_core::utd::{cluster_terms, discover_matches, tokenize_documents_utd};
use zrtopic_core::util::derive_seed;

use crate::config::{Classifier, EvalConfig, LoadedConfig, SynthConfig};
use crate::io::{fmt_f64, load_count_docs, save_count_docs, write_csv, CountDoc};
use crate::manifest::{verify_chain, Manifest};

fn ensure_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)
        .with_context(|| format!("cannot create output directory {}", out.display()))
}

pub fn run_synth(loaded: &LoadedConfig, out: &Path) -> Result<()> {
    ensure_out(out)?;
    let spec = loaded.config.require_synth()?;
    let mut manifest = Manifest::new("synth", loaded);
    match spec {
        SynthConfig::Units(spec) => {
            let (corpus, truth) = generate_synthetic_corpus(spec)?;
            save_manifest(out, &corpus)?;
            let truth_path = out.join("ground_truth.json");
            let mut bytes = serde_json::to_vec_pretty(&truth)?;
            bytes.push(b'\n');
            std::fs::write(&truth_path, bytes)?;
            manifest.add_output("corpus", &out.join("corpus.json"))?;
            manifest.add_output("ground_truth", &truth_path)?;
            info!(
                "generated {} documents / {} utterances",
                corpus.documents.len(),
                corpus.utterances.len()
            );
        }
        SynthConfig::Planted(spec) => {
            let (corpus, occurrences) = generate_planted_corpus(spec)?;
            save_manifest(out, &corpus)?;
            let truth_path = out.join("planted_terms.json");
            let mut bytes = serde_json::to_vec_pretty(&occurrences)?;
            bytes.push(b'\n');
            std::fs::write(&truth_path, bytes)?;
            manifest.add_output("corpus", &out.join("corpus.json"))?;
            manifest.add_output("planted_terms", &truth_path)?;
            info!(
                "generated {} documents with {} planted occurrences",
                corpus.documents.len(),
                occurrences.len()
            );
        }
    }
    manifest.write(out)
}

pub fn run_utd(
    loaded: &LoadedConfig,
    corpus_path: &Path,
    rescorer_path: Option<&Path>,
    out: &Path,
) -> Result<()> {
    ensure_out(out)?;
    let config = loaded.config.require_utd()?;
    let rescorer = match (config.use_rescoring, rescorer_path) {
        (true, Some(path)) => Some(zrtopic_core::utd::load_rescorer(path)?),
        (true, None) => bail!("config enables rescoring but no --rescorer model was given"),
        (false, _) => None,
    };
    let corpus = load_manifest(corpus_path)?;
    let matches = discover_matches(&corpus, config, rescorer.as_ref())?;
    info!("found {} matches", matches.len());
    let clusters = cluster_terms(&matches, config.graph_edge_threshold, config.use_rescoring);
    info!("clustered into {} term categories", clusters.clusters.len());
    let term_docs = tokenize_documents_utd(&clusters, &corpus);

    let matches_path = out.join("matches.jsonl");
    {
        let mut w = std::io::BufWriter::new(std::fs::File::create(&matches_path)?);
        for m in &matches {
            serde_json::to_writer(&mut w, m)?;
            std::io::Write::write_all(&mut w, b"\n")?;
        }
    }
    let clusters_path = out.join("clusters.jsonl");
    {
        let mut w = std::io::BufWriter::new(std::fs::File::create(&clusters_path)?);
        for (id, cluster) in clusters.clusters.iter().enumerate() {
            let line = serde_json::json!({"cluster_id": id, "nodes": cluster});
            serde_json::to_writer(&mut w, &line)?;
            std::io::Write::write_all(&mut w, b"\n")?;
        }
    }
    let counts_path = out.join("term_counts.jsonl");
    let count_docs: Vec<CountDoc> = term_docs
        .iter()
        .map(|(doc_id, counts)| CountDoc::from_counts(doc_id, counts))
        .collect();
    save_count_docs(&counts_path, &count_docs)?;

    let mut manifest = Manifest::new("utd", loaded);
    manifest.add_input("corpus", corpus_path)?;
    if let Some(path) = rescorer_path {
        manifest.add_input("rescorer", path)?;
    }
    manifest.add_output("matches", &matches_path)?;
    manifest.add_output("clusters", &clusters_path)?;
    manifest.add_output("counts", &counts_path)?;
    manifest.write(out)
}

pub fn run_aud_train(loaded: &LoadedConfig, corpus_path: &Path, out: &Path) -> Result<()> {
    ensure_out(out)?;
    let config = loaded.config.require_aud()?;
    let corpus = load_manifest(corpus_path)?;
    let model = init_model(config, &corpus)?;
    let (model, elbo) = vb_train(model, &corpus, config.training_iterations)?;
    let model_path = out.join("model.aud");
    save_model(&model_path, &model)?;
    let elbo_rows: Vec<Vec<String>> = elbo
        .iter()
        .enumerate()
        .map(|(i, v)| vec![i.to_string(), fmt_f64(*v)])
        .collect();
    let elbo_path = out.join("elbo.csv");
    write_csv(&elbo_path, "iteration,elbo", &elbo_rows)?;
    info!(
        "trained {} iterations, final ELBO {:?}",
        elbo.len(),
        elbo.last()
    );

    let mut manifest = Manifest::new("aud-train", loaded);
    manifest.add_input("corpus", corpus_path)?;
    manifest.add_output("model", &model_path)?;
    manifest.add_output("elbo", &elbo_path)?;
    manifest.write(out)
}

pub fn run_aud_decode(
    loaded: &LoadedConfig,
    corpus_path: &Path,
    model_path: &Path,
    out: &Path,
) -> Result<()> {
    ensure_out(out)?;
    let corpus = load_manifest(corpus_path)?;
    let model = load_model(model_path)?;
    let sequences = tokenize_corpus_aud(&model, &corpus)?;
    let units_path = out.join("units.jsonl");
    save_unit_sequences(&units_path, &sequences)?;
    info!(
        "decoded {} utterances, {} distinct units",
        sequences.len(),
        aud::distinct_units(&sequences)
    );

    let mut manifest = Manifest::new("aud-decode", loaded);
    manifest.add_input("corpus", corpus_path)?;
    manifest.add_input("model", model_path)?;
    manifest.add_output("units", &units_path)?;
    manifest.write(out)
}

/// Group decoded unit sequences per document, in the document's utterance
/// order.
fn doc_unit_sequences(
    corpus: &Corpus,
    sequences: &[UnitSequence],
) -> Result<Vec<(String, Vec<Vec<u32>>)>> {
    let by_utt: BTreeMap<&str, &UnitSequence> = sequences
        .iter()
        .map(|s| (s.utterance_id.as_str(), s))
        .collect();
    corpus
        .documents
        .iter()
        .map(|doc| {
            let seqs: Result<Vec<Vec<u32>>> = doc
                .utterance_ids
                .iter()
                .map(|u| {
                    by_utt
                        .get(u.as_str())
                        .map(|s| s.unit_ids())
                        .ok_or_else(|| anyhow!("no unit sequence for utterance {u}"))
                })
                .collect();
            Ok((doc.doc_id.clone(), seqs?))
        })
        .collect()
}

pub fn run_featurize(
    loaded: &LoadedConfig,
    corpus_path: &Path,
    units_path: &Path,
    out: &Path,
) -> Result<()> {
    ensure_out(out)?;
    let opts = loaded.config.require_svm()?;
    verify_chain(units_path, "corpus", corpus_path)?;
    let corpus = load_manifest(corpus_path)?;
    let sequences = load_unit_sequences(units_path)?;
    let docs = doc_unit_sequences(&corpus, &sequences)?;
    let count_docs: Vec<CountDoc> = docs
        .iter()
        .map(|(doc_id, seqs)| {
            let counts = count_ngrams_multi(seqs, opts.ngram_order)?;
            Ok(CountDoc::from_counts(doc_id, &counts))
        })
        .collect::<Result<_>>()?;
    let counts_path = out.join("counts.jsonl");
    save_count_docs(&counts_path, &count_docs)?;

    let mut manifest = Manifest::new("featurize", loaded);
    manifest.add_input("corpus", corpus_path)?;
    manifest.add_input("units", units_path)?;
    manifest.add_output("counts", &counts_path)?;
    manifest.write(out)
}

pub fn run_embed(loaded: &LoadedConfig, units_path: &Path, out: &Path) -> Result<()> {
    ensure_out(out)?;
    let config = loaded.config.require_embed()?;
    let sequences = load_unit_sequences(units_path)?;
    let unit_seqs: Vec<Vec<u32>> = sequences.iter().map(|s| s.unit_ids()).collect();
    let (table, losses) = train_skipgram(&unit_seqs, config)?;
    let table_path = out.join("embeddings.txt");
    save_embedding_table(&table_path, &table)?;
    let loss_rows: Vec<Vec<String>> = losses
        .iter()
        .enumerate()
        .map(|(e, l)| vec![e.to_string(), fmt_f64(*l)])
        .collect();
    let loss_path = out.join("loss.csv");
    write_csv(&loss_path, "epoch,mean_pair_loss", &loss_rows)?;
    info!("trained embeddings for {} units", table.vectors.len());

    let mut manifest = Manifest::new("embed", loaded);
    manifest.add_input("units", units_path)?;
    manifest.add_output("embeddings", &table_path)?;
    manifest.add_output("loss", &loss_path)?;
    manifest.write(out)
}

/// Labels of a corpus, either single-label or a binary matrix.
enum CorpusLabels {
    Single(Vec<usize>, usize),
    Multi(Vec<Vec<bool>>, usize),
}

fn corpus_labels(corpus: &Corpus) -> Result<CorpusLabels> {
    let mut single = Vec::new();
    let mut multi = Vec::new();
    let mut max_label = 0usize;
    let mut any_multi = false;
    for doc in &corpus.documents {
        match &doc.labels {
            Labels::Single(l) => {
                single.push(*l);
                max_label = max_label.max(*l);
            }
            Labels::Multi(ls) => {
                any_multi = true;
                for &l in ls {
                    max_label = max_label.max(l);
                }
                multi.push(ls.clone());
            }
        }
    }
    if any_multi {
        if !single.is_empty() {
            bail!("corpus mixes single-label and multi-label documents");
        }
        let k = max_label + 1;
        let matrix = multi
            .into_iter()
            .map(|ls| {
                let mut row = vec![false; k];
                for l in ls {
                    row[l] = true;
                }
                row
            })
            .collect();
        Ok(CorpusLabels::Multi(matrix, k))
    } else {
        Ok(CorpusLabels::Single(single, max_label + 1))
    }
}

fn strata_of(corpus: &Corpus) -> Vec<String> {
    corpus
        .documents
        .iter()
        .map(|doc| match &doc.labels {
            Labels::Single(l) => l.to_string(),
            Labels::Multi(ls) => ls
                .iter()
                .map(|l| l.to_string())
                .collect::<Vec<_>>()
                .join("+"),
        })
        .collect()
}

fn count_dataset(corpus: &Corpus, counts_path: &Path) -> Result<CvDataset> {
    let count_docs = load_count_docs(counts_path)?;
    let by_id: BTreeMap<&str, &CountDoc> = count_docs
        .iter()
        .map(|d| (d.doc_id.as_str(), d))
        .collect();
    let mut doc_ids = Vec::new();
    let mut counts: Vec<NgramCounts> = Vec::new();
    for doc in &corpus.documents {
        let cd = by_id
            .get(doc.doc_id.as_str())
            .ok_or_else(|| anyhow!("no counts for document {}", doc.doc_id))?;
        doc_ids.push(doc.doc_id.clone());
        counts.push(cd.to_counts()?);
    }
    Ok(CvDataset {
        doc_ids,
        counts,
        sequences: Vec::new(),
    })
}

fn sequence_dataset(corpus: &Corpus, sequences: &[UnitSequence]) -> Result<CvDataset> {
    let docs = doc_unit_sequences(corpus, sequences)?;
    Ok(CvDataset {
        doc_ids: docs.iter().map(|(id, _)| id.clone()).collect(),
        counts: docs
            .iter()
            .map(|_| NgramCounts::default())
            .collect(),
        sequences: docs
            .into_iter()
            .map(|(_, seqs)| seqs.into_iter().flatten().collect())
            .collect(),
    })
}

pub struct EvaluateInputs<'a> {
    pub corpus: &'a Path,
    pub counts: Option<&'a Path>,
    pub units: Option<&'a Path>,
    pub embeddings: Option<&'a Path>,
    pub model: Option<&'a Path>,
}

fn mean_fold_metric(runs: &[FoldRun]) -> f64 {
    runs.iter().map(|r| r.metric).sum::<f64>() / runs.len().max(1) as f64
}

/// `repeat_experiment` over a fallible experiment: the first error aborts the
/// whole evaluation.
fn repeat_with_errors<F>(
    repeats: usize,
    base_seed: u64,
    mut f: F,
) -> Result<zrtopic_core::eval::RepeatedResult>
where
    F: FnMut(usize, u64) -> Result<f64>,
{
    let mut error: Option<anyhow::Error> = None;
    let result = repeat_experiment(
        |r, seed| match f(r, seed) {
            Ok(v) => v,
            Err(e) => {
                if error.is_none() {
                    error = Some(e);
                }
                f64::NAN
            }
        },
        repeats,
        base_seed,
    );
    match error {
        Some(e) => Err(e),
        None => Ok(result),
    }
}

/// The repeated-CV experiment driver behind `evaluate`, `train-svm` and
/// `train-cnn`.
pub fn run_evaluate(
    loaded: &LoadedConfig,
    inputs: &EvaluateInputs<'_>,
    out: &Path,
    repeats_override: Option<usize>,
) -> Result<()> {
    ensure_out(out)?;
    let eval_cfg: EvalConfig = loaded.config.require_eval()?.clone();
    let repeats = repeats_override.unwrap_or(eval_cfg.repeats);
    let corpus = load_manifest(inputs.corpus)?;
    let labels = corpus_labels(&corpus)?;
    let root = loaded.config.root_seed;

    // Assemble the dataset for the requested classifier.
    let decoded: Option<Vec<UnitSequence>> = match (inputs.units, inputs.model) {
        (Some(units), _) => {
            verify_chain(units, "corpus", inputs.corpus)?;
            Some(load_unit_sequences(units)?)
        }
        (None, Some(model_path)) => {
            let model = load_model(model_path)?;
            Some(tokenize_corpus_aud(&model, &corpus)?)
        }
        (None, None) => None,
    };
    let pretrained: Option<EmbeddingTable> = match inputs.embeddings {
        Some(path) => {
            if let Some(units) = inputs.units {
                verify_chain(path, "units", units)?;
            }
            Some(load_embedding_table(path)?)
        }
        None => None,
    };

    let data: CvDataset = match eval_cfg.classifier {
        Classifier::Svm => {
            if let Some(counts) = inputs.counts {
                verify_chain(counts, "corpus", inputs.corpus)?;
                count_dataset(&corpus, counts)?
            } else if let Some(seqs) = &decoded {
                // Count n-grams on the fly from decoded units.
                let opts = loaded.config.require_svm()?;
                let docs = doc_unit_sequences(&corpus, seqs)?;
                CvDataset {
                    doc_ids: docs.iter().map(|(id, _)| id.clone()).collect(),
                    counts: docs
                        .iter()
                        .map(|(_, seqs)| count_ngrams_multi(seqs, opts.ngram_order))
                        .collect::<zrtopic_core::Result<_>>()?,
                    sequences: Vec::new(),
                }
            } else {
                bail!("svm evaluation needs --counts, --units or --model");
            }
        }
        Classifier::Cnn => {
            let seqs = decoded
                .as_ref()
                .ok_or_else(|| anyhow!("cnn evaluation needs --units or --model"))?;
            sequence_dataset(&corpus, seqs)?
        }
    };

    let plan = make_folds(
        &data.doc_ids,
        &strata_of(&corpus),
        eval_cfg.k,
        derive_seed(root, "folds"),
    )?;

    let mut fold_rows: Vec<Vec<String>> = Vec::new();
    let mut in_domain_trace: Vec<f64> = Vec::new();
    let config_tag = &loaded.config_hash[..12];

    let result = match (&labels, eval_cfg.classifier) {
        (CorpusLabels::Single(y, k), Classifier::Svm) => {
            let base = loaded.config.require_svm()?.clone();
            repeat_with_errors(repeats, derive_seed(root, "repeats"), |r, seed| {
                let mut opts = base.clone();
                opts.svm.rng_seed = seed;
                let runs = run_cv_svm(&data, y, *k, &plan, &opts)?;
                for run in &runs {
                    fold_rows.push(vec![
                        config_tag.to_string(),
                        r.to_string(),
                        run.test_fold.to_string(),
                        fmt_f64(run.metric),
                    ]);
                }
                Ok(mean_fold_metric(&runs))
            })?
        }
        (CorpusLabels::Single(y, k), Classifier::Cnn) => {
            let base = loaded.config.require_cnn()?.clone();
            repeat_with_errors(repeats, derive_seed(root, "repeats"), |r, seed| {
                let mut config = base.clone();
                config.rng_seed = seed;
                let opts = CnnCvOptions {
                    config,
                    selection: ModelSelection::BestValidationAccuracy,
                    pretrained: if eval_cfg.use_pretrained_embeddings {
                        pretrained.clone()
                    } else {
                        None
                    },
                };
                let runs = run_cv_cnn(&data, y, *k, &plan, &opts)?;
                for run in &runs {
                    fold_rows.push(vec![
                        config_tag.to_string(),
                        r.to_string(),
                        run.test_fold.to_string(),
                        fmt_f64(run.metric),
                    ]);
                }
                Ok(mean_fold_metric(&runs))
            })?
        }
        (CorpusLabels::Multi(matrix, k), Classifier::Svm) => {
            let base = loaded.config.require_svm()?.clone();
            let ood = eval_cfg.out_of_domain.unwrap_or(k - 1);
            repeat_with_errors(repeats, derive_seed(root, "repeats"), |r, seed| {
                let mut opts = base.clone();
                opts.svm.rng_seed = seed;
                let report = run_cv_svm_multilabel(&data, matrix, *k, ood, &plan, &opts)?;
                for (label, ap) in report.per_label.iter().enumerate() {
                    fold_rows.push(vec![
                        config_tag.to_string(),
                        r.to_string(),
                        format!("label{label}"),
                        ap.map_or("skip".to_string(), fmt_f64),
                    ]);
                }
                in_domain_trace.push(report.in_domain);
                Ok(report.overall)
            })?
        }
        (CorpusLabels::Multi(matrix, k), Classifier::Cnn) => {
            let base = loaded.config.require_cnn()?.clone();
            let ood = eval_cfg.out_of_domain.unwrap_or(k - 1);
            repeat_with_errors(repeats, derive_seed(root, "repeats"), |r, seed| {
                let mut config = base.clone();
                config.rng_seed = seed;
                let opts = CnnCvOptions {
                    config,
                    selection: ModelSelection::FinalEpoch,
                    pretrained: if eval_cfg.use_pretrained_embeddings {
                        pretrained.clone()
                    } else {
                        None
                    },
                };
                let report = run_cv_cnn_multilabel(&data, matrix, *k, ood, &plan, &opts)?;
                for (label, ap) in report.per_label.iter().enumerate() {
                    fold_rows.push(vec![
                        config_tag.to_string(),
                        r.to_string(),
                        format!("label{label}"),
                        ap.map_or("skip".to_string(), fmt_f64),
                    ]);
                }
                in_domain_trace.push(report.in_domain);
                Ok(report.overall)
            })?
        }
    };

    let results_path = out.join("results.csv");
    write_csv(&results_path, "config,repeat,fold,metric", &fold_rows)?;
    let summary = serde_json::json!({
        "config_hash": loaded.config_hash,
        "classifier": match eval_cfg.classifier { Classifier::Svm => "svm", Classifier::Cnn => "cnn" },
        "k": eval_cfg.k,
        "repeats": repeats,
        "plan_hash": plan.plan_hash(),
        "per_repeat": result.values,
        "mean": result.mean,
        "std": result.std,
        "formatted": format!("{result}"),
        "in_domain_per_repeat": in_domain_trace,
    });
    let summary_path = out.join("summary.json");
    let mut bytes = serde_json::to_vec_pretty(&summary)?;
    bytes.push(b'\n');
    std::fs::write(&summary_path, bytes)?;
    info!("result: {result}");

    let mut manifest = Manifest::new("evaluate", loaded);
    manifest.add_input("corpus", inputs.corpus)?;
    if let Some(p) = inputs.counts {
        manifest.add_input("counts", p)?;
    }
    if let Some(p) = inputs.units {
        manifest.add_input("units", p)?;
    }
    if let Some(p) = inputs.embeddings {
        manifest.add_input("embeddings", p)?;
    }
    if let Some(p) = inputs.model {
        manifest.add_input("model", p)?;
    }
    manifest.add_output("results", &results_path)?;
    manifest.add_output("summary", &summary_path)?;
    manifest.write(out)
}

/// Fold-count learning curve over the SVM classifier.
pub fn run_curve(
    loaded: &LoadedConfig,
    corpus_path: &Path,
    counts_path: &Path,
    out: &Path,
) -> Result<()> {
    ensure_out(out)?;
    let eval_cfg = loaded.config.require_eval()?;
    let opts = loaded.config.require_svm()?.clone();
    verify_chain(counts_path, "corpus", corpus_path)?;
    let corpus = load_manifest(corpus_path)?;
    let data = count_dataset(&corpus, counts_path)?;
    let plan = make_folds(
        &data.doc_ids,
        &strata_of(&corpus),
        eval_cfg.k,
        derive_seed(loaded.config.root_seed, "folds"),
    )?;
    // Single-label corpora plot accuracy; multi-label corpora plot the
    // in-domain mean average precision.
    let curve = match corpus_labels(&corpus)? {
        CorpusLabels::Single(y, k) => learning_curve_svm(&data, &y, k, &plan, &opts)?,
        CorpusLabels::Multi(matrix, k) => {
            let ood = eval_cfg.out_of_domain.unwrap_or(k - 1);
            learning_curve_svm_multilabel(&data, &matrix, k, ood, &plan, &opts)?
        }
    };
    let rows: Vec<Vec<String>> = curve
        .iter()
        .enumerate()
        .map(|(i, v)| vec![(i + 1).to_string(), fmt_f64(*v)])
        .collect();
    let curve_path = out.join("curve.csv");
    write_csv(&curve_path, "t,metric", &rows)?;
    info!("learning curve: {curve:?}");

    let mut manifest = Manifest::new("curve", loaded);
    manifest.add_input("corpus", corpus_path)?;
    manifest.add_input("counts", counts_path)?;
    manifest.add_output("curve", &curve_path)?;
    manifest.write(out)
}

/// Single-CV runs behind `train-svm` / `train-cnn` (one repeat).
pub fn run_single_cv(
    loaded: &LoadedConfig,
    inputs: &EvaluateInputs<'_>,
    out: &Path,
) -> Result<()> {
    run_evaluate(loaded, inputs, out, Some(1))
}
