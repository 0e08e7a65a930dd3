//! End-to-end checks of the command-line interface: stage chaining, the
//! multi-label path, artifact mismatch detection and error exit codes.

use std::path::Path;
use std::process::Command;

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use zrtopic_core::corpus::{save_manifest, Corpus, FeatureMatrix, Labels, SpokenDocument};

fn zrtopic(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_zrtopic"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_ok(args: &[&str]) {
    let out = zrtopic(args);
    assert!(
        out.status.success(),
        "zrtopic {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_config(path: &Path, value: serde_json::Value) {
    std::fs::write(path, serde_json::to_vec_pretty(&value).unwrap()).unwrap();
}

fn base_config() -> serde_json::Value {
    serde_json::json!({
        "root_seed": 900,
        "synth": {"units": {
            "num_topics": 2, "num_latent_units": 8, "states_per_unit": 2,
            "topic_concentration": 0.2, "docs_per_topic": 6, "utterances_per_doc": 1,
            "units_per_utterance": [8, 12], "frames_per_unit": [3, 5],
            "feature_dim": 6, "emission_scale": 1.0, "noise_std": 0.1, "rng_seed": 0
        }},
        "aud": {"truncation": 10, "states_per_unit": 2, "gaussians_per_state": 1,
                 "concentration": 1.0, "training_iterations": 3, "rng_seed": 0},
        "embed": {"dim": 6, "window": 5, "epochs": 3,
                   "lr_initial": 0.025, "lr_min": 1e-4, "rng_seed": 0},
        "svm": {"ngram_order": 2, "use_idf": true, "l2_normalize": true,
                 "svm": {"penalty": "l2", "alpha": 1e-4, "epochs": 30, "rng_seed": 0}},
        "cnn": {"embed_dim": 6, "conv_window": 3, "conv_units": 16, "hidden_units": 16,
                 "dropout": 0.2, "batch_size": 4, "max_epochs": 3, "head": "softmax",
                 "num_classes": 2, "rho": 0.95, "epsilon": 1e-6, "rng_seed": 0},
        "eval": {"k": 4, "repeats": 2, "classifier": "svm"}
    })
}

#[test]
fn full_stage_chain_produces_manifests_and_results() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path();
    let cfg_path = base.join("config.json");
    write_config(&cfg_path, base_config());
    let cfg = cfg_path.to_str().unwrap();

    let corpus = base.join("corpus");
    assert_ok(&["synth", "--config", cfg, "--out", corpus.to_str().unwrap()]);
    let corpus_json = corpus.join("corpus.json");
    assert!(corpus.join("ground_truth.json").exists());
    // The manifest embeds the effective config, so the output directory
    // alone reproduces the run.
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(corpus.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["root_seed"], 900);
    assert_eq!(manifest["config"]["root_seed"], 900);
    assert!(manifest["config"]["synth"]["units"]["num_topics"].is_number());
    assert!(manifest["outputs"]["corpus"]["sha256"].is_string());

    let aud = base.join("aud");
    assert_ok(&["aud-train", "--config", cfg, "--corpus", corpus_json.to_str().unwrap(),
                "--out", aud.to_str().unwrap()]);
    let units = base.join("units");
    assert_ok(&["aud-decode", "--config", cfg, "--corpus", corpus_json.to_str().unwrap(),
                "--model", aud.join("model.aud").to_str().unwrap(),
                "--out", units.to_str().unwrap()]);
    let feat = base.join("feat");
    assert_ok(&["featurize", "--config", cfg, "--corpus", corpus_json.to_str().unwrap(),
                "--units", units.join("units.jsonl").to_str().unwrap(),
                "--out", feat.to_str().unwrap()]);
    let emb = base.join("emb");
    assert_ok(&["embed", "--config", cfg,
                "--units", units.join("units.jsonl").to_str().unwrap(),
                "--out", emb.to_str().unwrap()]);

    // SVM single CV, CNN single CV, repeated evaluation, learning curve.
    let svm_out = base.join("svm");
    assert_ok(&["train-svm", "--config", cfg, "--corpus", corpus_json.to_str().unwrap(),
                "--counts", feat.join("counts.jsonl").to_str().unwrap(),
                "--out", svm_out.to_str().unwrap()]);
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(svm_out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["repeats"], 1);

    let cnn_cfg_path = base.join("config-cnn.json");
    let mut cnn_cfg = base_config();
    cnn_cfg["eval"]["classifier"] = "cnn".into();
    cnn_cfg["eval"]["use_pretrained_embeddings"] = true.into();
    write_config(&cnn_cfg_path, cnn_cfg);
    let cnn_out = base.join("cnn");
    assert_ok(&["train-cnn", "--config", cnn_cfg_path.to_str().unwrap(),
                "--corpus", corpus_json.to_str().unwrap(),
                "--units", units.join("units.jsonl").to_str().unwrap(),
                "--embeddings", emb.join("embeddings.txt").to_str().unwrap(),
                "--out", cnn_out.to_str().unwrap()]);
    assert!(cnn_out.join("results.csv").exists());

    // The fold plan is a function of root seed + documents + k alone, so the
    // SVM and CNN experiments on this corpus share one plan.
    let svm_summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(svm_out.join("summary.json")).unwrap()).unwrap();
    let cnn_summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(cnn_out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(svm_summary["plan_hash"], cnn_summary["plan_hash"]);

    let eval_out = base.join("eval");
    assert_ok(&["evaluate", "--config", cfg, "--corpus", corpus_json.to_str().unwrap(),
                "--counts", feat.join("counts.jsonl").to_str().unwrap(),
                "--out", eval_out.to_str().unwrap()]);
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(eval_out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["repeats"], 2);
    assert_eq!(summary["per_repeat"].as_array().unwrap().len(), 2);

    let curve_out = base.join("curve");
    assert_ok(&["curve", "--config", cfg, "--corpus", corpus_json.to_str().unwrap(),
                "--counts", feat.join("counts.jsonl").to_str().unwrap(),
                "--out", curve_out.to_str().unwrap()]);
    let curve = std::fs::read_to_string(curve_out.join("curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 1 + 3); // header + t in 1..=k-1
}

/// Synthetic multi-label corpus: label 0/1 from the feature mean sign, label
/// 2 acts as an out-of-domain marker.
fn multilabel_corpus(dir: &Path) -> std::path::PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut corpus = Corpus::default();
    for i in 0..16 {
        let utt = format!("u{i:02}");
        let shift = if i % 2 == 0 { 1.0 } else { -1.0 };
        let data = Array2::from_shape_fn((30, 4), |_| shift + 0.3 * rng.random::<f64>());
        corpus
            .utterances
            .insert(utt.clone(), FeatureMatrix::new(utt.clone(), data).unwrap());
        let labels = if i % 4 == 3 {
            vec![2]
        } else if i % 2 == 0 {
            vec![0]
        } else {
            vec![1]
        };
        corpus.documents.push(SpokenDocument {
            doc_id: format!("d{i:02}"),
            utterance_ids: vec![utt],
            labels: Labels::Multi(labels),
        });
    }
    save_manifest(dir, &corpus).unwrap();
    dir.join("corpus.json")
}

#[test]
fn multilabel_evaluation_reports_overall_and_in_domain_ap() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path();
    let corpus_json = multilabel_corpus(&base.join("corpus"));

    let mut cfg = base_config();
    cfg["eval"] = serde_json::json!({
        "k": 4, "repeats": 1, "classifier": "svm", "out_of_domain": 2
    });
    let cfg_path = base.join("config.json");
    write_config(&cfg_path, cfg);

    let aud = base.join("aud");
    assert_ok(&["aud-train", "--config", cfg_path.to_str().unwrap(),
                "--corpus", corpus_json.to_str().unwrap(), "--out", aud.to_str().unwrap()]);
    let eval_out = base.join("eval");
    assert_ok(&["evaluate", "--config", cfg_path.to_str().unwrap(),
                "--corpus", corpus_json.to_str().unwrap(),
                "--model", aud.join("model.aud").to_str().unwrap(),
                "--out", eval_out.to_str().unwrap()]);
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(eval_out.join("summary.json")).unwrap()).unwrap();
    let overall = summary["per_repeat"][0].as_f64().unwrap();
    let in_domain = summary["in_domain_per_repeat"][0].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&overall));
    assert!((0.0..=1.0).contains(&in_domain));
    // Per-label rows appear in the CSV.
    let csv = std::fs::read_to_string(eval_out.join("results.csv")).unwrap();
    assert!(csv.contains("label0") && csv.contains("label2"));
}

#[test]
fn mismatched_artifacts_fail_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path();
    let cfg_path = base.join("config.json");
    write_config(&cfg_path, base_config());
    let cfg = cfg_path.to_str().unwrap();

    // Two corpora under different seeds, embeddings trained on units of the
    // first, evaluation attempted on units of the second.
    for (tag, seed) in [("one", "1"), ("two", "2")] {
        let corpus = base.join(format!("corpus-{tag}"));
        assert_ok(&["synth", "--config", cfg, "--seed", seed, "--out", corpus.to_str().unwrap()]);
        let aud = base.join(format!("aud-{tag}"));
        assert_ok(&["aud-train", "--config", cfg, "--seed", seed,
                    "--corpus", corpus.join("corpus.json").to_str().unwrap(),
                    "--out", aud.to_str().unwrap()]);
        let units = base.join(format!("units-{tag}"));
        assert_ok(&["aud-decode", "--config", cfg, "--seed", seed,
                    "--corpus", corpus.join("corpus.json").to_str().unwrap(),
                    "--model", aud.join("model.aud").to_str().unwrap(),
                    "--out", units.to_str().unwrap()]);
    }
    let emb = base.join("emb");
    assert_ok(&["embed", "--config", cfg,
                "--units", base.join("units-one/units.jsonl").to_str().unwrap(),
                "--out", emb.to_str().unwrap()]);

    let mut cnn_cfg = base_config();
    cnn_cfg["eval"]["classifier"] = "cnn".into();
    cnn_cfg["eval"]["use_pretrained_embeddings"] = true.into();
    let cnn_cfg_path = base.join("config-cnn.json");
    write_config(&cnn_cfg_path, cnn_cfg);

    let out = zrtopic(&["evaluate", "--config", cnn_cfg_path.to_str().unwrap(),
                        "--corpus", base.join("corpus-two/corpus.json").to_str().unwrap(),
                        "--units", base.join("units-two/units.jsonl").to_str().unwrap(),
                        "--embeddings", emb.join("embeddings.txt").to_str().unwrap(),
                        "--out", base.join("eval-bad").to_str().unwrap()]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("artifact mismatch"),
        "stderr was: {stderr}"
    );

    // Units decoded from a different corpus than supplied is also caught.
    let out = zrtopic(&["featurize", "--config", cfg,
                        "--corpus", base.join("corpus-two/corpus.json").to_str().unwrap(),
                        "--units", base.join("units-one/units.jsonl").to_str().unwrap(),
                        "--out", base.join("feat-bad").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("artifact mismatch"));
}

#[test]
fn rescoring_requires_a_model_and_applies_it() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path();
    let mut cfg = base_config();
    cfg["synth"] = serde_json::json!({"planted": {
        "num_topics": 2, "terms_per_topic": 1, "term_frames": 70,
        "occurrences_per_doc": 2, "docs_per_topic": 3,
        "filler_frames": [15, 25], "feature_dim": 6, "noise_std": 0.05, "rng_seed": 0
    }});
    cfg["utd"] = serde_json::json!({
        "cosine_threshold": 0.5, "median_filter_duration": 0.7, "min_match_duration": 0.5,
        "graph_edge_threshold": 0.88, "use_rescoring": true, "dtw_band_width": 75
    });
    let cfg_path = base.join("config.json");
    write_config(&cfg_path, cfg);
    let corpus = base.join("corpus");
    assert_ok(&["synth", "--config", cfg_path.to_str().unwrap(), "--out", corpus.to_str().unwrap()]);

    // Rescoring enabled without a model is an error.
    let out = zrtopic(&["utd", "--config", cfg_path.to_str().unwrap(),
                        "--corpus", corpus.join("corpus.json").to_str().unwrap(),
                        "--out", base.join("utd-none").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("rescorer"));

    // With a model, matches carry rescored similarities.
    let rescorer = zrtopic_core::utd::RescoreModel {
        weights: vec![3.0, -1.0, -1.0],
        bias: 0.0,
    };
    let rescorer_path = base.join("rescorer.json");
    zrtopic_core::utd::save_rescorer(&rescorer_path, &rescorer).unwrap();
    let utd_out = base.join("utd");
    assert_ok(&["utd", "--config", cfg_path.to_str().unwrap(),
                "--corpus", corpus.join("corpus.json").to_str().unwrap(),
                "--rescorer", rescorer_path.to_str().unwrap(),
                "--out", utd_out.to_str().unwrap()]);
    let matches = std::fs::read_to_string(utd_out.join("matches.jsonl")).unwrap();
    assert!(!matches.trim().is_empty());
    for line in matches.lines() {
        let m: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(m["rescored_similarity"].is_number());
    }
}

#[test]
fn missing_inputs_and_bad_configs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path();

    // Missing config file.
    let out = zrtopic(&["synth", "--config", base.join("nope.json").to_str().unwrap(),
                        "--out", base.join("o").to_str().unwrap()]);
    assert!(!out.status.success());

    // Config without the required section.
    let cfg_path = base.join("min.json");
    write_config(&cfg_path, serde_json::json!({"root_seed": 1}));
    let out = zrtopic(&["synth", "--config", cfg_path.to_str().unwrap(),
                        "--out", base.join("o").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("synth"));

    // Missing corpus path.
    let full_cfg = base.join("full.json");
    write_config(&full_cfg, base_config());
    let out = zrtopic(&["utd", "--config", full_cfg.to_str().unwrap(),
                        "--corpus", base.join("missing/corpus.json").to_str().unwrap(),
                        "--out", base.join("o2").to_str().unwrap()]);
    assert!(!out.status.success());
}
