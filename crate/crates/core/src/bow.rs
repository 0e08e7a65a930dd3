//! Bag-of-n-gram document vectors with optional IDF scaling and L2
//! normalization. Vocabularies and IDF statistics are fitted on training
//! documents only; out-of-vocabulary n-grams are dropped at transform time.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// An n-gram over token ids.
pub type Ngram = Vec<u32>;

/// Raw n-gram counts for one document, before any vocabulary is applied.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NgramCounts {
    pub counts: HashMap<Ngram, f64>,
}

impl NgramCounts {
    pub fn total(&self) -> f64 {
        self.counts.values().sum()
    }
}

/// Count all contiguous n-grams of `tokens`. Sequences shorter than `n`
/// produce empty counts.
pub fn count_ngrams(tokens: &[u32], n: usize) -> Result<NgramCounts> {
    if n == 0 {
        return Err(Error::InvalidConfig("n-gram order must be >= 1".into()));
    }
    let mut counts: HashMap<Ngram, f64> = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window.to_vec()).or_insert(0.0) += 1.0;
        }
    }
    Ok(NgramCounts { counts })
}

/// Accumulate n-gram counts over several token sequences (e.g. the utterances
/// of one document); n-grams do not span sequence boundaries.
pub fn count_ngrams_multi(sequences: &[Vec<u32>], n: usize) -> Result<NgramCounts> {
    let mut out = NgramCounts::default();
    for seq in sequences {
        for (k, v) in count_ngrams(seq, n)?.counts {
            *out.counts.entry(k).or_insert(0.0) += v;
        }
    }
    Ok(out)
}

/// Ordered map from n-gram to column index. Indices are contiguous from 0 and
/// assigned in lexicographic n-gram order, so a vocabulary is a pure function
/// of the training documents.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocabulary {
    pub n: usize,
    ngrams: Vec<Ngram>,
    #[serde(skip)]
    index: HashMap<Ngram, usize>,
}

impl Vocabulary {
    /// Build a vocabulary from training-document counts.
    pub fn fit(train: &[NgramCounts], n: usize) -> Self {
        let mut ngrams: Vec<Ngram> = train
            .iter()
            .flat_map(|d| d.counts.keys().cloned())
            .collect();
        ngrams.sort_unstable();
        ngrams.dedup();
        let index = ngrams
            .iter()
            .enumerate()
            .map(|(i, g)| (g.clone(), i))
            .collect();
        Self { n, ngrams, index }
    }

    /// Rebuild the lookup table after deserialization.
    pub fn rebuild_index(&mut self) {
        self.index = self
            .ngrams
            .iter()
            .enumerate()
            .map(|(i, g)| (g.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.ngrams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ngrams.is_empty()
    }

    pub fn index_of(&self, ngram: &[u32]) -> Option<usize> {
        self.index.get(ngram).copied()
    }

    pub fn ngrams(&self) -> &[Ngram] {
        &self.ngrams
    }
}

/// Smooth inverse document frequency: `idf(t) = ln((1+N)/(1+df(t))) + 1`.
pub fn fit_idf(train: &[NgramCounts], vocab: &Vocabulary) -> Result<Vec<f64>> {
    if train.is_empty() {
        return Err(Error::InvalidConfig(
            "idf requires at least one training document".into(),
        ));
    }
    let n_docs = train.len() as f64;
    let mut df = vec![0.0f64; vocab.len()];
    for doc in train {
        for (ngram, &c) in &doc.counts {
            if c > 0.0 {
                if let Some(i) = vocab.index_of(ngram) {
                    df[i] += 1.0;
                }
            }
        }
    }
    Ok(df
        .iter()
        .map(|&d| ((1.0 + n_docs) / (1.0 + d)).ln() + 1.0)
        .collect())
}

/// Sparse document vector over vocabulary columns, sorted by column index.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DocVector {
    pub doc_id: String,
    pub entries: Vec<(usize, f64)>,
}

impl DocVector {
    pub fn l2_norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|(_, v)| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.entries
            .iter()
            .map(|&(i, v)| v * dense.get(i).copied().unwrap_or(0.0))
            .sum()
    }
}

/// Map counts into vocabulary space, optionally scale by IDF, optionally
/// L2-normalize. All-zero vectors pass through normalization unchanged.
pub fn transform(
    doc_id: &str,
    counts: &NgramCounts,
    vocab: &Vocabulary,
    idf: Option<&[f64]>,
    l2: bool,
) -> DocVector {
    let mut entries: Vec<(usize, f64)> = counts
        .counts
        .iter()
        .filter_map(|(ngram, &c)| {
            vocab.index_of(ngram).map(|i| {
                let v = match idf {
                    Some(idf) => c * idf[i],
                    None => c,
                };
                (i, v)
            })
        })
        .collect();
    entries.sort_unstable_by_key(|&(i, _)| i);
    let mut vec = DocVector {
        doc_id: doc_id.to_string(),
        entries,
    };
    if l2 {
        let norm = vec.l2_norm();
        if norm > 0.0 {
            for (_, v) in &mut vec.entries {
                *v /= norm;
            }
        }
    }
    vec
}

/// Vocabulary plus optional IDF weights as one JSON document.
pub fn save_vocabulary(path: &std::path::Path, vocab: &Vocabulary, idf: Option<&[f64]>) -> Result<()> {
    let value = serde_json::json!({ "vocabulary": vocab, "idf": idf });
    let mut bytes = serde_json::to_vec_pretty(&value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_vocabulary(path: &std::path::Path) -> Result<(Vocabulary, Option<Vec<f64>>)> {
    let bytes = std::fs::read(path)?;
    let value: serde_json::Value = serde_json::from_slice(&bytes)?;
    let mut vocab: Vocabulary = serde_json::from_value(
        value
            .get("vocabulary")
            .cloned()
            .ok_or_else(|| Error::Format("missing vocabulary".into()))?,
    )?;
    vocab.rebuild_index();
    let idf: Option<Vec<f64>> = match value.get("idf") {
        Some(serde_json::Value::Null) | None => None,
        Some(v) => Some(serde_json::from_value(v.clone())?),
    };
    if let Some(idf) = &idf {
        if idf.len() != vocab.len() {
            return Err(Error::LengthMismatch {
                left: idf.len(),
                right: vocab.len(),
            });
        }
    }
    Ok((vocab, idf))
}

/// Document vectors as JSON lines of `(index, value)` pairs.
pub fn save_doc_vectors(path: &std::path::Path, vectors: &[DocVector]) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for v in vectors {
        serde_json::to_writer(&mut w, v)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_doc_vectors(path: &std::path::Path) -> Result<Vec<DocVector>> {
    use std::io::BufRead;
    let r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
