//! JSONL document-count files and small CSV writers shared by the stages.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use zrtopic_core::bow::NgramCounts;

/// One document's n-gram counts; keys are dash-joined token ids ("3-17-5").
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CountDoc {
    pub doc_id: String,
    pub counts: BTreeMap<String, f64>,
}

impl CountDoc {
    pub fn from_counts(doc_id: &str, counts: &NgramCounts) -> Self {
        let counts = counts
            .counts
            .iter()
            .map(|(ngram, &v)| {
                let key = ngram
                    .iter()
                    .map(|t| t.to_string())
                    .collect::<Vec<_>>()
                    .join("-");
                (key, v)
            })
            .collect();
        Self {
            doc_id: doc_id.to_string(),
            counts,
        }
    }

    pub fn to_counts(&self) -> Result<NgramCounts> {
        let mut out = NgramCounts::default();
        for (key, &v) in &self.counts {
            let ngram: std::result::Result<Vec<u32>, _> =
                key.split('-').map(str::parse::<u32>).collect();
            let ngram = ngram.with_context(|| format!("bad n-gram key {key}"))?;
            out.counts.insert(ngram, v);
        }
        Ok(out)
    }
}

pub fn save_count_docs(path: &Path, docs: &[CountDoc]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for doc in docs {
        serde_json::to_writer(&mut w, doc)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_count_docs(path: &Path) -> Result<Vec<CountDoc>> {
    let r = BufReader::new(
        File::open(path).with_context(|| format!("cannot open {}", path.display()))?,
    );
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

/// Write CSV rows with a header; values use the shortest round-trip float
/// formatting so identical runs produce identical bytes.
pub fn write_csv(path: &Path, header: &str, rows: &[Vec<String>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{header}")?;
    for row in rows {
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}
