//! Feature file and corpus manifest I/O.
//!
//! Feature file layout (binary, little-endian):
//! magic `ZRF1`, u32 num_frames, u32 dim, u32 id_length, UTF-8 utterance id,
//! then `num_frames * dim` IEEE-754 f64 values, row-major.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Corpus, FeatureMatrix, Labels, SpokenDocument, DEFAULT_FRAME_PERIOD};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"ZRF1";

pub fn write_feature_file(path: &Path, m: &FeatureMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(m.num_frames() as u32)?;
    w.write_u32::<LittleEndian>(m.dim() as u32)?;
    let id = m.utterance_id.as_bytes();
    w.write_u32::<LittleEndian>(id.len() as u32)?;
    w.write_all(id)?;
    for v in m.data.iter() {
        w.write_f64::<LittleEndian>(*v)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_feature_file(path: &Path) -> Result<FeatureMatrix> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::MalformedHeader("file shorter than magic".into()))?;
    if &magic != MAGIC {
        return Err(Error::MalformedHeader(format!(
            "bad magic {:?}, expected ZRF1",
            magic
        )));
    }
    let num_frames = r.read_u32::<LittleEndian>()? as usize;
    let dim = r.read_u32::<LittleEndian>()? as usize;
    let id_len = r.read_u32::<LittleEndian>()? as usize;
    if num_frames == 0 || dim == 0 {
        return Err(Error::MalformedHeader(format!(
            "degenerate shape {num_frames}x{dim}"
        )));
    }
    let mut id_bytes = vec![0u8; id_len];
    r.read_exact(&mut id_bytes)
        .map_err(|_| Error::MalformedHeader("truncated utterance id".into()))?;
    let utterance_id = String::from_utf8(id_bytes)
        .map_err(|e| Error::MalformedHeader(format!("utterance id not UTF-8: {e}")))?;

    let mut values = Vec::with_capacity(num_frames * dim);
    for _ in 0..num_frames * dim {
        match r.read_f64::<LittleEndian>() {
            Ok(v) => values.push(v),
            Err(_) => {
                return Err(Error::ShapeMismatch(format!(
                    "declared {num_frames}x{dim} but payload has {} values",
                    values.len()
                )))
            }
        }
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::ShapeMismatch(format!(
            "trailing bytes after {num_frames}x{dim} payload"
        )));
    }
    let data = Array2::from_shape_vec((num_frames, dim), values)
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    FeatureMatrix::new(utterance_id, data)
}

/// One document entry in a corpus manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestDoc {
    pub doc_id: String,
    /// Feature file paths, relative to the manifest location.
    pub utterances: Vec<String>,
    pub labels: Labels,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    frame_period: f64,
    documents: Vec<ManifestDoc>,
}

/// Write a corpus manifest plus one feature file per utterance into `dir`.
pub fn save_manifest(dir: &Path, corpus: &Corpus) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut documents = Vec::with_capacity(corpus.documents.len());
    for doc in &corpus.documents {
        let mut utterances = Vec::with_capacity(doc.utterance_ids.len());
        for utt_id in &doc.utterance_ids {
            let m = corpus
                .utterances
                .get(utt_id)
                .ok_or_else(|| Error::MissingUtterance {
                    doc: doc.doc_id.clone(),
                    utterance: utt_id.clone(),
                })?;
            let rel = format!("{utt_id}.zrf");
            write_feature_file(&dir.join(&rel), m)?;
            utterances.push(rel);
        }
        documents.push(ManifestDoc {
            doc_id: doc.doc_id.clone(),
            utterances,
            labels: doc.labels.clone(),
        });
    }
    let frame_period = corpus
        .utterances
        .values()
        .next()
        .map_or(DEFAULT_FRAME_PERIOD, |m| m.frame_period);
    let manifest = Manifest {
        frame_period,
        documents,
    };
    let mut w = BufWriter::new(File::create(dir.join("corpus.json"))?);
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Load a corpus from a manifest file written by [`save_manifest`] (or by hand).
pub fn load_manifest(manifest_path: &Path) -> Result<Corpus> {
    let manifest: Manifest = serde_json::from_reader(BufReader::new(File::open(manifest_path)?))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut corpus = Corpus::default();
    for doc in &manifest.documents {
        let mut utterance_ids = Vec::with_capacity(doc.utterances.len());
        for rel in &doc.utterances {
            let mut m = load_feature_file(&base.join(rel))?;
            m.frame_period = manifest.frame_period;
            utterance_ids.push(m.utterance_id.clone());
            corpus.utterances.insert(m.utterance_id.clone(), m);
        }
        corpus.documents.push(SpokenDocument {
            doc_id: doc.doc_id.clone(),
            utterance_ids,
            labels: doc.labels.clone(),
        });
    }
    corpus.validate()?;
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn header_declared_shape_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.zrf");
        let m = FeatureMatrix::new("utt-0", array![[0.0, 1.0, 2.0], [3.0, 4.0, 5.0]]).unwrap();
        write_feature_file(&path, &m).unwrap();
        let back = load_feature_file(&path).unwrap();
        assert_eq!(back.utterance_id, "utt-0");
        assert_eq!(back.data, array![[0.0, 1.0, 2.0], [3.0, 4.0, 5.0]]);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.zrf");
        let m = FeatureMatrix::new("u", array![[0.0], [1.0], [2.0]]).unwrap();
        write_feature_file(&path, &m).unwrap();
        // Declare 4 frames while only 3 are present.
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4..8].copy_from_slice(&4u32.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            load_feature_file(&path),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn bad_magic_is_a_header_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.zrf");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(
            load_feature_file(&path),
            Err(Error::MalformedHeader(_))
        ));
    }

    #[test]
    fn non_finite_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.zrf");
        let m = FeatureMatrix::new("u", array![[1.0, 2.0]]).unwrap();
        write_feature_file(&path, &m).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let off = bytes.len() - 8;
        bytes[off..].copy_from_slice(&f64::INFINITY.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            load_feature_file(&path),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn round_trip_is_bit_exact_for_arbitrary_values() {
        use proptest::prelude::*;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.zrf");
        let mut runner = proptest::test_runner::TestRunner::default();
        runner
            .run(
                &(1usize..5, 1usize..4, proptest::collection::vec(-1e300f64..1e300, 0..20)),
                |(rows, cols, pool)| {
                    let mut values = vec![-0.0f64; rows * cols];
                    for (i, v) in pool.iter().enumerate() {
                        if i < values.len() {
                            values[i] = *v;
                        }
                    }
                    let m = FeatureMatrix::new(
                        "u",
                        Array2::from_shape_vec((rows, cols), values).unwrap(),
                    )
                    .unwrap();
                    write_feature_file(&path, &m).unwrap();
                    let back = load_feature_file(&path).unwrap();
                    for (a, b) in m.data.iter().zip(back.data.iter()) {
                        prop_assert_eq!(a.to_bits(), b.to_bits());
                    }
                    Ok(())
                },
            )
            .unwrap();
    }

    #[test]
    fn manifest_round_trip_preserves_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let mut corpus = Corpus::default();
        for (i, vals) in [array![[1.0, 0.0]], array![[0.5, 0.25], [0.125, 8.0]]]
            .into_iter()
            .enumerate()
        {
            let id = format!("utt{i}");
            corpus
                .utterances
                .insert(id.clone(), FeatureMatrix::new(id, vals).unwrap());
        }
        corpus.documents.push(SpokenDocument {
            doc_id: "d0".into(),
            utterance_ids: vec!["utt0".into(), "utt1".into()],
            labels: Labels::Multi(vec![2, 5]),
        });
        save_manifest(dir.path(), &corpus).unwrap();
        let back = load_manifest(&dir.path().join("corpus.json")).unwrap();
        assert_eq!(back.documents.len(), 1);
        assert_eq!(back.documents[0].labels, Labels::Multi(vec![2, 5]));
        assert_eq!(back.utterances["utt1"].data, corpus.utterances["utt1"].data);
    }
}
