//! Skip-gram training over unit sequences with hierarchical softmax.
//!
//! For a (center, context) pair the model walks the context token's Huffman
//! path with the center token's input vector; each internal node contributes
//! a binary logistic decision. Training is single-threaded so a seed pins the
//! result exactly.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::huffman::{build_huffman, HuffmanTree};
use crate::util::sigmoid;
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedConfig {
    /// Embedding dimensionality; tuned over {50, 80}.
    pub dim: usize,
    /// Maximum skip-gram window radius.
    pub window: usize,
    pub epochs: usize,
    /// Initial learning rate, decayed linearly towards `lr_min`.
    pub lr_initial: f64,
    pub lr_min: f64,
    pub rng_seed: u64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            dim: 50,
            window: 5,
            epochs: 20,
            lr_initial: 0.025,
            lr_min: 1e-4,
            rng_seed: 0,
        }
    }
}

/// Trained unit embeddings plus the internal-node parameters of the
/// hierarchical softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    /// Input vector per unit id.
    pub vectors: BTreeMap<u32, Vec<f64>>,
    /// Hierarchical-softmax internal node vectors.
    pub node_vectors: Vec<Vec<f64>>,
}

/// Log-loss of one (center, context) pair along the context's Huffman path.
pub fn pair_loss(
    center_vec: &[f64],
    nodes: &[Vec<f64>],
    path: &[usize],
    code: &[bool],
) -> f64 {
    let mut loss = 0.0;
    for (&node, &bit) in path.iter().zip(code) {
        let z: f64 = center_vec.iter().zip(&nodes[node]).map(|(a, b)| a * b).sum();
        let p = if bit { sigmoid(z) } else { 1.0 - sigmoid(z) };
        loss -= p.max(1e-300).ln();
    }
    loss
}

/// One SGD step on a pair; returns the pre-step loss. Node updates read the
/// pre-step center vector and the center update accumulates pre-step node
/// vectors, so this is an exact simultaneous gradient step.
fn pair_step(
    center_vec: &mut [f64],
    nodes: &mut [Vec<f64>],
    path: &[usize],
    code: &[bool],
    lr: f64,
) -> f64 {
    let dim = center_vec.len();
    let mut center_grad = vec![0.0; dim];
    let mut loss = 0.0;
    for (&node, &bit) in path.iter().zip(code) {
        let u = &mut nodes[node];
        let z: f64 = center_vec.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
        let s = sigmoid(z);
        let p = if bit { s } else { 1.0 - s };
        loss -= p.max(1e-300).ln();
        let err = s - if bit { 1.0 } else { 0.0 };
        for d in 0..dim {
            center_grad[d] += err * u[d];
            u[d] -= lr * err * center_vec[d];
        }
    }
    for d in 0..dim {
        center_vec[d] -= lr * center_grad[d];
    }
    loss
}

/// Train skip-gram embeddings on unit sequences. Returns the table and the
/// mean pair loss per epoch.
pub fn train_skipgram(
    sequences: &[Vec<u32>],
    config: &EmbedConfig,
) -> Result<(EmbeddingTable, Vec<f64>)> {
    if config.dim == 0 || config.window == 0 {
        return Err(Error::InvalidConfig("dim and window must be >= 1".into()));
    }
    if sequences.iter().all(|s| s.is_empty()) {
        return Err(Error::InvalidConfig("no tokens to train on".into()));
    }
    // Vocabulary in sorted unit-id order with frequencies.
    let mut freq_map: BTreeMap<u32, u64> = BTreeMap::new();
    for seq in sequences {
        for &u in seq {
            *freq_map.entry(u).or_insert(0) += 1;
        }
    }
    let unit_ids: Vec<u32> = freq_map.keys().cloned().collect();
    let index_of: BTreeMap<u32, usize> = unit_ids
        .iter()
        .enumerate()
        .map(|(i, &u)| (u, i))
        .collect();
    let freqs: Vec<u64> = unit_ids.iter().map(|u| freq_map[u]).collect();
    let tree: HuffmanTree = build_huffman(&freqs)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let dim = config.dim;
    let half_range = 0.5 / dim as f64;
    let mut input: Vec<Vec<f64>> = (0..unit_ids.len())
        .map(|_| {
            (0..dim)
                .map(|_| rng.random_range(-half_range..half_range))
                .collect()
        })
        .collect();
    let mut nodes: Vec<Vec<f64>> = vec![vec![0.0; dim]; tree.num_internal.max(1)];

    let total_centers: usize = sequences.iter().map(Vec::len).sum();
    let total_steps = (config.epochs * total_centers).max(1) as f64;
    let mut processed = 0usize;
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let mut loss_sum = 0.0;
        let mut pair_count = 0usize;
        for seq in sequences {
            for (i, &center) in seq.iter().enumerate() {
                let lr = (config.lr_initial * (1.0 - processed as f64 / total_steps))
                    .max(config.lr_min);
                processed += 1;
                let radius = rng.random_range(1..=config.window);
                let lo = i.saturating_sub(radius);
                let hi = (i + radius).min(seq.len() - 1);
                let center_idx = index_of[&center];
                for j in lo..=hi {
                    if j == i {
                        continue;
                    }
                    let context_idx = index_of[&seq[j]];
                    loss_sum += pair_step(
                        &mut input[center_idx],
                        &mut nodes,
                        &tree.paths[context_idx],
                        &tree.codes[context_idx],
                        lr,
                    );
                    pair_count += 1;
                }
            }
        }
        epoch_losses.push(if pair_count > 0 {
            loss_sum / pair_count as f64
        } else {
            0.0
        });
    }

    let vectors = unit_ids
        .iter()
        .enumerate()
        .map(|(i, &u)| (u, std::mem::take(&mut input[i])))
        .collect();
    Ok((
        EmbeddingTable {
            dim,
            vectors,
            node_vectors: nodes,
        },
        epoch_losses,
    ))
}

/// Assemble the initial CNN embedding matrix: row 0 is the all-zero PAD row,
/// row `i + 1` is the vector of `unit_order[i]`. Units missing from the table
/// are drawn from a seeded uniform(-0.05, 0.05).
pub fn export_for_cnn(
    table: &EmbeddingTable,
    unit_order: &[u32],
    missing_seed: u64,
) -> Array2<f64> {
    let dim = table.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(missing_seed);
    let mut out = Array2::zeros((unit_order.len() + 1, dim));
    for (i, unit) in unit_order.iter().enumerate() {
        match table.vectors.get(unit) {
            Some(v) => {
                for (d, &x) in v.iter().enumerate() {
                    out[(i + 1, d)] = x;
                }
            }
            None => {
                for d in 0..dim {
                    out[(i + 1, d)] = rng.random_range(-0.05..0.05);
                }
            }
        }
    }
    out
}

/// Text format: header `count dim`, then one `unit v1 .. v_dim` line per
/// unit.
pub fn save_embedding_table(path: &Path, table: &EmbeddingTable) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{} {}", table.vectors.len(), table.dim)?;
    for (unit, vec) in &table.vectors {
        write!(w, "{unit}")?;
        for v in vec {
            write!(w, " {v:?}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_embedding_table(path: &Path) -> Result<EmbeddingTable> {
    let r = BufReader::new(File::open(path)?);
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::MalformedHeader("empty embedding file".into()))??;
    let mut parts = header.split_whitespace();
    let count: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::MalformedHeader("bad embedding count".into()))?;
    let dim: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::MalformedHeader("bad embedding dim".into()))?;
    let mut vectors = BTreeMap::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let unit: u32 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("bad embedding line: {line}")))?;
        let vec: std::result::Result<Vec<f64>, _> = parts.map(|s| s.parse::<f64>()).collect();
        let vec = vec.map_err(|e| Error::Format(format!("bad embedding value: {e}")))?;
        if vec.len() != dim {
            return Err(Error::ShapeMismatch(format!(
                "embedding of unit {unit} has {} values, expected {dim}",
                vec.len()
            )));
        }
        vectors.insert(unit, vec);
    }
    if vectors.len() != count {
        return Err(Error::ShapeMismatch(format!(
            "embedding file declares {count} units but has {}",
            vectors.len()
        )));
    }
    Ok(EmbeddingTable {
        dim,
        vectors,
        node_vectors: Vec::new(),
    })
}
