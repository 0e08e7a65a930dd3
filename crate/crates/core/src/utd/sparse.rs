//! Sparse thresholded cosine similarity matrices and the diagonal median
//! filter search for seed segments.

use crate::corpus::FeatureMatrix;
use crate::{Error, Result};

/// Entries `(row, col, similarity)` with cosine >= threshold, sorted by
/// (row, col).
#[derive(Debug, Clone, Default)]
pub struct SparseSim {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<(u32, u32, f64)>,
}

impl SparseSim {
    pub fn density(&self) -> f64 {
        self.entries.len() as f64 / (self.rows * self.cols).max(1) as f64
    }
}

/// A run of filter-surviving points on one diagonal. `diag = row - col`;
/// rows are inclusive and the column of row `i` is `i - diag`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedSegment {
    pub diag: i64,
    pub start_row: usize,
    pub end_row: usize,
}

impl SeedSegment {
    pub fn len(&self) -> usize {
        self.end_row - self.start_row + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn col_of(&self, row: usize) -> usize {
        (row as i64 - self.diag) as usize
    }
}

/// Cosine similarity of two frames; frames with zero norm compare as 0.
pub(crate) fn frame_cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na <= 0.0 || nb <= 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

/// All frame pairs of `a` x `b` whose cosine similarity is at least `delta`.
pub fn sparse_cosine_matrix(
    a: &FeatureMatrix,
    b: &FeatureMatrix,
    delta: f64,
) -> Result<SparseSim> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let a_rows: Vec<&[f64]> = a
        .data
        .rows()
        .into_iter()
        .map(|r| r.to_slice().expect("row-major layout"))
        .collect();
    let b_rows: Vec<&[f64]> = b
        .data
        .rows()
        .into_iter()
        .map(|r| r.to_slice().expect("row-major layout"))
        .collect();
    let mut entries = Vec::new();
    for (i, ra) in a_rows.iter().enumerate() {
        for (j, rb) in b_rows.iter().enumerate() {
            let sim = frame_cosine(ra, rb);
            if sim >= delta {
                entries.push((i as u32, j as u32, sim));
            }
        }
    }
    Ok(SparseSim {
        rows: a.num_frames(),
        cols: b.num_frames(),
        entries,
    })
}

/// Median filter length in frames: `round(duration / frame_period)`, forced
/// odd by adding one.
pub fn median_filter_len(duration: f64, frame_period: f64) -> usize {
    let mut len = (duration / frame_period).round() as usize;
    if len % 2 == 0 {
        len += 1;
    }
    len.max(1)
}

/// Apply a length-`filter_len` median filter to each diagonal's binary
/// occupancy and return the maximal surviving runs of at least `min_frames`
/// frames. Positions outside the matrix count as empty.
pub fn diagonal_search(
    sim: &SparseSim,
    filter_len: usize,
    min_frames: usize,
) -> Vec<SeedSegment> {
    debug_assert!(filter_len % 2 == 1);
    let half = filter_len / 2;
    let majority = filter_len / 2 + 1;

    // Group occupied rows by diagonal.
    let mut by_diag: std::collections::BTreeMap<i64, Vec<usize>> = std::collections::BTreeMap::new();
    for &(i, j, _) in &sim.entries {
        by_diag
            .entry(i as i64 - j as i64)
            .or_default()
            .push(i as usize);
    }

    let mut seeds = Vec::new();
    for (diag, mut rows) in by_diag {
        rows.sort_unstable();
        rows.dedup();
        // Diagonal extent in row coordinates.
        let lo = diag.max(0) as usize;
        let hi = ((sim.rows as i64 - 1).min(sim.cols as i64 - 1 + diag)) as usize;
        // Only positions within `half` of an occupied cell can survive.
        let scan_lo = rows[0].saturating_sub(half).max(lo);
        let scan_hi = (rows[rows.len() - 1] + half).min(hi);

        let mut run_start: Option<usize> = None;
        for p in scan_lo..=scan_hi {
            let win_lo = p.saturating_sub(half).max(lo);
            let win_hi = (p + half).min(hi);
            let ones = rows.partition_point(|&r| r <= win_hi) - rows.partition_point(|&r| r < win_lo);
            let survives = ones >= majority;
            match (survives, run_start) {
                (true, None) => run_start = Some(p),
                (false, Some(s)) => {
                    if p - s >= min_frames {
                        seeds.push(SeedSegment {
                            diag,
                            start_row: s,
                            end_row: p - 1,
                        });
                    }
                    run_start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = run_start {
            if scan_hi - s + 1 >= min_frames {
                seeds.push(SeedSegment {
                    diag,
                    start_row: s,
                    end_row: scan_hi,
                });
            }
        }
    }
    seeds
}
