//! Band-constrained segmental DTW. A seed diagonal segment fixes the
//! alignment endpoints; the warping path between them may deviate from the
//! diagonal by at most the band width. The path minimizing the mean frame
//! cosine distance defines the match similarity.

use super::sparse::{frame_cosine, SeedSegment};
use super::Match;
use crate::corpus::FeatureMatrix;
use crate::{Error, Result};

/// Align the sub-segments identified by `seed` and score the match.
///
/// Paths run from the seed start to the seed end with steps (1,0), (0,1),
/// (1,1), visiting only cells within `band_width` frames of the seed
/// diagonal. The similarity is `1 - min over paths of the mean cosine
/// distance of visited cells`, clamped to [0, 1].
pub fn segmental_dtw(
    a: &FeatureMatrix,
    b: &FeatureMatrix,
    seed: &SeedSegment,
    band_width: usize,
) -> Result<Match> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    if seed.len() < 2 {
        return Err(Error::DegenerateSeed(seed.len()));
    }
    let (i0, i1) = (seed.start_row, seed.end_row);
    let (j0, j1) = (seed.col_of(i0), seed.col_of(i1));
    if i1 >= a.num_frames() || j1 >= b.num_frames() {
        return Err(Error::ShapeMismatch(format!(
            "seed end ({i1},{j1}) outside {}x{}",
            a.num_frames(),
            b.num_frames()
        )));
    }

    let ni = i1 - i0 + 1;
    let nj = j1 - j0 + 1;
    let band = band_width as i64;

    // Local cosine distances for the seed rectangle; cells outside the band
    // hold infinity so every path stays inside it.
    let mut cost = vec![f64::INFINITY; ni * nj];
    for di in 0..ni {
        let ra = a.data.row(i0 + di);
        let ra = ra.to_slice().expect("row-major layout");
        for dj in 0..nj {
            if (di as i64 - dj as i64).abs() <= band {
                let rb = b.data.row(j0 + dj);
                let rb = rb.to_slice().expect("row-major layout");
                cost[di * nj + dj] = 1.0 - frame_cosine(ra, rb);
            }
        }
    }

    let best_mean = min_mean_path(&cost, ni, nj);
    let similarity = (1.0 - best_mean).clamp(0.0, 1.0);
    Ok(Match {
        utt_a: a.utterance_id.clone(),
        utt_b: b.utterance_id.clone(),
        span_a: (i0, i1),
        span_b: (j0, j1),
        dtw_similarity: similarity,
        rescored_similarity: None,
    })
}

/// Minimum over monotone corner-to-corner paths of (total cost / cell count),
/// computed layer by layer over the exact path length. Costs of infinity mark
/// forbidden cells.
fn min_mean_path(cost: &[f64], ni: usize, nj: usize) -> f64 {
    let n_cells = ni * nj;
    let max_len = ni + nj - 1;
    let mut prev = vec![f64::INFINITY; n_cells];
    let mut cur = vec![f64::INFINITY; n_cells];
    prev[0] = cost[0];
    let end = n_cells - 1;
    let mut best = if max_len == 1 && prev[end].is_finite() {
        prev[end]
    } else {
        f64::INFINITY
    };
    for len in 2..=max_len {
        for di in 0..ni {
            for dj in 0..nj {
                let idx = di * nj + dj;
                cur[idx] = f64::INFINITY;
                if !cost[idx].is_finite() {
                    continue;
                }
                let mut from = f64::INFINITY;
                if di > 0 {
                    from = from.min(prev[idx - nj]);
                }
                if dj > 0 {
                    from = from.min(prev[idx - 1]);
                }
                if di > 0 && dj > 0 {
                    from = from.min(prev[idx - nj - 1]);
                }
                if from.is_finite() {
                    cur[idx] = from + cost[idx];
                }
            }
        }
        if cur[end].is_finite() {
            let mean = cur[end] / len as f64;
            if mean < best {
                best = mean;
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}
