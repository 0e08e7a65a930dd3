//! Corpus-level term discovery: sparse similarity, diagonal search and
//! segmental DTW over every utterance pair, in parallel with a fixed
//! reduction order.

use rayon::prelude::*;

use super::rescore::{rescore, RescoreModel};
use super::sparse::{diagonal_search, median_filter_len, sparse_cosine_matrix};
use super::{segmental_dtw, Match, UtdConfig};
use crate::corpus::Corpus;
use crate::Result;

/// Run steps 1-2 of term discovery (plus optional rescoring) over all
/// unordered utterance pairs. Pairs are enumerated in sorted-id order and the
/// per-pair results concatenated in that order, so the output is identical
/// for any worker count.
pub fn discover_matches(
    corpus: &Corpus,
    config: &UtdConfig,
    rescorer: Option<&RescoreModel>,
) -> Result<Vec<Match>> {
    config.validate()?;
    let ids = corpus.utterance_ids();
    let mut pairs = Vec::new();
    for (i, a) in ids.iter().enumerate() {
        for b in &ids[i + 1..] {
            pairs.push((*a, *b));
        }
    }

    let per_pair: Result<Vec<Vec<Match>>> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let fa = &corpus.utterances[a];
            let fb = &corpus.utterances[b];
            let frame_period = fa.frame_period;
            let filter_len = median_filter_len(config.median_filter_duration, frame_period);
            let min_frames =
                ((config.min_match_duration / frame_period).round() as usize).max(2);
            let sim = sparse_cosine_matrix(fa, fb, config.cosine_threshold)?;
            let seeds = diagonal_search(&sim, filter_len, min_frames);
            let mut matches = Vec::with_capacity(seeds.len());
            for seed in seeds {
                let mut m = segmental_dtw(fa, fb, &seed, config.dtw_band_width)?;
                if let Some(model) = rescorer {
                    m.rescored_similarity = Some(rescore(&m, &sim, model));
                }
                matches.push(m);
            }
            Ok(matches)
        })
        .collect();
    Ok(per_pair?.into_iter().flatten().collect())
}
