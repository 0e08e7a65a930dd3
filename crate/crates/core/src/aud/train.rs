//! Variational Bayes training of the phone loop and corpus tokenization.
//!
//! One iteration is one synchronous sweep: a full-corpus E-step accumulating
//! expected sufficient statistics under the current posteriors, followed by
//! one conjugate M-step updating every posterior at once. The evidence lower
//! bound reported for iteration `t` is the variational free energy after the
//! E-step of iteration `t` (and before its M-step), which coordinate ascent
//! makes non-decreasing across iterations.

use rayon::prelude::*;
use statrs::function::gamma::{digamma, ln_gamma};

use super::inference::{forward_backward, viterbi_decode, SuffStats};
use super::model::PhoneLoopModel;
use super::UnitSequence;
use crate::corpus::Corpus;
use crate::Result;

/// Train for `iterations` sweeps and return the updated model plus the
/// per-iteration ELBO trace. Zero iterations return the model unchanged.
pub fn vb_train(
    mut model: PhoneLoopModel,
    corpus: &Corpus,
    iterations: usize,
) -> Result<(PhoneLoopModel, Vec<f64>)> {
    let ids = corpus.utterance_ids();
    let mut trace = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let hmm = model.unified_elog();
        // Parallel E-step; per-utterance statistics are reduced in sorted
        // utterance order so the result is identical for any worker count.
        let per_utt: Result<Vec<SuffStats>> = ids
            .par_iter()
            .map(|id| Ok(forward_backward(&hmm, &corpus.utterances[*id].data)?.stats))
            .collect();
        let mut stats = SuffStats::zeros(&hmm);
        for s in per_utt? {
            stats.merge(&s);
        }
        trace.push(stats.log_evidence - kl_to_prior(&model));
        m_step(&mut model, &stats);
    }
    Ok((model, trace))
}

/// Synchronous conjugate M-step from accumulated statistics.
fn m_step(model: &mut PhoneLoopModel, stats: &SuffStats) {
    let prior = &model.prior;
    let t = model.config.truncation;
    let dim = model.dim;

    for i in 0..model.trans_stay.len() {
        model.trans_stay[i] = prior.dirichlet + stats.n_stay[i];
        model.trans_adv[i] = prior.dirichlet + stats.n_adv[i];
    }
    for (alpha, r) in model.weight_alpha.iter_mut().zip(&stats.r_sum) {
        *alpha = prior.dirichlet + r;
    }
    // Sticks: the final stick stays at its prior (truncation closure).
    let mut tail: f64 = 0.0;
    let mut tails = vec![0.0; t];
    for u in (0..t).rev() {
        tails[u] = tail;
        tail += stats.n_enter[u];
    }
    for u in 0..t.saturating_sub(1) {
        model.stick_a[u] = prior.stick_a + stats.n_enter[u];
        model.stick_b[u] = prior.stick_b + tails[u];
    }

    for c in 0..model.ng_kappa.len() {
        let n = stats.r_sum[c];
        let kappa = prior.kappa + n;
        let shape = prior.shape + 0.5 * n;
        model.ng_kappa[c] = kappa;
        model.ng_shape[c] = shape;
        for d in 0..dim {
            let rx = stats.rx_sum[c * dim + d];
            let rxx = stats.rxx_sum[c * dim + d];
            let m0 = prior.mean[d];
            if n > 0.0 {
                let mean_x = rx / n;
                let s_d = (rxx - rx * mean_x).max(0.0);
                let loc = (prior.kappa * m0 + rx) / kappa;
                let rate = prior.rate[d]
                    + 0.5 * (s_d + prior.kappa * n * (mean_x - m0) * (mean_x - m0) / kappa);
                model.ng_loc[c * dim + d] = loc;
                model.ng_rate[c * dim + d] = rate.max(shape * prior.var_floor[d]);
            } else {
                model.ng_loc[c * dim + d] = m0;
                model.ng_rate[c * dim + d] = prior.rate[d];
            }
        }
    }
}

fn kl_dirichlet(alpha: &[f64], alpha0: &[f64]) -> f64 {
    let sum: f64 = alpha.iter().sum();
    let sum0: f64 = alpha0.iter().sum();
    let mut kl = ln_gamma(sum) - ln_gamma(sum0);
    for (&a, &a0) in alpha.iter().zip(alpha0) {
        kl += ln_gamma(a0) - ln_gamma(a) + (a - a0) * (digamma(a) - digamma(sum));
    }
    kl
}

fn kl_gamma(a: f64, b: f64, a0: f64, b0: f64) -> f64 {
    (a - a0) * digamma(a) - ln_gamma(a) + ln_gamma(a0) + a0 * (b.ln() - b0.ln())
        + a * (b0 - b) / b
}

/// KL divergence of all posteriors from their priors; the parameter-space
/// part of the negative free energy.
fn kl_to_prior(model: &PhoneLoopModel) -> f64 {
    let prior = &model.prior;
    let dim = model.dim;
    let mut kl = 0.0;
    for (&a, &b) in model.stick_a.iter().zip(&model.stick_b) {
        kl += kl_dirichlet(&[a, b], &[prior.stick_a, prior.stick_b]);
    }
    for (&stay, &adv) in model.trans_stay.iter().zip(&model.trans_adv) {
        kl += kl_dirichlet(&[stay, adv], &[prior.dirichlet, prior.dirichlet]);
    }
    let m = model.config.gaussians_per_state;
    let alpha0 = vec![prior.dirichlet; m];
    for chunk in model.weight_alpha.chunks(m) {
        kl += kl_dirichlet(chunk, &alpha0);
    }
    for c in 0..model.ng_kappa.len() {
        let kappa = model.ng_kappa[c];
        let shape = model.ng_shape[c];
        for d in 0..dim {
            let loc = model.ng_loc[c * dim + d];
            let rate = model.ng_rate[c * dim + d];
            let diff = loc - prior.mean[d];
            kl += 0.5
                * ((kappa / prior.kappa).ln() - 1.0
                    + prior.kappa / kappa
                    + prior.kappa * (shape / rate) * diff * diff);
            kl += kl_gamma(shape, rate, prior.shape, prior.rate[d]);
        }
    }
    kl
}

/// Viterbi-decode every utterance of a corpus in sorted-id order. Decoding
/// does not require the corpus to have been seen in training.
pub fn tokenize_corpus_aud(model: &PhoneLoopModel, corpus: &Corpus) -> Result<Vec<UnitSequence>> {
    let hmm = model.unified_expected();
    let ids = corpus.utterance_ids();
    ids.par_iter()
        .map(|id| viterbi_decode(&hmm, &corpus.utterances[*id]))
        .collect()
}

/// Distinct unit ids appearing in a set of tokenizations.
pub fn distinct_units(sequences: &[UnitSequence]) -> usize {
    let mut seen = std::collections::BTreeSet::new();
    for seq in sequences {
        for &(u, _, _) in &seq.units {
            seen.insert(u);
        }
    }
    seen.len()
}
