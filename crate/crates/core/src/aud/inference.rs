//! Forward-backward and Viterbi over the unified phone-loop HMM.
//!
//! The loop structure keeps both algorithms linear in the state count per
//! frame: within-unit transitions touch at most two states and the loop-back
//! from exit states to entry states factorizes through a pooled exit mass.

use ndarray::Array2;

use super::UnitSequence;
use crate::corpus::FeatureMatrix;
use crate::{Error, Result};

/// The phone loop flattened into a single HMM. `entry`, `stay` and `adv` are
/// probabilities (or variational subprobabilities); emissions are diagonal
/// GMMs stored per component as `coef - 0.5 sum_d lam_d (x_d - loc_d)^2` plus
/// a log weight.
#[derive(Debug, Clone)]
pub struct UnifiedHmm {
    pub num_units: usize,
    pub states_per_unit: usize,
    pub comps_per_state: usize,
    pub dim: usize,
    /// Per-unit probability of entering the unit's first state.
    pub entry: Vec<f64>,
    /// Per-state self-loop probability.
    pub stay: Vec<f64>,
    /// Per-state advance probability; for a unit's last state this is the
    /// exit probability feeding the loop-back.
    pub adv: Vec<f64>,
    pub comp_log_weight: Vec<f64>,
    pub comp_coef: Vec<f64>,
    pub comp_lam: Vec<f64>,
    pub comp_loc: Vec<f64>,
}

impl UnifiedHmm {
    pub fn num_states(&self) -> usize {
        self.num_units * self.states_per_unit
    }

    pub fn num_comps(&self) -> usize {
        self.num_states() * self.comps_per_state
    }

    /// Log densities (including mixture log weight) of every component at
    /// every frame: `frames x num_comps`.
    pub fn component_log_densities(&self, frames: &Array2<f64>) -> Array2<f64> {
        let n_frames = frames.nrows();
        let n_comps = self.num_comps();
        let dim = self.dim;
        let mut out = Array2::zeros((n_frames, n_comps));
        for (t, x) in frames.rows().into_iter().enumerate() {
            let x = x.to_slice().expect("row-major layout");
            for c in 0..n_comps {
                let lam = &self.comp_lam[c * dim..(c + 1) * dim];
                let loc = &self.comp_loc[c * dim..(c + 1) * dim];
                let mut quad = 0.0;
                for d in 0..dim {
                    let diff = x[d] - loc[d];
                    quad += lam[d] * diff * diff;
                }
                out[(t, c)] = self.comp_log_weight[c] + self.comp_coef[c] - 0.5 * quad;
            }
        }
        out
    }

    /// Per-state log emissions: log-sum-exp of the component densities.
    pub fn state_log_emissions(&self, comp_ld: &Array2<f64>) -> Array2<f64> {
        let n_frames = comp_ld.nrows();
        let n_states = self.num_states();
        let m = self.comps_per_state;
        let mut out = Array2::zeros((n_frames, n_states));
        for t in 0..n_frames {
            for s in 0..n_states {
                let comps = &comp_ld.row(t).to_slice().expect("row-major")[s * m..(s + 1) * m];
                let max = comps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = comps.iter().map(|&v| (v - max).exp()).sum();
                out[(t, s)] = max + sum.ln();
            }
        }
        out
    }

    /// Initial state distribution over the flattened states.
    pub fn dense_initial(&self) -> Vec<f64> {
        let s = self.states_per_unit;
        let mut init = vec![0.0; self.num_states()];
        for u in 0..self.num_units {
            init[u * s] = self.entry[u];
        }
        init
    }

    /// Materialize the full transition matrix. Parallel routes between the
    /// same state pair (the self-loop and the exit-and-re-enter route of a
    /// one-state unit) pool by summation.
    pub fn dense_transitions(&self) -> Array2<f64> {
        let n = self.num_states();
        let s = self.states_per_unit;
        let mut a = Array2::zeros((n, n));
        for u in 0..self.num_units {
            for st in 0..s {
                let idx = u * s + st;
                a[(idx, idx)] += self.stay[idx];
                if st + 1 < s {
                    a[(idx, idx + 1)] += self.adv[idx];
                } else {
                    for v in 0..self.num_units {
                        a[(idx, v * s)] += self.adv[idx] * self.entry[v];
                    }
                }
            }
        }
        a
    }

    /// Most probable state path and its log probability, in log domain.
    pub fn viterbi(&self, log_emissions: &Array2<f64>) -> (Vec<usize>, f64) {
        let n_frames = log_emissions.nrows();
        let n_states = self.num_states();
        let s = self.states_per_unit;
        let single_state = s == 1;

        let ln = |v: f64| v.ln();
        let ln_entry: Vec<f64> = self.entry.iter().cloned().map(ln).collect();
        let ln_stay: Vec<f64> = self.stay.iter().cloned().map(ln).collect();
        let ln_adv: Vec<f64> = self.adv.iter().cloned().map(ln).collect();
        // Pooled self-edge of one-state units: stay + exit-and-re-enter.
        let ln_self: Vec<f64> = (0..n_states)
            .map(|idx| {
                if single_state {
                    (self.stay[idx] + self.adv[idx] * self.entry[idx / s]).ln()
                } else {
                    ln_stay[idx]
                }
            })
            .collect();

        let mut score = vec![f64::NEG_INFINITY; n_states];
        let mut back: Vec<Vec<u32>> = vec![vec![0; n_states]; n_frames];
        for u in 0..self.num_units {
            score[u * s] = ln_entry[u] + log_emissions[(0, u * s)];
        }
        let mut next = vec![f64::NEG_INFINITY; n_states];
        for t in 1..n_frames {
            // Exit scores and their two best units.
            let mut best1 = f64::NEG_INFINITY;
            let mut best1_u = usize::MAX;
            let mut best2 = f64::NEG_INFINITY;
            let mut best2_u = usize::MAX;
            for u in 0..self.num_units {
                let exit_idx = u * s + s - 1;
                let e = score[exit_idx] + ln_adv[exit_idx];
                if e > best1 {
                    best2 = best1;
                    best2_u = best1_u;
                    best1 = e;
                    best1_u = u;
                } else if e > best2 {
                    best2 = e;
                    best2_u = u;
                }
            }
            for u in 0..self.num_units {
                for st in 0..s {
                    let idx = u * s + st;
                    let (mut best, mut arg);
                    if st == 0 {
                        best = score[idx] + ln_self[idx];
                        arg = idx;
                        // Best entering exit; for one-state units the own
                        // unit's route is already pooled into the self edge.
                        let (incoming, incoming_u) = if single_state && best1_u == u {
                            (best2, best2_u)
                        } else {
                            (best1, best1_u)
                        };
                        let cand = incoming + ln_entry[u];
                        if cand > best && incoming_u != usize::MAX {
                            best = cand;
                            arg = incoming_u * s + s - 1;
                        }
                    } else {
                        best = score[idx] + ln_stay[idx];
                        arg = idx;
                        let cand = score[idx - 1] + ln_adv[idx - 1];
                        if cand > best {
                            best = cand;
                            arg = idx - 1;
                        }
                    }
                    next[idx] = best + log_emissions[(t, idx)];
                    back[t][idx] = arg as u32;
                }
            }
            std::mem::swap(&mut score, &mut next);
        }

        let (mut state, mut best) = (0usize, f64::NEG_INFINITY);
        for (idx, &v) in score.iter().enumerate() {
            if v > best {
                best = v;
                state = idx;
            }
        }
        let mut path = vec![0usize; n_frames];
        path[n_frames - 1] = state;
        for t in (1..n_frames).rev() {
            state = back[t][state] as usize;
            path[t - 1] = state;
        }
        (path, best)
    }
}

/// Expected sufficient statistics of one or more utterances under the
/// variational posteriors.
#[derive(Debug, Clone, PartialEq)]
pub struct SuffStats {
    /// Expected self-loop counts per state.
    pub n_stay: Vec<f64>,
    /// Expected advance/exit counts per state.
    pub n_adv: Vec<f64>,
    /// Expected unit entry counts (tokens started per unit).
    pub n_enter: Vec<f64>,
    /// Expected per-component responsibility mass.
    pub r_sum: Vec<f64>,
    /// Responsibility-weighted sums of x per component and dimension.
    pub rx_sum: Vec<f64>,
    /// Responsibility-weighted sums of x^2.
    pub rxx_sum: Vec<f64>,
    pub log_evidence: f64,
    pub frames: usize,
}

impl SuffStats {
    pub fn zeros(hmm: &UnifiedHmm) -> Self {
        let n_states = hmm.num_states();
        let n_comps = hmm.num_comps();
        Self {
            n_stay: vec![0.0; n_states],
            n_adv: vec![0.0; n_states],
            n_enter: vec![0.0; hmm.num_units],
            r_sum: vec![0.0; n_comps],
            rx_sum: vec![0.0; n_comps * hmm.dim],
            rxx_sum: vec![0.0; n_comps * hmm.dim],
            log_evidence: 0.0,
            frames: 0,
        }
    }

    pub fn merge(&mut self, other: &SuffStats) {
        let add = |a: &mut Vec<f64>, b: &Vec<f64>| {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        };
        add(&mut self.n_stay, &other.n_stay);
        add(&mut self.n_adv, &other.n_adv);
        add(&mut self.n_enter, &other.n_enter);
        add(&mut self.r_sum, &other.r_sum);
        add(&mut self.rx_sum, &other.rx_sum);
        add(&mut self.rxx_sum, &other.rxx_sum);
        self.log_evidence += other.log_evidence;
        self.frames += other.frames;
    }
}

/// Forward-backward output for one utterance.
#[derive(Debug, Clone)]
pub struct FbResult {
    pub log_evidence: f64,
    /// Per-frame state posteriors, `frames x num_states`; every row sums to 1.
    pub gamma: Array2<f64>,
    pub stats: SuffStats,
}

/// Scaled-domain forward-backward over the unified HMM, accumulating
/// transition, entry and Gaussian sufficient statistics.
pub fn forward_backward(hmm: &UnifiedHmm, frames: &Array2<f64>) -> Result<FbResult> {
    if frames.ncols() != hmm.dim {
        return Err(Error::DimensionMismatch {
            expected: hmm.dim,
            got: frames.ncols(),
        });
    }
    let n_frames = frames.nrows();
    let n_states = hmm.num_states();
    let s = hmm.states_per_unit;
    let comp_ld = hmm.component_log_densities(frames);
    let log_b = hmm.state_log_emissions(&comp_ld);

    // Shift emissions per frame so the scaled filter stays in range.
    let mut b = Array2::zeros((n_frames, n_states));
    let mut shift_sum = 0.0;
    for t in 0..n_frames {
        let row = log_b.row(t);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::NonFiniteLikelihood(format!(
                "all emissions vanish at frame {t}"
            )));
        }
        shift_sum += max;
        for (dst, &v) in b.row_mut(t).iter_mut().zip(row.iter()) {
            *dst = (v - max).exp();
        }
    }

    // Forward pass.
    let mut alpha = Array2::zeros((n_frames, n_states));
    let mut c_norm = vec![0.0f64; n_frames];
    {
        let mut c = 0.0;
        for u in 0..hmm.num_units {
            let idx = u * s;
            let v = hmm.entry[u] * b[(0, idx)];
            alpha[(0, idx)] = v;
            c += v;
        }
        if c <= 0.0 || !c.is_finite() {
            return Err(Error::NonFiniteLikelihood(
                "zero forward mass at frame 0".into(),
            ));
        }
        for v in alpha.row_mut(0).iter_mut() {
            *v /= c;
        }
        c_norm[0] = c;
    }
    for t in 1..n_frames {
        let mut exit_pool = 0.0;
        for u in 0..hmm.num_units {
            let exit_idx = u * s + s - 1;
            exit_pool += alpha[(t - 1, exit_idx)] * hmm.adv[exit_idx];
        }
        let mut c = 0.0;
        for u in 0..hmm.num_units {
            for st in 0..s {
                let idx = u * s + st;
                let mut v = alpha[(t - 1, idx)] * hmm.stay[idx];
                if st == 0 {
                    v += exit_pool * hmm.entry[u];
                } else {
                    v += alpha[(t - 1, idx - 1)] * hmm.adv[idx - 1];
                }
                let v = v * b[(t, idx)];
                alpha[(t, idx)] = v;
                c += v;
            }
        }
        if c <= 0.0 || !c.is_finite() {
            return Err(Error::NonFiniteLikelihood(format!(
                "zero forward mass at frame {t}"
            )));
        }
        for v in alpha.row_mut(t).iter_mut() {
            *v /= c;
        }
        c_norm[t] = c;
    }
    let log_evidence = shift_sum + c_norm.iter().map(|c| c.ln()).sum::<f64>();

    // Backward pass with statistics accumulation.
    let mut stats = SuffStats::zeros(hmm);
    stats.log_evidence = log_evidence;
    stats.frames = n_frames;
    let mut gamma = Array2::zeros((n_frames, n_states));
    let mut beta = vec![1.0f64; n_states];
    let mut beta_next = vec![0.0f64; n_states];
    let mut bb = vec![0.0f64; n_states];

    for t in (0..n_frames).rev() {
        // Posteriors at t.
        for idx in 0..n_states {
            gamma[(t, idx)] = alpha[(t, idx)] * beta[idx];
        }
        if t == 0 {
            break;
        }
        // bb = b_t .* beta_t, the future mass arriving through frame t.
        for idx in 0..n_states {
            bb[idx] = b[(t, idx)] * beta[idx];
        }
        let inv_c = 1.0 / c_norm[t];
        let mut enter_pool = 0.0;
        for u in 0..hmm.num_units {
            enter_pool += hmm.entry[u] * bb[u * s];
        }
        let mut total_exit_mass = 0.0;
        for u in 0..hmm.num_units {
            for st in 0..s {
                let idx = u * s + st;
                let a_prev = alpha[(t - 1, idx)];
                // Self-loop route.
                let stay_flow = hmm.stay[idx] * bb[idx];
                stats.n_stay[idx] += a_prev * stay_flow * inv_c;
                // Advance or exit route.
                let adv_flow = if st + 1 < s {
                    let f = hmm.adv[idx] * bb[idx + 1];
                    stats.n_adv[idx] += a_prev * f * inv_c;
                    f
                } else {
                    let f = hmm.adv[idx] * enter_pool;
                    stats.n_adv[idx] += a_prev * f * inv_c;
                    total_exit_mass += a_prev * hmm.adv[idx];
                    f
                };
                beta_next[idx] = (stay_flow + adv_flow) * inv_c;
            }
        }
        // Entry statistics, pooled over the exiting units.
        for u in 0..hmm.num_units {
            stats.n_enter[u] += total_exit_mass * hmm.entry[u] * bb[u * s] * inv_c;
        }
        std::mem::swap(&mut beta, &mut beta_next);
    }
    // Initial entries: at t = 0 all mass sits in entry states.
    for u in 0..hmm.num_units {
        stats.n_enter[u] += gamma[(0, u * s)];
    }

    // Gaussian statistics from component responsibilities.
    let m = hmm.comps_per_state;
    let dim = hmm.dim;
    for t in 0..n_frames {
        let x = frames.row(t);
        let x = x.to_slice().expect("row-major layout");
        for idx in 0..n_states {
            let g = gamma[(t, idx)];
            if g == 0.0 {
                continue;
            }
            if m == 1 {
                let c = idx;
                stats.r_sum[c] += g;
                for d in 0..dim {
                    stats.rx_sum[c * dim + d] += g * x[d];
                    stats.rxx_sum[c * dim + d] += g * x[d] * x[d];
                }
            } else {
                // Responsibilities within the state's mixture.
                let comps = &comp_ld.row(t).to_slice().expect("row-major")
                    [idx * m..(idx + 1) * m];
                let max = comps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let denom: f64 = comps.iter().map(|&v| (v - max).exp()).sum();
                for (k, &v) in comps.iter().enumerate() {
                    let r = g * (v - max).exp() / denom;
                    if r == 0.0 {
                        continue;
                    }
                    let c = idx * m + k;
                    stats.r_sum[c] += r;
                    for d in 0..dim {
                        stats.rx_sum[c * dim + d] += r * x[d];
                        stats.rxx_sum[c * dim + d] += r * x[d] * x[d];
                    }
                }
            }
        }
    }

    Ok(FbResult {
        log_evidence,
        gamma,
        stats,
    })
}

/// Decode an utterance into unit segments with Viterbi under expected
/// parameters. Consecutive frames of one unit form a segment; a unit
/// re-entered through the loop (detected by a state-index drop) starts a new
/// segment. One-state units cannot distinguish a self-loop from an immediate
/// re-entry, so such frames continue the current segment.
pub fn viterbi_decode(hmm: &UnifiedHmm, utterance: &FeatureMatrix) -> Result<UnitSequence> {
    if utterance.dim() != hmm.dim {
        return Err(Error::DimensionMismatch {
            expected: hmm.dim,
            got: utterance.dim(),
        });
    }
    let comp_ld = hmm.component_log_densities(&utterance.data);
    let log_b = hmm.state_log_emissions(&comp_ld);
    let (path, _) = hmm.viterbi(&log_b);
    let s = hmm.states_per_unit;

    let mut units = Vec::new();
    let mut seg_unit = path[0] / s;
    let mut seg_start = 0usize;
    for t in 1..path.len() {
        let unit = path[t] / s;
        let reentered = unit == seg_unit && path[t] % s < path[t - 1] % s;
        if unit != seg_unit || reentered {
            units.push((seg_unit as u32, seg_start, t - 1));
            seg_unit = unit;
            seg_start = t;
        }
    }
    units.push((seg_unit as u32, seg_start, path.len() - 1));
    Ok(UnitSequence {
        utterance_id: utterance.utterance_id.clone(),
        units,
    })
}
