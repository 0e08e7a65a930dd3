//! The phone-loop model state: conjugate posteriors over stick-breaking
//! weights, per-state transition and mixture-weight Dirichlets, and diagonal
//! Normal-Gamma Gaussian parameters.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::function::gamma::digamma;

use super::inference::UnifiedHmm;
use super::AudConfig;
use crate::corpus::Corpus;
use crate::{Error, Result};

/// Fixed prior hyperparameters, derived from global corpus statistics at
/// initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct Priors {
    /// Normal-Gamma location (global mean per dimension).
    pub mean: Vec<f64>,
    /// Normal-Gamma precision scale.
    pub kappa: f64,
    /// Gamma shape.
    pub shape: f64,
    /// Gamma rate per dimension (global variance, so E[precision] matches
    /// the data scale).
    pub rate: Vec<f64>,
    /// Dirichlet pseudo-count for transitions and mixture weights.
    pub dirichlet: f64,
    /// Beta prior of the sticks: Beta(1, concentration).
    pub stick_a: f64,
    pub stick_b: f64,
    /// Per-dimension variance floor (1e-3 x global variance).
    pub var_floor: Vec<f64>,
}

/// Posterior state of the truncated phone loop.
///
/// Layout: units are indexed `0..truncation`, states within a unit
/// `0..states_per_unit`, Gaussian components within a state
/// `0..gaussians_per_state`. Flattened indices are
/// `state_idx = unit * S + state` and `comp_idx = state_idx * M + comp`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhoneLoopModel {
    pub config: AudConfig,
    pub dim: usize,
    pub prior: Priors,
    /// Stick Beta posteriors; the last stick stays at its prior because the
    /// truncation closure pins the final break fraction to one.
    pub stick_a: Vec<f64>,
    pub stick_b: Vec<f64>,
    /// Per-state Dirichlet posteriors over {stay, advance}.
    pub trans_stay: Vec<f64>,
    pub trans_adv: Vec<f64>,
    /// Per-state Dirichlet posteriors over mixture components.
    pub weight_alpha: Vec<f64>,
    /// Normal-Gamma posteriors per component: location and rate are
    /// per-dimension, precision-scale and shape are shared across dimensions.
    pub ng_loc: Vec<f64>,
    pub ng_rate: Vec<f64>,
    pub ng_kappa: Vec<f64>,
    pub ng_shape: Vec<f64>,
}

/// Expected stick weights under the Beta posteriors, with the final weight
/// absorbing the remainder so the vector sums to one.
pub fn stick_weights(stick_a: &[f64], stick_b: &[f64], truncation: usize) -> Vec<f64> {
    let mut pi = vec![0.0; truncation];
    let mut remaining = 1.0;
    for u in 0..truncation {
        if u + 1 == truncation {
            pi[u] = remaining;
        } else {
            let ev = stick_a[u] / (stick_a[u] + stick_b[u]);
            pi[u] = ev * remaining;
            remaining *= 1.0 - ev;
        }
    }
    pi
}

/// Initialize posteriors from corpus statistics: Gaussian locations are the
/// global mean plus a seeded unit-variance perturbation scaled by the global
/// standard deviation; precisions come from the global variance; Dirichlets
/// are uniform and sticks sit at Beta(1, concentration).
pub fn init_model(config: &AudConfig, corpus: &Corpus) -> Result<PhoneLoopModel> {
    config.validate()?;
    let dim = corpus.dim().ok_or(Error::EmptyCorpus)?;
    let total_frames = corpus.total_frames();
    if total_frames == 0 {
        return Err(Error::EmptyCorpus);
    }

    let mut mean = vec![0.0f64; dim];
    for m in corpus.utterances.values() {
        for row in m.data.rows() {
            for (acc, v) in mean.iter_mut().zip(row.iter()) {
                *acc += v;
            }
        }
    }
    for acc in &mut mean {
        *acc /= total_frames as f64;
    }
    let mut var = vec![0.0f64; dim];
    for m in corpus.utterances.values() {
        for row in m.data.rows() {
            for ((acc, v), mu) in var.iter_mut().zip(row.iter()).zip(&mean) {
                *acc += (v - mu) * (v - mu);
            }
        }
    }
    for acc in &mut var {
        *acc /= total_frames as f64;
    }
    if let Some(d) = var.iter().position(|&v| v <= 0.0) {
        return Err(Error::DegenerateVariance(d));
    }
    let std: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();

    let prior = Priors {
        mean: mean.clone(),
        kappa: 1.0,
        shape: 1.0,
        rate: var.clone(),
        dirichlet: 1.0,
        stick_a: 1.0,
        stick_b: config.concentration,
        var_floor: var.iter().map(|v| 1e-3 * v).collect(),
    };

    let n_states = config.num_states();
    let n_comps = config.num_components();
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let mut ng_loc = Vec::with_capacity(n_comps * dim);
    for _ in 0..n_comps {
        for d in 0..dim {
            ng_loc.push(mean[d] + std[d] * std_normal.sample(&mut rng));
        }
    }

    Ok(PhoneLoopModel {
        config: config.clone(),
        dim,
        stick_a: vec![prior.stick_a; config.truncation],
        stick_b: vec![prior.stick_b; config.truncation],
        trans_stay: vec![prior.dirichlet; n_states],
        trans_adv: vec![prior.dirichlet; n_states],
        weight_alpha: vec![prior.dirichlet; n_comps],
        ng_rate: {
            let mut r = Vec::with_capacity(n_comps * dim);
            for _ in 0..n_comps {
                r.extend_from_slice(&var);
            }
            r
        },
        ng_kappa: vec![prior.kappa; n_comps],
        ng_shape: vec![prior.shape; n_comps],
        ng_loc,
        prior,
    })
}

impl PhoneLoopModel {
    pub fn expected_stick_weights(&self) -> Vec<f64> {
        stick_weights(&self.stick_a, &self.stick_b, self.config.truncation)
    }

    /// Unified HMM under expected (posterior-mean) parameters, used for
    /// Viterbi decoding and as the reference transition structure.
    pub fn unified_expected(&self) -> UnifiedHmm {
        let t = self.config.truncation;
        let s = self.config.states_per_unit;
        let m = self.config.gaussians_per_state;
        let entry = self.expected_stick_weights();
        let n_states = t * s;
        let mut stay = vec![0.0; n_states];
        let mut adv = vec![0.0; n_states];
        for i in 0..n_states {
            let total = self.trans_stay[i] + self.trans_adv[i];
            stay[i] = self.trans_stay[i] / total;
            adv[i] = self.trans_adv[i] / total;
        }
        let mut comp_log_weight = vec![0.0; n_states * m];
        for st in 0..n_states {
            let alphas = &self.weight_alpha[st * m..(st + 1) * m];
            let total: f64 = alphas.iter().sum();
            for (k, &a) in alphas.iter().enumerate() {
                comp_log_weight[st * m + k] = (a / total).ln();
            }
        }
        let n_comps = n_states * m;
        let mut comp_coef = vec![0.0; n_comps];
        let mut comp_lam = vec![0.0; n_comps * self.dim];
        for c in 0..n_comps {
            let mut coef = 0.0;
            for d in 0..self.dim {
                let prec = self.ng_shape[c] / self.ng_rate[c * self.dim + d];
                comp_lam[c * self.dim + d] = prec;
                coef += prec.ln() - (2.0 * std::f64::consts::PI).ln();
            }
            comp_coef[c] = 0.5 * coef;
        }
        UnifiedHmm {
            num_units: t,
            states_per_unit: s,
            comps_per_state: m,
            dim: self.dim,
            entry,
            stay,
            adv,
            comp_log_weight,
            comp_coef,
            comp_lam,
            comp_loc: self.ng_loc.clone(),
        }
    }

    /// Unified HMM under expected-log parameters (geometric-mean
    /// subprobabilities), used by the variational E-step.
    pub fn unified_elog(&self) -> UnifiedHmm {
        let t = self.config.truncation;
        let s = self.config.states_per_unit;
        let m = self.config.gaussians_per_state;

        // E[ln pi_u] under the stick posteriors, with truncation closure.
        let mut entry = vec![0.0; t];
        let mut acc = 0.0f64;
        for u in 0..t {
            if u + 1 == t {
                entry[u] = acc.exp();
            } else {
                let eln_v = digamma(self.stick_a[u]) - digamma(self.stick_a[u] + self.stick_b[u]);
                let eln_1mv =
                    digamma(self.stick_b[u]) - digamma(self.stick_a[u] + self.stick_b[u]);
                entry[u] = (acc + eln_v).exp();
                acc += eln_1mv;
            }
        }

        let n_states = t * s;
        let mut stay = vec![0.0; n_states];
        let mut adv = vec![0.0; n_states];
        for i in 0..n_states {
            let total = digamma(self.trans_stay[i] + self.trans_adv[i]);
            stay[i] = (digamma(self.trans_stay[i]) - total).exp();
            adv[i] = (digamma(self.trans_adv[i]) - total).exp();
        }
        let mut comp_log_weight = vec![0.0; n_states * m];
        for st in 0..n_states {
            let alphas = &self.weight_alpha[st * m..(st + 1) * m];
            let total = digamma(alphas.iter().sum::<f64>());
            for (k, &a) in alphas.iter().enumerate() {
                comp_log_weight[st * m + k] = digamma(a) - total;
            }
        }

        // E[ln N(x | mu, lambda)] for a Normal-Gamma posterior decomposes as
        // coef - 0.5 sum_d E[lambda_d] (x_d - m_d)^2 with
        // coef = 0.5 sum_d (psi(a) - ln b_d - ln 2 pi - 1/kappa).
        let n_comps = n_states * m;
        let mut comp_coef = vec![0.0; n_comps];
        let mut comp_lam = vec![0.0; n_comps * self.dim];
        for c in 0..n_comps {
            let mut coef = 0.0;
            for d in 0..self.dim {
                let b = self.ng_rate[c * self.dim + d];
                comp_lam[c * self.dim + d] = self.ng_shape[c] / b;
                coef += digamma(self.ng_shape[c])
                    - b.ln()
                    - (2.0 * std::f64::consts::PI).ln()
                    - 1.0 / self.ng_kappa[c];
            }
            comp_coef[c] = 0.5 * coef;
        }
        UnifiedHmm {
            num_units: t,
            states_per_unit: s,
            comps_per_state: m,
            dim: self.dim,
            entry,
            stay,
            adv,
            comp_log_weight,
            comp_coef,
            comp_lam,
            comp_loc: self.ng_loc.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic_corpus, FeatureMatrix, Labels, SpokenDocument, SyntheticSpec};
    use ndarray::Array2;
    use rand::Rng;
    use rand::SeedableRng;

    fn small_corpus(seed: u64) -> Corpus {
        let spec = SyntheticSpec {
            num_topics: 2,
            num_latent_units: 3,
            docs_per_topic: 2,
            utterances_per_doc: 1,
            units_per_utterance: (4, 6),
            frames_per_unit: (2, 4),
            feature_dim: 3,
            rng_seed: seed,
            ..Default::default()
        };
        generate_synthetic_corpus(&spec).unwrap().0
    }

    #[test]
    fn init_is_deterministic() {
        let corpus = small_corpus(1);
        let config = AudConfig {
            truncation: 4,
            ..Default::default()
        };
        let a = init_model(&config, &corpus).unwrap();
        let b = init_model(&config, &corpus).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_variance_corpus_is_degenerate() {
        let mut corpus = Corpus::default();
        corpus.utterances.insert(
            "u".into(),
            FeatureMatrix::new("u", Array2::from_elem((10, 2), 3.5)).unwrap(),
        );
        corpus.documents.push(SpokenDocument {
            doc_id: "d".into(),
            utterance_ids: vec!["u".into()],
            labels: Labels::Single(0),
        });
        let config = AudConfig {
            truncation: 2,
            ..Default::default()
        };
        assert!(matches!(
            init_model(&config, &corpus),
            Err(Error::DegenerateVariance(_))
        ));
    }

    #[test]
    fn initial_stick_weights_with_unit_concentration() {
        let corpus = small_corpus(2);
        let config = AudConfig {
            truncation: 8,
            concentration: 1.0,
            ..Default::default()
        };
        let model = init_model(&config, &corpus).unwrap();
        let pi = model.expected_stick_weights();
        // Beta(1,1) has E[v] = 1/2, so the first weights halve geometrically.
        assert!((pi[0] - 0.5).abs() < 1e-12);
        assert!((pi[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn stick_weight_edge_cases_and_normalization() {
        // E[v_1] = 1 sends all mass to the first stick.
        let pi = stick_weights(&[1.0, 1.0, 1.0], &[0.0, 1.0, 1.0], 3);
        assert_eq!(pi, vec![1.0, 0.0, 0.0]);

        // Closure at the truncation: (0.5, 0.25, remainder).
        let pi = stick_weights(&[1.0, 1.0, 7.0], &[1.0, 1.0, 3.0], 3);
        assert!((pi[0] - 0.5).abs() < 1e-15);
        assert!((pi[1] - 0.25).abs() < 1e-15);
        assert!((pi[2] - 0.25).abs() < 1e-15);

        // Random parameters still sum to one.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let n = rng.random_range(1..=40);
            let a: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 5.0 + 0.1).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 5.0 + 0.1).collect();
            let pi = stick_weights(&a, &b, n);
            let sum: f64 = pi.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }
}
