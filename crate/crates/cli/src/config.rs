//! Run configuration: one JSON file per run, every stage seeded from a
//! single root seed.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use zrtopic_core::aud::AudConfig;
use zrtopic_core::cnn::CnnConfig;
use zrtopic_core::corpus::{PlantedTermSpec, SyntheticSpec};
use zrtopic_core::embed::EmbedConfig;
use zrtopic_core::eval::SvmCvOptions;
use zrtopic_core::utd::UtdConfig;
use zrtopic_core::util::{derive_seed, sha256_hex};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthConfig {
    Units(SyntheticSpec),
    Planted(PlantedTermSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classifier {
    Svm,
    Cnn,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalConfig {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    pub classifier: Classifier,
    /// Label excluded from the in-domain AP average; defaults to the last
    /// label.
    #[serde(default)]
    pub out_of_domain: Option<usize>,
    /// Use skip-gram pre-trained embeddings for the CNN when provided.
    #[serde(default)]
    pub use_pretrained_embeddings: bool,
}

fn default_k() -> usize {
    10
}

fn default_repeats() -> usize {
    5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub root_seed: u64,
    #[serde(default)]
    pub synth: Option<SynthConfig>,
    #[serde(default)]
    pub utd: Option<UtdConfig>,
    #[serde(default)]
    pub aud: Option<AudConfig>,
    #[serde(default)]
    pub embed: Option<EmbedConfig>,
    #[serde(default)]
    pub svm: Option<SvmCvOptions>,
    #[serde(default)]
    pub cnn: Option<CnnConfig>,
    #[serde(default)]
    pub eval: Option<EvalConfig>,
}

/// A loaded config plus the hash of its file bytes.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: PipelineConfig,
    pub config_hash: String,
}

pub fn load_config(path: &Path, seed_override: Option<u64>) -> Result<LoadedConfig> {
    let bytes = std::fs::read(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let mut config: PipelineConfig =
        serde_json::from_slice(&bytes).with_context(|| format!("bad config {}", path.display()))?;
    if let Some(seed) = seed_override {
        config.root_seed = seed;
    }
    // Expand the root seed into per-stage seeds. Stage configs carry their
    // own rng_seed fields; runs always overwrite them so reproducibility
    // depends on the root seed alone.
    let root = config.root_seed;
    if let Some(SynthConfig::Units(s)) = &mut config.synth {
        s.rng_seed = derive_seed(root, "synth");
    }
    if let Some(SynthConfig::Planted(s)) = &mut config.synth {
        s.rng_seed = derive_seed(root, "synth");
    }
    if let Some(a) = &mut config.aud {
        a.rng_seed = derive_seed(root, "aud");
    }
    if let Some(e) = &mut config.embed {
        e.rng_seed = derive_seed(root, "embed");
    }
    if let Some(s) = &mut config.svm {
        s.svm.rng_seed = derive_seed(root, "svm");
    }
    if let Some(c) = &mut config.cnn {
        c.rng_seed = derive_seed(root, "cnn");
    }
    // The hash covers the effective config (after the seed override), so a
    // different seed is a different run.
    let canonical = serde_json::to_vec(&config)?;
    Ok(LoadedConfig {
        config,
        config_hash: sha256_hex(&canonical),
    })
}

impl PipelineConfig {
    pub fn require_synth(&self) -> Result<&SynthConfig> {
        match &self.synth {
            Some(s) => Ok(s),
            None => bail!("config has no `synth` section"),
        }
    }

    pub fn require_utd(&self) -> Result<&UtdConfig> {
        match &self.utd {
            Some(s) => Ok(s),
            None => bail!("config has no `utd` section"),
        }
    }

    pub fn require_aud(&self) -> Result<&AudConfig> {
        match &self.aud {
            Some(s) => Ok(s),
            None => bail!("config has no `aud` section"),
        }
    }

    pub fn require_embed(&self) -> Result<&EmbedConfig> {
        match &self.embed {
            Some(s) => Ok(s),
            None => bail!("config has no `embed` section"),
        }
    }

    pub fn require_svm(&self) -> Result<&SvmCvOptions> {
        match &self.svm {
            Some(s) => Ok(s),
            None => bail!("config has no `svm` section"),
        }
    }

    pub fn require_cnn(&self) -> Result<&CnnConfig> {
        match &self.cnn {
            Some(s) => Ok(s),
            None => bail!("config has no `cnn` section"),
        }
    }

    pub fn require_eval(&self) -> Result<&EvalConfig> {
        match &self.eval {
            Some(s) => Ok(s),
            None => bail!("config has no `eval` section"),
        }
    }
}
