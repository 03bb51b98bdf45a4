//! Run configuration: built-in defaults, then an optional TOML file, then flags.

use std::path::Path;

use entity_embed::latent::PerturbNoise;
use entity_embed::vae::LatentActivation;
use entity_embed::{Error, Result};
use serde::Deserialize;

/// Contents of a `--config` file. Every key is optional; unknown keys are
/// rejected so typos do not silently fall back to defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub synthetic: SyntheticFile,
    pub split: SplitFile,
    pub train: TrainFile,
    pub eval: EvalFile,
    pub perturb: PerturbFile,
    pub tsne: TsneFile,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticFile {
    pub games: Option<usize>,
    pub archetypes: Option<usize>,
    pub states: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitFile {
    pub test_frac: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainFile {
    pub hidden: Option<usize>,
    pub latent: Option<usize>,
    pub latent_activation: Option<LatentActivation>,
    pub epochs: Option<usize>,
    pub batch: Option<usize>,
    pub lr: Option<f64>,
    pub kl_weight: Option<f64>,
    pub seed: Option<u64>,
    pub shuffle: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalFile {
    pub k: Option<usize>,
    pub allow_overlap: Option<bool>,
    pub sample_frac: Option<f64>,
    pub sample_seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbFile {
    pub n: Option<usize>,
    pub range: Option<f64>,
    pub seed: Option<u64>,
    pub noise: Option<PerturbNoise>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsneFile {
    pub perplexity: Option<f64>,
    pub iters: Option<usize>,
    pub learning_rate: Option<f64>,
    pub seed: Option<u64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| {
            let msg = e.to_string().replace('\n', " ");
            Error::Config(format!("config {}: {}", path.display(), msg.trim()))
        })
    }
}

/// Flag, else file value, else default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}
