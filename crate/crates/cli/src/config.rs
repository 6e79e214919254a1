//! Run configuration file and inference presets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use score_core::{
    io, Activation, ArchConfig, Error, EvalOptions, InferenceConfig, Result, TrainConfig,
};

/// Architecture without the input dimension, which comes from the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchOptions {
    pub num_layers: usize,
    pub width: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

impl Default for ArchOptions {
    fn default() -> Self {
        Self {
            num_layers: 5,
            width: 500,
            output_dim: 15,
            activation: Activation::Swish,
        }
    }
}

impl ArchOptions {
    pub fn with_input(self, input_dim: usize) -> ArchConfig {
        ArchConfig {
            num_layers: self.num_layers,
            width: self.width,
            output_dim: self.output_dim,
            activation: self.activation,
            input_dim,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub arch: ArchOptions,
    pub train: TrainConfig,
    pub inference: InferenceConfig,
    pub metrics: EvalOptions,
    /// Overrides `train.seed` when set.
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        io::read_json(path).map_err(|e| match e {
            Error::Parse {
                path,
                line,
                message,
            } => Error::Config(format!("{}:{line}: {message}", path.display())),
            other => other,
        })
    }

    /// Effective training config with the seed applied; `flag_seed` wins.
    pub fn train_config(&self, flag_seed: Option<u64>) -> TrainConfig {
        let mut t = self.train;
        if let Some(seed) = flag_seed.or(self.seed) {
            t.seed = seed;
        }
        t
    }
}

/// Inference presets (`c`, `k`) tuned per benchmark corpus.
pub const PRESETS: &[(&str, f64, usize)] = &[
    ("nyt10m", 0.6, 50),
    ("nyt10d", 0.7, 100),
    ("disrex", 0.5, 50),
    ("wiki20m", 0.5, 100),
    ("wiki20d", 0.7, 150),
];

pub fn apply_preset(config: &mut InferenceConfig, name: &str) -> Result<()> {
    let key = name.to_ascii_lowercase();
    let (_, c, k) = PRESETS.iter().find(|(n, _, _)| *n == key).ok_or_else(|| {
        let known: Vec<&str> = PRESETS.iter().map(|p| p.0).collect();
        Error::Config(format!(
            "unknown preset {name:?} (known: {})",
            known.join(", ")
        ))
    })?;
    config.c = *c;
    config.k = *k;
    Ok(())
}
