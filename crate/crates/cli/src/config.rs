use std::path::Path;

use forensics_core::index::ForestConfig;
use forensics_core::pipeline::PipelineConfig;
use forensics_core::{Error, Result};
use serde::{Deserialize, Serialize};

/// Desk-scale dataset shape for `synth`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub count: usize,
    pub distractors: usize,
    pub hosts: usize,
    pub size: usize,
    pub distractor_size: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            count: 200,
            distractors: 10_000,
            hosts: 200,
            size: 256,
            distractor_size: 128,
        }
    }
}

/// Everything a TOML config file may set. Command-line flags win over it.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub pipeline: PipelineConfig,
    pub forest: ForestConfig,
    pub synth: SynthSection,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Applies a global seed to every seeded component.
    pub fn apply_seed(&mut self, seed: Option<u64>) {
        if let Some(s) = seed.or(self.seed) {
            self.seed = Some(s);
            self.pipeline.seed = s;
            self.forest.seed = s;
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}
