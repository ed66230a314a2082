//! Run configuration: one TOML file drives every subcommand; CLI flags
//! override individual fields.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::han::{HanConfig, HanSearchSpace};
use crate::narrative::{AblationConfig, ALL_CONFIGS};
use crate::tree::{default_grid, TreeHyperparams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClientMode {
    #[default]
    Stub,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeSection {
    pub inner_k: usize,
    pub grid: Vec<TreeHyperparams>,
}

impl Default for TreeSection {
    fn default() -> Self {
        TreeSection {
            inner_k: 3,
            grid: default_grid(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSection {
    pub budget: usize,
    pub k: usize,
    pub space: HanSearchSpace,
}

impl Default for SearchSection {
    fn default() -> Self {
        SearchSection {
            budget: 20,
            k: 3,
            space: HanSearchSpace::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSection {
    pub n_sessions: usize,
    pub null_effects: bool,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            n_sessions: 120,
            null_effects: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub corpus: PathBuf,
    pub output: PathBuf,
    /// Ablation configuration names; subset of the six families.
    pub configs: Vec<String>,
    /// Registered model names to run.
    pub models: Vec<String>,
    pub k: usize,
    pub seed: u64,
    pub client_mode: ClientMode,
    /// Word-vector text file; absent → deterministic hashed vectors.
    pub embedding_path: Option<PathBuf>,
    pub bootstrap_resamples: usize,
    pub bootstrap_levels: Vec<f64>,
    /// "session" or "per-turn" word attention standardization.
    pub word_standardization: String,
    pub style_path: Option<PathBuf>,
    pub tree: TreeSection,
    pub han: HanConfig,
    pub search: SearchSection,
    pub synth: SynthSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: PathBuf::from("corpus"),
            output: PathBuf::from("out"),
            configs: ALL_CONFIGS.iter().map(|c| c.to_string()).collect(),
            models: vec!["tree".into(), "han".into()],
            k: 5,
            seed: 1,
            client_mode: ClientMode::Stub,
            embedding_path: None,
            bootstrap_resamples: 1000,
            bootstrap_levels: vec![0.90, 0.95],
            word_standardization: "session".into(),
            style_path: None,
            tree: TreeSection::default(),
            han: HanConfig::default(),
            search: SearchSection::default(),
            synth: SynthSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: RunConfig = toml::from_str(&raw)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.configs.is_empty() {
            return Err(Error::Config("configs must not be empty".into()));
        }
        self.parsed_configs()?;
        if self.models.is_empty() {
            return Err(Error::Config("models must not be empty".into()));
        }
        if self.k < 2 {
            return Err(Error::Config("k must be >= 2".into()));
        }
        for level in &self.bootstrap_levels {
            if !(0.0..1.0).contains(level) {
                return Err(Error::Config(format!(
                    "bootstrap level {level} outside (0, 1)"
                )));
            }
        }
        if !matches!(self.word_standardization.as_str(), "session" | "per-turn") {
            return Err(Error::Config(format!(
                "word_standardization must be 'session' or 'per-turn', got '{}'",
                self.word_standardization
            )));
        }
        for hp in &self.tree.grid {
            hp.validate()?;
        }
        self.han.validate()?;
        Ok(())
    }

    pub fn parsed_configs(&self) -> Result<Vec<AblationConfig>> {
        self.configs
            .iter()
            .map(|name| AblationConfig::from_str(name))
            .collect()
    }

    pub fn word_mode(&self) -> crate::viz::WordStandardization {
        match self.word_standardization.as_str() {
            "per-turn" => crate::viz::WordStandardization::PerTurn,
            _ => crate::viz::WordStandardization::SessionWide,
        }
    }
}
