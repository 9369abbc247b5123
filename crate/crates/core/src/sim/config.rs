//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::attack::AttackConfig;
use super::data::SyntheticSpec;
use super::model::Architecture;
use crate::agg::Aggregator;
use crate::error::{Error, Result};
use crate::he::PRESET_NAMES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetConfig {
    Synthetic(SyntheticSpec),
    Csv(CsvSource),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub train: PathBuf,
    /// Without a test file, `test_fraction` of the rows are held out.
    #[serde(default)]
    pub test: Option<PathBuf>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub classes: Option<usize>,
}

fn default_test_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Plain,
    Encrypted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RosterMode {
    /// Attacker count per round fixed at `round(fraction · roster)`.
    Pinned,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncryptScope {
    FirstLayer,
    Whole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "defaults::dataset")]
    pub dataset: DatasetConfig,
    #[serde(default = "defaults::architecture")]
    pub architecture: Architecture,
    #[serde(default = "defaults::users")]
    pub users: usize,
    #[serde(default = "defaults::roster")]
    pub roster: usize,
    #[serde(default = "defaults::roster_mode")]
    pub roster_mode: RosterMode,
    #[serde(default)]
    pub attack: AttackConfig,
    #[serde(default = "defaults::aggregator")]
    pub aggregator: String,
    #[serde(default = "defaults::trim_beta")]
    pub trim_beta: f64,
    #[serde(default = "defaults::krum_f")]
    pub krum_f: usize,
    #[serde(default = "defaults::mode")]
    pub mode: Mode,
    #[serde(default = "defaults::preset")]
    pub preset: String,
    #[serde(default = "defaults::encrypt")]
    pub encrypt: EncryptScope,
    #[serde(default = "defaults::eta")]
    pub eta: f64,
    #[serde(default = "defaults::local_epochs")]
    pub local_epochs: usize,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::rounds")]
    pub rounds: u64,
    /// Stop once `‖w^{i+1} - w^i‖ ≤ epsilon`; zero runs every round.
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default = "defaults::seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub override_attacker_cap: bool,
}

mod defaults {
    use super::*;

    pub fn dataset() -> DatasetConfig {
        DatasetConfig::Synthetic(SyntheticSpec::default())
    }
    pub fn architecture() -> Architecture {
        Architecture::Logistic
    }
    pub fn users() -> usize {
        100
    }
    pub fn roster() -> usize {
        10
    }
    pub fn roster_mode() -> RosterMode {
        RosterMode::Pinned
    }
    pub fn aggregator() -> String {
        "fhefl".into()
    }
    pub fn trim_beta() -> f64 {
        0.2
    }
    pub fn krum_f() -> usize {
        2
    }
    pub fn mode() -> Mode {
        Mode::Plain
    }
    pub fn preset() -> String {
        "test-1024".into()
    }
    pub fn encrypt() -> EncryptScope {
        EncryptScope::FirstLayer
    }
    pub fn eta() -> f64 {
        0.1
    }
    pub fn local_epochs() -> usize {
        1
    }
    pub fn batch_size() -> usize {
        10
    }
    pub fn rounds() -> u64 {
        100
    }
    pub fn seeds() -> Vec<u64> {
        vec![0]
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("every field has a default")
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg = Self::parse(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses without validating, so callers can apply overrides first.
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads and parses without validating.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let cfg = Self::read(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn aggregator(&self) -> Result<Aggregator> {
        Aggregator::from_name(&self.aggregator, self.trim_beta, self.krum_f)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !PRESET_NAMES.contains(&self.preset.as_str()) {
            return bad(format!("unknown preset `{}`", self.preset));
        }
        self.aggregator()?;
        if self.roster == 0 || self.roster > self.users {
            return bad(format!("roster {} must be in 1..={}", self.roster, self.users));
        }
        if self.mode == Mode::Encrypted {
            if self.roster < 2 {
                return bad("encrypted mode needs a roster of at least two".into());
            }
            if self.aggregator != "fhefl" {
                return bad(format!("encrypted mode supports only fhefl, not `{}`", self.aggregator));
            }
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return bad(format!("learning rate {}", self.eta));
        }
        if self.batch_size == 0 || self.local_epochs == 0 || self.rounds == 0 {
            return bad("batch size, local epochs and rounds must be positive".into());
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return bad(format!("epsilon {}", self.epsilon));
        }
        if self.seeds.is_empty() {
            return bad("seed list is empty".into());
        }
        let classes = match &self.dataset {
            DatasetConfig::Synthetic(s) => s.classes,
            DatasetConfig::Csv(c) => c.classes.unwrap_or(usize::MAX),
        };
        if self.attack.fraction > 0.0 || self.attack.fraction.is_nan() {
            self.attack.validate(classes, self.override_attacker_cap)?;
        }
        Ok(())
    }
}
