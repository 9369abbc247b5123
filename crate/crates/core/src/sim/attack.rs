//! Label-flipping attackers.

use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::model::Model;
use crate::error::{Error, Result};

/// Largest attacker fraction admitted without an explicit override.
pub const ATTACKER_CAP: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    #[serde(default = "default_source")]
    pub source: usize,
    #[serde(default = "default_target")]
    pub target: usize,
    #[serde(default)]
    pub fraction: f64,
    /// Local epochs run by each attacker per round.
    #[serde(default = "default_epochs")]
    pub epochs: usize,
}

fn default_source() -> usize {
    1
}

fn default_target() -> usize {
    7
}

fn default_epochs() -> usize {
    5
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            source: default_source(),
            target: default_target(),
            fraction: 0.0,
            epochs: default_epochs(),
        }
    }
}

impl AttackConfig {
    pub fn validate(&self, classes: usize, override_cap: bool) -> Result<()> {
        if self.source == self.target {
            return Err(Error::Config("attack source and target labels must differ".into()));
        }
        if self.source >= classes || self.target >= classes {
            return Err(Error::Config(format!(
                "attack labels {} and {} must be below {classes}",
                self.source, self.target
            )));
        }
        if !(0.0..=1.0).contains(&self.fraction) {
            return Err(Error::Config(format!("attacker fraction {}", self.fraction)));
        }
        if self.fraction > ATTACKER_CAP && !override_cap {
            return Err(Error::Config(format!(
                "attacker fraction {} exceeds {ATTACKER_CAP} without the override flag",
                self.fraction
            )));
        }
        Ok(())
    }
}

/// Swaps `source` and `target` labels in both directions.
pub fn flip_labels(shard: &mut Dataset, cfg: &AttackConfig) {
    for y in shard.labels_mut() {
        if *y == cfg.source {
            *y = cfg.target;
        } else if *y == cfg.target {
            *y = cfg.source;
        }
    }
}

/// Fraction of test rows labeled `source` that the model assigns to `target`.
pub fn attack_success_rate(model: &Model, w: &[f64], test: &Dataset, cfg: &AttackConfig) -> Result<f64> {
    let rows: Vec<usize> = (0..test.len()).filter(|&i| test.label(i) == cfg.source).collect();
    if rows.is_empty() {
        return Err(Error::Degenerate(format!("no test rows with label {}", cfg.source)));
    }
    let hits = rows
        .iter()
        .filter(|&&i| model.predict(w, test.row(i)) == cfg.target)
        .count();
    Ok(hits as f64 / rows.len() as f64)
}
