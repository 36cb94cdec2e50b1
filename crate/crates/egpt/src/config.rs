//! The single TOML run file. Every field has a default, so an empty file is
//! a valid config and `print-config` dumps the complete set.

use std::fs;
use std::path::{Path, PathBuf};

use egpt_core::synthgen::GeneratorConfig;
use egpt_core::trainer::{reference_grid, Hyperparams};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Source of every random draw in generation and training.
    pub seed: u64,
    pub paths: Paths,
    pub dataset: GeneratorConfig,
    pub train: Hyperparams,
    pub predict: PredictConfig,
    pub sweep: SweepConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    /// Ranked new-link candidates listed per user and predicted step.
    pub recommendations: usize,
}

impl Default for PredictConfig {
    fn default() -> Self {
        PredictConfig { recommendations: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub dataset: PathBuf,
    pub checkpoint: PathBuf,
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            dataset: PathBuf::from("data/egpt"),
            checkpoint: PathBuf::from("runs/checkpoint.json"),
            reports: PathBuf::from("runs"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Cells run in order. Fields left out of a cell take the library
    /// defaults, not the `[train]` values.
    pub grid: Vec<Hyperparams>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { grid: reference_grid() }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            paths: Paths::default(),
            dataset: GeneratorConfig::default(),
            train: Hyperparams::default(),
            predict: PredictConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Defaults when no file is given.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config always serializes")
    }

    /// Checks every section before any work starts. Messages name the
    /// offending section and field.
    pub fn validate(&self) -> Result<()> {
        let section = |name: &str, r: egpt_core::Result<()>| r.map_err(|e| CliError::Config(format!("[{name}] {e}")));
        section("dataset", self.dataset.validate())?;
        section("train", self.train.validate())?;
        for (i, hp) in self.sweep.grid.iter().enumerate() {
            section(&format!("sweep.grid.{i}"), hp.validate())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn partial_override() {
        let c = RunConfig::parse("seed = 9\n[dataset]\nusers = 40\n[train]\niterations = 5\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.dataset.users, 40);
        assert_eq!(c.dataset.steps, 10);
        assert_eq!(c.train.iterations, 5);
    }

    #[test]
    fn errors_name_the_field() {
        let err = RunConfig::parse("[dataset]\nusers = 1\n").unwrap_err().to_string();
        assert!(err.contains("[dataset]") && err.contains("users"), "{err}");
        let err = RunConfig::parse("[train]\nbogus = 1\n").unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
        let err = RunConfig::parse("[[sweep.grid]]\nlearning_rate = -1.0\n").unwrap_err().to_string();
        assert!(err.contains("sweep.grid.0") && err.contains("learning_rate"), "{err}");
    }
}
