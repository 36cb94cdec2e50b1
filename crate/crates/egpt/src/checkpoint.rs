//! Model checkpoints: the config, the hyperparameters that produced it, then
//! every parameter tensor as (name, shape, row-major values). Values are
//! written in shortest round-trip form, so reloading is exact.

use std::fs;
use std::path::Path;

use egpt_core::egpt::{EgptConfig, EgptModel, Params};
use egpt_core::numerics::Tensor;
use egpt_core::trainer::Hyperparams;
use serde::{Deserialize, Serialize};

use crate::dataset::{check_format, to_json};
use crate::error::{CliError, Result};

pub const CHECKPOINT_FORMAT: &str = "egpt-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub config: EgptConfig,
    pub hyperparams: Hyperparams,
    pub seed: u64,
    pub params: Vec<ParamRecord>,
}

impl Checkpoint {
    pub fn new(model: &EgptModel, hyperparams: &Hyperparams, seed: u64) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            config: model.config().clone(),
            hyperparams: hyperparams.clone(),
            seed,
            params: model
                .params()
                .named()
                .into_iter()
                .map(|(name, t)| ParamRecord {
                    name,
                    shape: t.shape().to_vec(),
                    values: t.data().to_vec(),
                })
                .collect(),
        }
    }

    /// Rebuilds the model, checking names and shapes against the config.
    pub fn into_model(self) -> egpt_core::Result<EgptModel> {
        let expected = EgptModel::new(self.config.clone(), 0)?;
        let names: Vec<String> = expected.params().named().into_iter().map(|(n, _)| n).collect();
        if names.len() != self.params.len() {
            return Err(egpt_core::Error::Layout(format!(
                "checkpoint has {} tensors, config needs {}",
                self.params.len(),
                names.len()
            )));
        }
        let mut tensors = Vec::with_capacity(names.len());
        for (want, rec) in names.iter().zip(self.params) {
            if *want != rec.name {
                return Err(egpt_core::Error::Layout(format!("expected tensor `{want}`, found `{}`", rec.name)));
            }
            tensors.push(Tensor::new(rec.shape, rec.values)?);
        }
        let params = Params::<Tensor>::from_values(self.config.layers, tensors)?;
        EgptModel::from_params(self.config, params)
    }
}

pub fn save(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, to_json(checkpoint)).map_err(|e| CliError::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| CliError::format(path, e))?;
    check_format(path, &ck.format, CHECKPOINT_FORMAT)?;
    Ok(ck)
}

/// Loads and rebuilds in one go, keeping the hyperparameters alongside.
pub fn load_model(path: &Path) -> Result<(EgptModel, Hyperparams)> {
    let ck = load(path)?;
    let hp = ck.hyperparams.clone();
    let model = ck.into_model().map_err(|e| CliError::format(path, e))?;
    Ok((model, hp))
}
