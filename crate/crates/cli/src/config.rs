//! Run configuration file: one strict JSON document.

use std::path::Path;

use grlsm::corpus::CorpusSpec;
use grlsm::metrics::EvalConfig;
use grlsm::model::Dims;
use grlsm::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    pub window: usize,
    pub embed: usize,
    pub hidden: usize,
    pub latent: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            window: 8,
            embed: 8,
            hidden: 32,
            latent: 8,
        }
    }
}

impl ModelSpec {
    pub fn dims(&self) -> Dims {
        Dims {
            embed: self.embed,
            hidden: self.hidden,
            latent: self.latent,
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        if [self.window, self.embed, self.hidden, self.latent].contains(&0) {
            return Err(CliError::Usage("model: window and all dimensions must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// File names written next to the primary output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputNames {
    pub history: String,
}

impl Default for OutputNames {
    fn default() -> Self {
        Self {
            history: "history.csv".into(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub model: ModelSpec,
    /// `max_len` and `pad_to` shape the training windows; the rest records how the corpus was made.
    pub corpus: CorpusSpec,
    pub eval: EvalConfig,
    pub outputs: OutputNames,
}

impl RunConfig {
    pub fn parse(bytes: &[u8]) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_slice(bytes).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        cfg.train
            .validate()
            .map_err(|e| CliError::Usage(format!("config: {e}")))?;
        cfg.corpus
            .validate()
            .map_err(|e| CliError::Usage(format!("config: {e}")))?;
        cfg.model.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        Self::parse(&bytes)
    }
}
