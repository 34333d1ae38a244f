use std::path::Path;

use serde::{Deserialize, Serialize};
use travnav_core::sim::SimConfig;
use travnav_llm::LlmConfig;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Mock,
    Llm,
}

/// Everything a config file can set. Missing sections keep their defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub backend: Backend,
    pub sim: SimConfig,
    pub llm: LlmConfig,
}

impl CliConfig {
    /// TOML, or JSON when the file name ends in `.json`.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?
        };
        cfg.sim.validate()?;
        cfg.llm.validate()?;
        Ok(cfg)
    }
}
