use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use cryptolect::corpus::SchemaMap;
use cryptolect::induction::InductionConfig;
use cryptolect::llmclient::ModelConfig;
use cryptolect::synthetic::SyntheticSpec;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// The optional `--config` file. Every section may be left out.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema: Option<SchemaMap>,
    pub induction: Option<InductionConfig>,
    pub synthetic: Option<SyntheticSpec>,
    /// Named endpoint configs, selectable with `run-eval --model <name>`.
    pub models: BTreeMap<String, ModelConfig>,
    /// Extra refusal phrases for the reply parser.
    pub refusal_patterns: Vec<String>,
}

/// Reads TOML, or JSON when the file ends in `.json`.
pub fn read_file<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).with_context(|| format!("invalid JSON in {}", path.display()))
    } else {
        toml::from_str(&text).with_context(|| format!("invalid TOML in {}", path.display()))
    }
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => read_file(p),
            None => Ok(Self::default()),
        }
    }

    /// `spec` is a config file path or the name of a `[models.<name>]`
    /// entry.
    pub fn model(&self, spec: &str) -> Result<ModelConfig> {
        let path = Path::new(spec);
        if path.is_file() {
            return read_file(path);
        }
        match self.models.get(spec) {
            Some(m) => Ok(m.clone()),
            None => bail!("{spec} is neither a model config file nor a model named in the config"),
        }
    }
}
