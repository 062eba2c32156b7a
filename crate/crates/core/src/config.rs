//! Pipeline configuration: one TOML file, `${VAR}` interpolation in string
//! values, unknown keys rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::filter::FilterConfig;
use crate::gateway::{GenSettings, SettingsTable, StepId};

pub const ENV_CHAT_ENDPOINT: &str = "CHAT_ENDPOINT";
pub const ENV_CHAT_TOKEN: &str = "CHAT_TOKEN";
pub const ENV_T2I_ENDPOINT: &str = "T2I_ENDPOINT";
pub const ENV_EMBED_ENDPOINT: &str = "EMBED_ENDPOINT";
pub const ENV_SEARCH_ENDPOINT: &str = "SEARCH_ENDPOINT";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("environment variable `{0}` referenced by the config is not set")]
    MissingEnv(String),
    #[error("no {0} endpoint configured and mock backends are disabled")]
    MissingEndpoint(&'static str),
    #[error("invalid value for `{key}`: {detail}")]
    Invalid { key: String, detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendConfig {
    /// Use the offline mock backends for every service.
    pub mock: bool,
    pub chat_endpoint: Option<String>,
    pub chat_token: Option<String>,
    pub t2i_endpoint: Option<String>,
    pub embed_endpoint: Option<String>,
    pub search_endpoint: Option<String>,
    pub safety_endpoint: Option<String>,
    pub nsfw_endpoint: Option<String>,
    pub scorer_endpoint: Option<String>,
    /// JSONL script for the mock chat backend.
    pub chat_script: Option<PathBuf>,
    /// JSONL script for the stub search client.
    pub search_script: Option<PathBuf>,
    pub model: String,
    pub max_concurrent_requests: usize,
    pub executor_concurrency: usize,
    pub retry_attempts: u32,
    pub retry_base_delay_ms: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            mock: false,
            chat_endpoint: None,
            chat_token: None,
            t2i_endpoint: None,
            embed_endpoint: None,
            search_endpoint: None,
            safety_endpoint: None,
            nsfw_endpoint: None,
            scorer_endpoint: None,
            chat_script: None,
            search_script: None,
            model: "gpt-3.5-turbo-0125".into(),
            max_concurrent_requests: crate::gateway::Gateway::DEFAULT_CONCURRENCY,
            executor_concurrency: crate::aligner::DEFAULT_EXECUTOR_CONCURRENCY,
            retry_attempts: 3,
            retry_base_delay_ms: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    pub p_same_residence: f64,
    pub min_personas: usize,
    /// Persona categories drawn per episode.
    pub persona_categories: usize,
    pub min_sharing_turns: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            p_same_residence: crate::profile::DEFAULT_P_SAME_RESIDENCE,
            min_personas: crate::profile::DEFAULT_MIN_PERSONAS,
            persona_categories: 1,
            min_sharing_turns: crate::dialogue::DEFAULT_MIN_SHARING,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub lexicon: Option<PathBuf>,
    pub names: Option<PathBuf>,
    pub attribute_pool: Option<PathBuf>,
    /// Embedding file for the retrieval executor. Without one, the bundled
    /// caption corpus is embedded at startup.
    pub embeddings: Option<PathBuf>,
    /// Directory of image files named by embedding id.
    pub image_dir: Option<PathBuf>,
    pub embed_dim: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            lexicon: None,
            names: None,
            attribute_pool: None,
            embeddings: None,
            image_dir: None,
            embed_dim: crate::retrieval::DEFAULT_HASH_DIM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub episodes: usize,
    /// Episode worker threads.
    pub workers: usize,
    pub output: PathBuf,
    pub backends: BackendConfig,
    /// Per-step overrides of the sampling settings table.
    pub settings: BTreeMap<StepId, GenSettings>,
    pub sampling: SamplingConfig,
    pub filter: FilterConfig,
    pub data: DataConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            episodes: 0,
            workers: 4,
            output: PathBuf::from("episodes.jsonl"),
            backends: BackendConfig::default(),
            settings: BTreeMap::new(),
            sampling: SamplingConfig::default(),
            filter: FilterConfig::default(),
            data: DataConfig::default(),
        }
    }
}

/// Replaces every `${NAME}` with the variable's value.
pub fn interpolate(text: &str, lookup: &dyn Fn(&str) -> Option<String>) -> Result<String, ConfigError> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after
            .find('}')
            .ok_or_else(|| ConfigError::Syntax(format!("unterminated `${{` in `{text}`")))?;
        let name = &after[..end];
        out.push_str(&lookup(name).ok_or_else(|| ConfigError::MissingEnv(name.to_string()))?);
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

fn interpolate_value(value: &mut toml::Value, lookup: &dyn Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
    match value {
        toml::Value::String(s) => *s = interpolate(s, lookup)?,
        toml::Value::Array(items) => {
            for item in items {
                interpolate_value(item, lookup)?;
            }
        }
        toml::Value::Table(table) => {
            for (_, item) in table.iter_mut() {
                interpolate_value(item, lookup)?;
            }
        }
        _ => {}
    }
    Ok(())
}

fn env_lookup(name: &str) -> Option<String> {
    std::env::var(name).ok()
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Self::from_toml_with(text, &env_lookup)
    }

    /// Parses, interpolates, fills endpoints from the environment and
    /// validates.
    pub fn from_toml_with(text: &str, lookup: &dyn Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let mut value: toml::Value = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        interpolate_value(&mut value, lookup)?;
        let mut config: PipelineConfig = value.try_into().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        config.fill_from_env(lookup);
        config.validate()?;
        Ok(config)
    }

    /// Unset endpoints and the token fall back to their environment
    /// variables.
    pub fn fill_from_env(&mut self, lookup: &dyn Fn(&str) -> Option<String>) {
        let b = &mut self.backends;
        for (slot, var) in [
            (&mut b.chat_endpoint, ENV_CHAT_ENDPOINT),
            (&mut b.chat_token, ENV_CHAT_TOKEN),
            (&mut b.t2i_endpoint, ENV_T2I_ENDPOINT),
            (&mut b.embed_endpoint, ENV_EMBED_ENDPOINT),
            (&mut b.search_endpoint, ENV_SEARCH_ENDPOINT),
        ] {
            if slot.is_none() {
                *slot = lookup(var).filter(|v| !v.is_empty());
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |key: &str, detail: String| ConfigError::Invalid {
            key: key.to_string(),
            detail,
        };
        if !self.backends.mock && self.backends.chat_endpoint.is_none() {
            return Err(ConfigError::MissingEndpoint("chat"));
        }
        if self.workers == 0 {
            return Err(invalid("workers", "must be at least 1".into()));
        }
        if self.backends.max_concurrent_requests == 0 {
            return Err(invalid("backends.max_concurrent_requests", "must be at least 1".into()));
        }
        if self.backends.executor_concurrency == 0 {
            return Err(invalid("backends.executor_concurrency", "must be at least 1".into()));
        }
        if self.backends.retry_attempts == 0 {
            return Err(invalid("backends.retry_attempts", "must be at least 1".into()));
        }
        for (step, settings) in &self.settings {
            settings.validate().map_err(|d| invalid(&format!("settings.{}", step.as_str()), d))?;
        }
        let p = self.sampling.p_same_residence;
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid("sampling.p_same_residence", format!("{p} is outside [0, 1]")));
        }
        if self.sampling.persona_categories == 0 {
            return Err(invalid("sampling.persona_categories", "must be at least 1".into()));
        }
        let f = &self.filter;
        if f.min_sessions > f.max_sessions {
            return Err(invalid("filter.min_sessions", "exceeds filter.max_sessions".into()));
        }
        if !f.alignment_threshold.is_finite() {
            return Err(invalid("filter.alignment_threshold", "must be finite".into()));
        }
        if self.data.embed_dim == 0 {
            return Err(invalid("data.embed_dim", "must be positive".into()));
        }
        Ok(())
    }

    /// Settings table with the configured overrides applied.
    pub fn settings_table(&self) -> SettingsTable {
        let mut table = SettingsTable::default();
        for (step, settings) in &self.settings {
            table.set(*step, *settings).expect("validated");
        }
        table
    }

    /// SHA-256 over the canonical JSON form with the token removed.
    pub fn hash(&self) -> String {
        let mut redacted = self.clone();
        redacted.backends.chat_token = None;
        let json = serde_json::to_vec(&redacted).expect("config serialization is infallible");
        hex::encode(Sha256::digest(json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_env(_: &str) -> Option<String> {
        None
    }

    #[test]
    fn interpolation() {
        let lookup = |n: &str| (n == "HOST").then(|| "example.org".to_string());
        assert_eq!(interpolate("https://${HOST}/v1", &lookup).unwrap(), "https://example.org/v1");
        assert!(matches!(interpolate("${NOPE}", &lookup), Err(ConfigError::MissingEnv(n)) if n == "NOPE"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = PipelineConfig::from_toml_with("seed = 1\nbogus = 2\n[backends]\nmock = true\n", &no_env).unwrap_err();
        assert!(matches!(err, ConfigError::Syntax(_)), "{err}");
        let err = PipelineConfig::from_toml_with("[backends]\nmock = true\nendpoint = 1\n", &no_env).unwrap_err();
        assert!(matches!(err, ConfigError::Syntax(_)), "{err}");
    }

    #[test]
    fn live_mode_needs_a_chat_endpoint() {
        let err = PipelineConfig::from_toml_with("seed = 1\n", &no_env).unwrap_err();
        assert!(matches!(err, ConfigError::MissingEndpoint("chat")));
        let env = |n: &str| (n == ENV_CHAT_ENDPOINT).then(|| "http://localhost:1".to_string());
        let config = PipelineConfig::from_toml_with("seed = 1\n", &env).unwrap();
        assert_eq!(config.backends.chat_endpoint.as_deref(), Some("http://localhost:1"));
    }

    #[test]
    fn settings_overrides_are_validated() {
        let ok = "[backends]\nmock = true\n[settings.dialogue]\ntemperature = 0.5\ntop_p = 1\nfrequency_penalty = 0\npresence_penalty = 0\nmax_tokens = 100\n";
        let config = PipelineConfig::from_toml_with(ok, &no_env).unwrap();
        assert_eq!(config.settings_table().get(StepId::Dialogue).temperature, 0.5);
        let bad = ok.replace("temperature = 0.5", "temperature = 5");
        assert!(matches!(PipelineConfig::from_toml_with(&bad, &no_env), Err(ConfigError::Invalid { .. })));
    }

    #[test]
    fn hash_ignores_the_token() {
        let mut a = PipelineConfig::default();
        a.backends.mock = true;
        let mut b = a.clone();
        b.backends.chat_token = Some("secret".into());
        assert_eq!(a.hash(), b.hash());
        b.seed = 9;
        assert_ne!(a.hash(), b.hash());
    }
}
