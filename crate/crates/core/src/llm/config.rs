//! Settings for the LLM backend.
//!
//! Settings are dotted keys such as `llm.provider`. They are read from a
//! TOML file, then overridden by `LITTERBOX_*` environment variables
//! (`llm.openai.api-key` becomes `LITTERBOX_LLM_OPENAI_API_KEY`), then by
//! explicit values such as command line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use super::prompts::{PromptProvider, TemplatePrompts};
use super::provider::{GenParams, LlmProvider, MockProvider, OpenAiProvider};
use super::Assistant;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
    #[error("invalid value `{value}` for `{key}`: {message}")]
    Invalid { key: String, value: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProviderKind {
    OpenAi,
    SelfHosted,
    Mock,
}

impl ProviderKind {
    pub fn name(self) -> &'static str {
        match self {
            ProviderKind::OpenAi => "openai",
            ProviderKind::SelfHosted => "selfhosted",
            ProviderKind::Mock => "mock",
        }
    }
}

/// Every known key with its default value.
pub const DEFAULTS: &[(&str, &str)] = &[
    ("llm.provider", "openai"),
    ("llm.base-url", ""),
    ("llm.model", "gpt-4.1"),
    ("llm.openai.api-key", ""),
    ("llm.temperature", "0"),
    ("llm.prose-temperature", "0.7"),
    ("llm.max-tokens", ""),
    ("llm.language", "en"),
    ("llm.prompts", ""),
    ("llm.mock-dir", ""),
];

/// Flat key/value settings.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LlmConfig {
    values: BTreeMap<String, String>,
}

impl LlmConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Read {
            path: "<config>".to_string(),
            message: e.to_string(),
        })?;
        let mut config = Self::new();
        flatten("", &toml::Value::Table(table), &mut config.values);
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            ConfigError::Read { message, .. } => ConfigError::Read {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    /// Applies `LITTERBOX_*` variables for every known key.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) {
        let vars: BTreeMap<String, String> = vars.into_iter().collect();
        let keys: Vec<&str> = DEFAULTS.iter().map(|(k, _)| *k).chain(EXTRA_ENV_KEYS.iter().copied()).collect();
        for key in keys {
            if let Some(value) = vars.get(&env_name(key)) {
                self.set(key, value);
            }
        }
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.values.insert(key.to_string(), value.to_string());
    }

    /// The value for `key`, falling back to its default. Empty values
    /// count as unset.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.values
            .get(key)
            .map(String::as_str)
            .or_else(|| DEFAULTS.iter().find(|(k, _)| *k == key).map(|(_, v)| *v))
            .filter(|v| !v.is_empty())
    }

    pub fn provider_kind(&self) -> Result<ProviderKind, ConfigError> {
        match self.get("llm.provider").unwrap_or("openai").to_ascii_lowercase().as_str() {
            "openai" => Ok(ProviderKind::OpenAi),
            "selfhosted" | "self-hosted" | "ollama" => Ok(ProviderKind::SelfHosted),
            "mock" => Ok(ProviderKind::Mock),
            other => Err(invalid("llm.provider", other, "expected openai, selfhosted or mock")),
        }
    }

    pub fn model(&self) -> &str {
        self.get("llm.model").unwrap_or("gpt-4.1")
    }

    pub fn language(&self) -> &str {
        self.get("llm.language").unwrap_or("en")
    }

    fn number<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| invalid(key, v, "not a number")),
        }
    }

    pub fn build_provider(&self) -> Result<Arc<dyn LlmProvider>, ConfigError> {
        let kind = self.provider_kind()?;
        let base = self.get("llm.base-url");
        Ok(match kind {
            ProviderKind::Mock => match self.get("llm.mock-dir") {
                Some(dir) => Arc::new(MockProvider::from_dir(PathBuf::from(dir))),
                None => Arc::new(MockProvider::scripted(Vec::<String>::new())),
            },
            ProviderKind::OpenAi => Arc::new(OpenAiProvider::new(
                kind.name(),
                base.unwrap_or(OpenAiProvider::OPENAI_URL),
                self.get("llm.openai.api-key").map(str::to_string),
            )),
            ProviderKind::SelfHosted => Arc::new(OpenAiProvider::new(
                kind.name(),
                base.unwrap_or(OpenAiProvider::SELF_HOSTED_URL),
                self.get("llm.openai.api-key").map(str::to_string),
            )),
        })
    }

    pub fn build_prompts(&self) -> Result<Arc<dyn PromptProvider>, ConfigError> {
        match self.get("llm.prompts") {
            None | Some("default") => Ok(Arc::new(TemplatePrompts::default())),
            Some(dir) => TemplatePrompts::from_dir(Path::new(dir))
                .map(|p| Arc::new(p) as Arc<dyn PromptProvider>)
                .map_err(|e| invalid("llm.prompts", dir, &e.to_string())),
        }
    }

    /// An assistant for these settings, with `provider` in place of the
    /// configured one when given.
    pub fn build_assistant(&self, provider: Option<Arc<dyn LlmProvider>>) -> Result<Assistant, ConfigError> {
        let provider = match provider {
            Some(p) => p,
            None => self.build_provider()?,
        };
        let mut assistant = Assistant::new(provider, self.build_prompts()?).with_language(self.language());
        let max_tokens = self.number::<u32>("llm.max-tokens")?;
        assistant.code_params = GenParams {
            model: self.model().to_string(),
            temperature: self.number("llm.temperature")?.unwrap_or(0.0),
            max_tokens,
        };
        assistant.prose_params = GenParams {
            model: self.model().to_string(),
            temperature: self.number("llm.prose-temperature")?.unwrap_or(0.7),
            max_tokens,
        };
        Ok(assistant)
    }

    /// Every key that has a value, including other sections of the file.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

/// Keys outside the `llm` section that callers read from the same file.
const EXTRA_ENV_KEYS: &[&str] = &[
    "server.port",
    "server.max-upload-bytes",
    "server.session-ttl",
    "server.history-depth",
    "server.cors-origin",
];

pub fn env_name(key: &str) -> String {
    format!("LITTERBOX_{}", key.to_ascii_uppercase().replace(['.', '-'], "_"))
}

fn invalid(key: &str, value: &str, message: &str) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        value: value.to_string(),
        message: message.to_string(),
    }
}

fn flatten(prefix: &str, value: &toml::Value, out: &mut BTreeMap<String, String>) {
    match value {
        toml::Value::Table(table) => {
            for (k, v) in table {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        toml::Value::String(s) => {
            out.insert(prefix.to_string(), s.clone());
        }
        other => {
            out.insert(prefix.to_string(), other.to_string());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_env_then_explicit() {
        let mut c = LlmConfig::from_toml_str("[llm]\nprovider = \"selfhosted\"\nmodel = \"llama3\"\ntemperature = 0.2\n").unwrap();
        assert_eq!(c.provider_kind().unwrap(), ProviderKind::SelfHosted);
        assert_eq!(c.get("llm.temperature"), Some("0.2"));
        c.apply_env([("LITTERBOX_LLM_MODEL".to_string(), "qwen".to_string()), ("OTHER".into(), "x".into())]);
        assert_eq!(c.model(), "qwen");
        c.set("llm.model", "flag");
        assert_eq!(c.model(), "flag");
    }

    #[test]
    fn dotted_keys_and_defaults() {
        let c = LlmConfig::from_toml_str("llm.openai.api-key = \"KEY\"\nserver.port = 9000\n").unwrap();
        assert_eq!(c.get("llm.openai.api-key"), Some("KEY"));
        assert_eq!(c.get("server.port"), Some("9000"));
        assert_eq!(c.language(), "en");
        assert_eq!(c.provider_kind().unwrap(), ProviderKind::OpenAi);
    }

    #[test]
    fn env_names() {
        assert_eq!(env_name("llm.openai.api-key"), "LITTERBOX_LLM_OPENAI_API_KEY");
    }

    #[test]
    fn unknown_provider_is_an_error() {
        let mut c = LlmConfig::new();
        c.set("llm.provider", "bogus");
        assert!(matches!(c.provider_kind(), Err(ConfigError::Invalid { .. })));
        assert!(c.build_assistant(None).is_err());
    }

    #[test]
    fn bad_numbers_are_reported() {
        let mut c = LlmConfig::new();
        c.set("llm.provider", "mock");
        c.set("llm.temperature", "warm");
        assert!(c.build_assistant(None).is_err());
        c.set("llm.temperature", "0.5");
        let a = c.build_assistant(None).unwrap();
        assert_eq!(a.code_params.temperature, 0.5);
        assert_eq!(a.provider().name(), "mock");
    }
}
