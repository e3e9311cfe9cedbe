//! CLI configuration: flags override environment, environment overrides the
//! config file, the file overrides built-in defaults.
//!
//! Default file: `$XDG_CONFIG_HOME/riskscope/config.toml`, falling back to
//! `~/.config/riskscope/config.toml`. `RISKSCOPE_CONFIG` or `--config` names
//! another file. The API key is never stored in the file itself; the file
//! names an environment variable through `api_key_env`.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;

use crate::gateway::{Mode, RetryPolicy};

pub const ENV_ENDPOINT: &str = "RISKSCOPE_ENDPOINT";
pub const ENV_API_KEY: &str = "RISKSCOPE_API_KEY";
pub const ENV_MODEL: &str = "RISKSCOPE_MODEL";
pub const ENV_STORE: &str = "RISKSCOPE_STORE";
pub const ENV_TEMPERATURE: &str = "RISKSCOPE_TEMPERATURE";
pub const ENV_RETRIES: &str = "RISKSCOPE_RETRIES";
pub const ENV_TIMEOUT: &str = "RISKSCOPE_TIMEOUT";
pub const ENV_MODE: &str = "RISKSCOPE_MODE";
pub const ENV_CONFIG: &str = "RISKSCOPE_CONFIG";

pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";
pub const DEFAULT_MODEL: &str = "gpt-4";
pub const DEFAULT_STORE: &str = "riskscope-store";
pub const DEFAULT_TIMEOUT_SECS: u64 = 120;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config {path}: {reason}")]
    Syntax { path: PathBuf, reason: String },
    #[error("{name}: {reason}")]
    Value { name: &'static str, reason: String },
}

/// Contents of the config file. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub endpoint: Option<String>,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub store: Option<PathBuf>,
    pub mode: Option<Mode>,
    pub retries: Option<u32>,
    pub timeout_secs: Option<u64>,
    /// Extra read-only transcript directories for Replay mode.
    #[serde(default)]
    pub transcript_sources: Vec<PathBuf>,
}

impl FileConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Syntax { path: path.to_path_buf(), reason: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text, path)
    }
}

/// Values given on the command line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFlags {
    pub config: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub store: Option<PathBuf>,
    pub mode: Option<Mode>,
    pub retries: Option<u32>,
    pub timeout_secs: Option<u64>,
    pub transcript_sources: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub model: String,
    /// Generation temperature; `None` keeps the stage default.
    pub temperature: Option<f64>,
    pub store: PathBuf,
    pub mode: Mode,
    pub retry: RetryPolicy,
    pub timeout: Duration,
    pub transcript_sources: Vec<PathBuf>,
}

/// `$XDG_CONFIG_HOME/riskscope/config.toml` or `~/.config/riskscope/config.toml`.
pub fn default_config_path(env: &dyn Fn(&str) -> Option<String>) -> Option<PathBuf> {
    if let Some(x) = env("XDG_CONFIG_HOME").filter(|s| !s.is_empty()) {
        return Some(PathBuf::from(x).join("riskscope").join("config.toml"));
    }
    env("HOME").filter(|s| !s.is_empty()).map(|h| PathBuf::from(h).join(".config").join("riskscope").join("config.toml"))
}

fn parsed<T: std::str::FromStr>(env: &dyn Fn(&str) -> Option<String>, name: &'static str) -> Result<Option<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    match env(name) {
        None => Ok(None),
        Some(s) if s.trim().is_empty() => Ok(None),
        Some(s) => s.trim().parse().map(Some).map_err(|e: T::Err| ConfigError::Value { name, reason: e.to_string() }),
    }
}

impl CliConfig {
    /// Resolves flags, then `env`, then the config file. An explicitly named
    /// config file must exist; the default one may be absent.
    pub fn resolve(flags: &ConfigFlags, env: &dyn Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let explicit = flags.config.clone().or_else(|| env(ENV_CONFIG).filter(|s| !s.is_empty()).map(PathBuf::from));
        let file = match explicit {
            Some(p) => FileConfig::load(&p)?,
            None => match default_config_path(env) {
                Some(p) if p.is_file() => FileConfig::load(&p)?,
                _ => FileConfig::default(),
            },
        };
        Self::merge(flags, env, &file)
    }

    pub fn merge(flags: &ConfigFlags, env: &dyn Fn(&str) -> Option<String>, file: &FileConfig) -> Result<Self, ConfigError> {
        let s = |name: &str| env(name).filter(|v| !v.trim().is_empty());
        let api_key = s(ENV_API_KEY).or_else(|| file.api_key_env.as_deref().and_then(s));
        let temperature = flags.temperature.or(parsed(env, ENV_TEMPERATURE)?).or(file.temperature);
        if let Some(t) = temperature {
            if !(0.0..=2.0).contains(&t) {
                return Err(ConfigError::Value { name: "temperature", reason: format!("{t} is outside [0, 2]") });
            }
        }
        let retries = flags.retries.or(parsed(env, ENV_RETRIES)?).or(file.retries);
        let timeout_secs = flags.timeout_secs.or(parsed(env, ENV_TIMEOUT)?).or(file.timeout_secs).unwrap_or(DEFAULT_TIMEOUT_SECS);
        let mut retry = RetryPolicy::default();
        if let Some(r) = retries {
            retry.max_retries = r;
        }
        let mut transcript_sources = flags.transcript_sources.clone();
        transcript_sources.extend(file.transcript_sources.iter().cloned());
        Ok(CliConfig {
            endpoint: flags.endpoint.clone().or_else(|| s(ENV_ENDPOINT)).or_else(|| file.endpoint.clone()).unwrap_or_else(|| DEFAULT_ENDPOINT.into()),
            api_key,
            model: flags.model.clone().or_else(|| s(ENV_MODEL)).or_else(|| file.model.clone()).unwrap_or_else(|| DEFAULT_MODEL.into()),
            temperature,
            store: flags.store.clone().or_else(|| s(ENV_STORE).map(PathBuf::from)).or_else(|| file.store.clone()).unwrap_or_else(|| DEFAULT_STORE.into()),
            mode: match flags.mode {
                Some(m) => m,
                None => parsed(env, ENV_MODE)?.or(file.mode).unwrap_or_default(),
            },
            retry,
            timeout: Duration::from_secs(timeout_secs),
            transcript_sources,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn env_of(pairs: &[(&str, &str)]) -> impl Fn(&str) -> Option<String> {
        let m: HashMap<String, String> = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        move |k| m.get(k).cloned()
    }

    #[test]
    fn flags_beat_env_beat_file() {
        let file = FileConfig::parse(
            "model = \"file-model\"\nendpoint = \"http://file\"\nstore = \"/file\"\ntemperature = 0.2\nmode = \"live\"\n",
            Path::new("c.toml"),
        )
        .unwrap();
        let env = env_of(&[(ENV_MODEL, "env-model"), (ENV_STORE, "/env")]);
        let flags = ConfigFlags { model: Some("flag-model".into()), ..Default::default() };
        let c = CliConfig::merge(&flags, &env, &file).unwrap();
        assert_eq!(c.model, "flag-model");
        assert_eq!(c.store, PathBuf::from("/env"));
        assert_eq!(c.endpoint, "http://file");
        assert_eq!(c.temperature, Some(0.2));
        assert_eq!(c.mode, Mode::Live);

        let c = CliConfig::merge(&ConfigFlags::default(), &env_of(&[]), &FileConfig::default()).unwrap();
        assert_eq!(c.model, DEFAULT_MODEL);
        assert_eq!(c.mode, Mode::Replay);
        assert_eq!(c.timeout, Duration::from_secs(DEFAULT_TIMEOUT_SECS));
    }

    #[test]
    fn api_key_by_reference() {
        let file = FileConfig { api_key_env: Some("MY_KEY".into()), ..Default::default() };
        let c = CliConfig::merge(&ConfigFlags::default(), &env_of(&[("MY_KEY", "k1")]), &file).unwrap();
        assert_eq!(c.api_key.as_deref(), Some("k1"));
        let c = CliConfig::merge(&ConfigFlags::default(), &env_of(&[("MY_KEY", "k1"), (ENV_API_KEY, "k2")]), &file).unwrap();
        assert_eq!(c.api_key.as_deref(), Some("k2"));
    }

    #[test]
    fn bad_values_are_reported() {
        assert!(FileConfig::parse("api_key = \"secret\"\n", Path::new("c.toml")).is_err());
        let e = CliConfig::merge(&ConfigFlags::default(), &env_of(&[(ENV_RETRIES, "many")]), &FileConfig::default()).unwrap_err();
        assert!(matches!(e, ConfigError::Value { name: ENV_RETRIES, .. }));
        let flags = ConfigFlags { temperature: Some(3.0), ..Default::default() };
        assert!(CliConfig::merge(&flags, &env_of(&[]), &FileConfig::default()).is_err());
    }

    #[test]
    fn default_path_and_explicit_file() {
        let p = default_config_path(&env_of(&[("HOME", "/home/u")])).unwrap();
        assert_eq!(p, PathBuf::from("/home/u/.config/riskscope/config.toml"));
        let p = default_config_path(&env_of(&[("HOME", "/home/u"), ("XDG_CONFIG_HOME", "/x")])).unwrap();
        assert_eq!(p, PathBuf::from("/x/riskscope/config.toml"));

        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("c.toml");
        std::fs::write(&f, "model = \"m2\"\n").unwrap();
        let c = CliConfig::resolve(&ConfigFlags::default(), &env_of(&[(ENV_CONFIG, f.to_str().unwrap())])).unwrap();
        assert_eq!(c.model, "m2");
        let missing = ConfigFlags { config: Some(dir.path().join("nope.toml")), ..Default::default() };
        assert!(matches!(CliConfig::resolve(&missing, &env_of(&[])), Err(ConfigError::Io { .. })));
    }
}
