use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::Value;

use crate::ham::BackendDescriptor;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("config {path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

/// Server configuration file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerConfig {
    pub bind_host: String,
    pub port: u16,
    pub backends: Vec<BackendDescriptor>,
    /// Manifest paths, resolved against the config file's directory.
    pub modules: Vec<PathBuf>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct RawConfig {
    bind_host: String,
    port: u64,
    backends: Vec<Value>,
    modules: Vec<PathBuf>,
}

impl ServerConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let err = |message: String| ConfigError {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(err)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, String> {
        let raw: RawConfig = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if !(1..=65535).contains(&raw.port) {
            return Err(format!("port {} is outside 1-65535", raw.port));
        }
        if raw.backends.is_empty() {
            return Err("at least one backend is required".into());
        }
        let backends = raw
            .backends
            .iter()
            .map(BackendDescriptor::from_json)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        Ok(ServerConfig {
            bind_host: raw.bind_host,
            port: raw.port as u16,
            backends,
            modules: raw.modules.into_iter().map(|m| base_dir.join(m)).collect(),
        })
    }
}
