//! Service configuration.
//!
//! Each setting is taken from the first source that defines it: command-line
//! flag, `GAZEFORGE_<KEY>` environment variable, config file, built-in
//! default. The config file holds one `key = value` pair per line; blank
//! lines and lines starting with `#` are ignored, values may be wrapped in
//! double quotes, and unknown or repeated keys are errors.

use std::collections::BTreeMap;
use std::path::PathBuf;

use gazeforge_gateway::BackendConfig;

use crate::error::{AppError, Result};

/// Recognised keys. The environment name is `GAZEFORGE_` plus the key in
/// upper case, e.g. `GAZEFORGE_DATA_DIR`.
pub const KEYS: &[&str] = &[
    "host",
    "port",
    "data_dir",
    "index",
    "embedder",
    "backend",
    "backend_timeout_ms",
    "cors_origin",
];

pub const DEFAULT_EMBEDDER: &str = "hashed-512";

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub host: String,
    pub port: u16,
    /// Session persistence directory; sessions live in memory only when unset.
    pub data_dir: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub embedder: String,
    pub backend: BackendConfig,
    /// Allowed browser origin, or `*`.
    pub cors_origin: String,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            data_dir: None,
            index: None,
            embedder: DEFAULT_EMBEDDER.into(),
            backend: BackendConfig::default(),
            cors_origin: "http://localhost:5173".into(),
        }
    }
}

pub fn env_name(key: &str) -> String {
    format!("GAZEFORGE_{}", key.to_ascii_uppercase())
}

/// Parses the config-file grammar into key/value pairs.
pub fn parse_file(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(AppError::usage(format!("config line {}: expected key = value", i + 1)));
        };
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(AppError::usage(format!("config line {}: unknown key {key:?}", i + 1)));
        }
        let value = value.trim();
        let value = value
            .strip_prefix('"')
            .and_then(|v| v.strip_suffix('"'))
            .unwrap_or(value);
        if out.insert(key.to_string(), value.to_string()).is_some() {
            return Err(AppError::usage(format!("config line {}: duplicate key {key:?}", i + 1)));
        }
    }
    Ok(out)
}

impl Config {
    /// Layers `flags`, then `env`, then `file` over the defaults.
    pub fn resolve(
        flags: &BTreeMap<String, String>,
        env: impl Fn(&str) -> Option<String>,
        file: Option<&str>,
    ) -> Result<Self> {
        let file = match file {
            Some(text) => parse_file(text)?,
            None => BTreeMap::new(),
        };
        let lookup = |key: &str| -> Option<String> {
            flags
                .get(key)
                .cloned()
                .or_else(|| env(&env_name(key)))
                .or_else(|| file.get(key).cloned())
        };
        let mut c = Config::default();
        if let Some(v) = lookup("host") {
            c.host = v;
        }
        if let Some(v) = lookup("port") {
            c.port = v.parse().map_err(|_| AppError::usage(format!("port: not a port number: {v:?}")))?;
        }
        c.data_dir = lookup("data_dir").filter(|v| !v.is_empty()).map(PathBuf::from);
        c.index = lookup("index").filter(|v| !v.is_empty()).map(PathBuf::from);
        if let Some(v) = lookup("embedder") {
            c.embedder = v;
        }
        if let Some(v) = lookup("backend") {
            c.backend.endpoint = v;
        }
        if let Some(v) = lookup("backend_timeout_ms") {
            c.backend.timeout_ms = v
                .parse()
                .map_err(|_| AppError::usage(format!("backend_timeout_ms: not an integer: {v:?}")))?;
        }
        if let Some(v) = lookup("cors_origin") {
            c.cors_origin = v;
        }
        Ok(c)
    }

    /// Reads the config file named by `path` (or `GAZEFORGE_CONFIG`) and the
    /// process environment.
    pub fn load(flags: &BTreeMap<String, String>, path: Option<PathBuf>) -> Result<Self> {
        let path = path.or_else(|| std::env::var_os("GAZEFORGE_CONFIG").map(PathBuf::from));
        let text = match &path {
            Some(p) => Some(
                std::fs::read_to_string(p).map_err(|e| AppError::usage(format!("config file {}: {e}", p.display())))?,
            ),
            None => None,
        };
        Self::resolve(flags, |k| std::env::var(k).ok(), text.as_deref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn precedence_is_flag_env_file_default() {
        let file = "port = 9000\nhost = \"0.0.0.0\"\n# comment\n\nembedder = hashed-64\n";
        let env = |k: &str| match k {
            "GAZEFORGE_PORT" => Some("9100".to_string()),
            "GAZEFORGE_EMBEDDER" => Some("hashed-128".to_string()),
            _ => None,
        };
        let c = Config::resolve(&flags(&[("port", "9200")]), env, Some(file)).unwrap();
        assert_eq!(c.port, 9200);
        assert_eq!(c.embedder, "hashed-128");
        assert_eq!(c.host, "0.0.0.0");
        assert_eq!(c.cors_origin, Config::default().cors_origin);
    }

    #[test]
    fn file_grammar_errors() {
        assert!(parse_file("port 9000").is_err());
        assert!(parse_file("colour = red").is_err());
        assert!(parse_file("port = 1\nport = 2").is_err());
        assert!(Config::resolve(&flags(&[("port", "http")]), |_| None, None).is_err());
    }
}
