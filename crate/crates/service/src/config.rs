//! `key = value` configuration with `TPLRAG_*` environment overrides, plus
//! construction of the configured embedder and adapter.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;
use tplrag_core::dialogue::{LlmAdapter, RemoteAdapter, RemoteAdapterConfig, DEFAULT_TURN_CAP};
use tplrag_core::embedding::{HttpEmbedder, RemoteEmbedderConfig, DEFAULT_DIM};
use tplrag_core::transport::HttpTransport;
use tplrag_core::{Embedder, HashingEmbedder, Rates, RuleTable, ScriptedAdapter};

/// Environment variable holding the bearer token for remote backends.
pub const API_KEY_ENV: &str = "TPLRAG_API_KEY";
const ENV_PREFIX: &str = "TPLRAG_";

const KEYS: &[&str] = &[
    "listen",
    "catalog_dir",
    "ingest_root",
    "event_log",
    "embedder",
    "embedder_url",
    "embedder_model",
    "embedder_dim",
    "adapter",
    "rules_path",
    "llm_base_url",
    "llm_model",
    "llm_max_attempts",
    "http_timeout_secs",
    "rate_input_per_million",
    "rate_output_per_million",
    "turn_cap",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{path}:{line}: expected `key = value`")]
    Syntax { path: String, line: usize },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("`{0}` is required for the selected backend")]
    Missing(String),
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum EmbedderChoice {
    Reference { dim: usize },
    Remote(RemoteEmbedderConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub enum AdapterChoice {
    Scripted { rules: Option<PathBuf> },
    Remote(RemoteAdapterConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub listen: String,
    pub catalog_dir: Option<PathBuf>,
    /// Admin ingest only accepts directories below this root when set.
    pub ingest_root: Option<PathBuf>,
    pub event_log: Option<PathBuf>,
    pub embedder: EmbedderChoice,
    pub adapter: AdapterChoice,
    pub http_timeout: Duration,
    pub rates: Rates,
    pub turn_cap: u32,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: "127.0.0.1:8080".into(),
            catalog_dir: None,
            ingest_root: None,
            event_log: None,
            embedder: EmbedderChoice::Reference { dim: DEFAULT_DIM },
            adapter: AdapterChoice::Scripted { rules: None },
            http_timeout: Duration::from_secs(30),
            rates: Rates::default(),
            turn_cap: DEFAULT_TURN_CAP,
        }
    }
}

/// Parse `key = value` lines; `#` starts a comment.
pub fn parse_kv(text: &str, path: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax {
            path: path.to_string(),
            line: i + 1,
        })?;
        let key = k.trim().to_lowercase();
        if !KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey(key));
        }
        out.insert(key, v.trim().trim_matches('"').to_string());
    }
    Ok(out)
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e: T::Err| ConfigError::Invalid {
        key: key.to_string(),
        reason: e.to_string(),
    })
}

impl ServiceConfig {
    /// Layer: defaults, then the optional file, then `TPLRAG_<KEY>` variables.
    pub fn load(file: Option<&Path>, env: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        Self::load_with(file, env, &BTreeMap::new())
    }

    /// As [`ServiceConfig::load`], with `overrides` (e.g. command-line flags)
    /// applied last.
    pub fn load_with(
        file: Option<&Path>,
        env: impl Fn(&str) -> Option<String>,
        overrides: &BTreeMap<String, String>,
    ) -> Result<Self, ConfigError> {
        let mut kv = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| ConfigError::Io {
                    path: p.display().to_string(),
                    reason: e.to_string(),
                })?;
                parse_kv(&text, &p.display().to_string())?
            }
            None => BTreeMap::new(),
        };
        for key in KEYS {
            if let Some(v) = env(&format!("{ENV_PREFIX}{}", key.to_uppercase())) {
                kv.insert(key.to_string(), v);
            }
        }
        for (k, v) in overrides {
            if !KEYS.contains(&k.as_str()) {
                return Err(ConfigError::UnknownKey(k.clone()));
            }
            kv.insert(k.clone(), v.clone());
        }
        Self::from_map(&kv, env(API_KEY_ENV))
    }

    pub fn from_map(kv: &BTreeMap<String, String>, api_key: Option<String>) -> Result<Self, ConfigError> {
        let mut c = ServiceConfig::default();
        let get = |k: &str| kv.get(k).map(String::as_str).filter(|v| !v.is_empty());
        let required = |k: &str| get(k).map(str::to_string).ok_or(ConfigError::Missing(k.into()));

        if let Some(v) = get("listen") {
            c.listen = v.to_string();
        }
        c.catalog_dir = get("catalog_dir").map(PathBuf::from);
        c.ingest_root = get("ingest_root").map(PathBuf::from);
        c.event_log = get("event_log").map(PathBuf::from);
        if let Some(v) = get("http_timeout_secs") {
            c.http_timeout = Duration::from_secs(parse_num("http_timeout_secs", v)?);
        }
        if let Some(v) = get("rate_input_per_million") {
            c.rates.input_per_million = parse_num("rate_input_per_million", v)?;
        }
        if let Some(v) = get("rate_output_per_million") {
            c.rates.output_per_million = parse_num("rate_output_per_million", v)?;
        }
        if c.rates.input_per_million < 0.0 || c.rates.output_per_million < 0.0 {
            return Err(ConfigError::Invalid {
                key: "rate".into(),
                reason: "rates must not be negative".into(),
            });
        }
        if let Some(v) = get("turn_cap") {
            c.turn_cap = parse_num("turn_cap", v)?;
        }
        let dim = match get("embedder_dim") {
            Some(v) => parse_num("embedder_dim", v)?,
            None => DEFAULT_DIM,
        };
        c.embedder = match get("embedder").unwrap_or("reference") {
            "reference" => EmbedderChoice::Reference { dim },
            "remote" => EmbedderChoice::Remote(RemoteEmbedderConfig {
                url: required("embedder_url")?,
                model: required("embedder_model")?,
                dim,
                api_key: api_key.clone(),
            }),
            other => {
                return Err(ConfigError::Invalid {
                    key: "embedder".into(),
                    reason: format!("`{other}` is not one of reference, remote"),
                })
            }
        };
        c.adapter = match get("adapter").unwrap_or("scripted") {
            "scripted" => AdapterChoice::Scripted {
                rules: get("rules_path").map(PathBuf::from),
            },
            "remote" => AdapterChoice::Remote(RemoteAdapterConfig {
                base_url: required("llm_base_url")?,
                model: required("llm_model")?,
                api_key,
                max_attempts: match get("llm_max_attempts") {
                    Some(v) => parse_num("llm_max_attempts", v)?,
                    None => 3,
                },
            }),
            other => {
                return Err(ConfigError::Invalid {
                    key: "adapter".into(),
                    reason: format!("`{other}` is not one of scripted, remote"),
                })
            }
        };
        Ok(c)
    }

    pub fn build_embedder(&self) -> Result<Arc<dyn Embedder>, ConfigError> {
        Ok(match &self.embedder {
            EmbedderChoice::Reference { dim } => {
                if *dim == 0 {
                    return Err(ConfigError::Invalid {
                        key: "embedder_dim".into(),
                        reason: "must be positive".into(),
                    });
                }
                Arc::new(HashingEmbedder::new(*dim))
            }
            EmbedderChoice::Remote(cfg) => Arc::new(HttpEmbedder::new(cfg.clone(), self.transport()?)),
        })
    }

    pub fn build_adapter(&self) -> Result<Arc<dyn LlmAdapter>, ConfigError> {
        Ok(match &self.adapter {
            AdapterChoice::Scripted { rules: None } => Arc::new(ScriptedAdapter::new(RuleTable::default())),
            AdapterChoice::Scripted { rules: Some(p) } => {
                let rules = RuleTable::load(p).map_err(|reason| ConfigError::Invalid {
                    key: "rules_path".into(),
                    reason,
                })?;
                Arc::new(ScriptedAdapter::new(rules))
            }
            AdapterChoice::Remote(cfg) => Arc::new(RemoteAdapter::new(cfg.clone(), self.transport()?)),
        })
    }

    fn transport(&self) -> Result<Arc<HttpTransport>, ConfigError> {
        HttpTransport::new(self.http_timeout)
            .map(Arc::new)
            .map_err(|e| ConfigError::Invalid {
                key: "http_timeout_secs".into(),
                reason: e.to_string(),
            })
    }
}
