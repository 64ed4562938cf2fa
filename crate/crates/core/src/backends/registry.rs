use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::noise::NoiseConfig;
use super::remote::RemoteConfig;
use crate::label::SentimentLabel;
use crate::prompting::{TokenBudget, DEFAULT_RESERVE_PER_POST, DEFAULT_RESPONSE_RESERVE, DEFAULT_SAFETY_MARGIN};

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid backend registry: {0}")]
    Parse(String),
    #[error("backend {backend_id}: {message}")]
    Invalid { backend_id: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendKind {
    RemoteHttp(RemoteConfig),
    Scripted { fixture: PathBuf },
    NoiseSim(NoiseConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendProfile {
    pub backend_id: String,
    pub model: Option<String>,
    pub kind: BackendKind,
    pub token_budget: TokenBudget,
    /// Vote weight used only by the weighted tie policy.
    pub weight: Option<f64>,
}

fn model_key(name: &str) -> String {
    name.to_lowercase().chars().filter(|c| c.is_ascii_alphanumeric() || *c == '.').collect()
}

/// Context window (tokens per input) of the five models studied.
pub fn default_context_limit(model: &str) -> Option<u64> {
    let key = model_key(model);
    let limit = if key.starts_with("gpt3.5") {
        16_384
    } else if key.starts_with("gpt4") {
        131_072
    } else if key.starts_with("dolly") {
        2_048
    } else if key.starts_with("palm") {
        8_192
    } else if key.starts_with("llama") {
        4_096
    } else {
        return None;
    };
    Some(limit)
}

/// The five remote profiles with their published context limits.
/// Credentials are read from the named environment variables at request
/// time.
pub fn default_profiles() -> Vec<BackendProfile> {
    let remote = |id: &str, model: &str, endpoint: &str, key_env: &str| {
        let limit = default_context_limit(model).expect("known model");
        BackendProfile {
            backend_id: id.to_string(),
            model: Some(model.to_string()),
            kind: BackendKind::RemoteHttp(RemoteConfig {
                endpoint: endpoint.to_string(),
                model: model.to_string(),
                api_key_env: Some(key_env.to_string()),
                min_interval: Duration::from_millis(200),
                timeout: Duration::from_secs(120),
            }),
            token_budget: TokenBudget::for_context(limit).expect("valid default budget"),
            weight: None,
        }
    };
    vec![
        remote("gpt-3.5", "gpt-3.5-turbo", "https://api.openai.com/v1/chat/completions", "OPENAI_API_KEY"),
        remote("gpt-4", "gpt-4", "https://api.openai.com/v1/chat/completions", "OPENAI_API_KEY"),
        remote("llama-2", "llama-2-70b-chat", "http://localhost:8000/v1/chat/completions", "LLAMA_API_KEY"),
        remote("palm-2", "palm-2-chat-bison", "http://localhost:8001/v1/chat/completions", "PALM_API_KEY"),
        remote("dolly-2", "dolly-v2-12b", "http://localhost:8002/v1/chat/completions", "DOLLY_API_KEY"),
    ]
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RawKind {
    RemoteHttp,
    Scripted,
    NoiseSim,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfile {
    id: String,
    kind: RawKind,
    model: Option<String>,
    #[serde(default = "enabled_default")]
    enabled: bool,
    context_limit: Option<u64>,
    response_reserve: Option<u64>,
    reserve_per_post: Option<u64>,
    safety_margin: Option<f64>,
    weight: Option<f64>,
    endpoint: Option<String>,
    api_key_env: Option<String>,
    min_interval_ms: Option<u64>,
    timeout_secs: Option<u64>,
    fixture: Option<PathBuf>,
    error_rate: Option<f64>,
    error_rates: Option<BTreeMap<SentimentLabel, f64>>,
    seed: Option<u64>,
}

fn enabled_default() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegistry {
    #[serde(default)]
    backend: Vec<RawProfile>,
}

impl RawProfile {
    fn into_profile(self, base_dir: &Path) -> Result<BackendProfile, RegistryError> {
        let invalid = |message: String| RegistryError::Invalid {
            backend_id: self.id.clone(),
            message,
        };
        let model_name = self.model.clone().unwrap_or_else(|| self.id.clone());
        let context_limit = self
            .context_limit
            .or_else(|| default_context_limit(&model_name))
            .ok_or_else(|| invalid(format!("no context_limit given and model {model_name:?} is not a known model")))?;
        let token_budget = TokenBudget::new(
            context_limit,
            self.response_reserve.unwrap_or(DEFAULT_RESPONSE_RESERVE),
            self.reserve_per_post.unwrap_or(DEFAULT_RESERVE_PER_POST),
            self.safety_margin.unwrap_or(DEFAULT_SAFETY_MARGIN),
        )
        .map_err(|e| invalid(e.to_string()))?;
        if let Some(w) = self.weight {
            if !(w.is_finite() && w >= 0.0) {
                return Err(invalid(format!("weight {w} must be a non-negative number")));
            }
        }
        let kind = match self.kind {
            RawKind::RemoteHttp => {
                let endpoint = self
                    .endpoint
                    .clone()
                    .ok_or_else(|| invalid("remote_http backend needs `endpoint`".into()))?;
                BackendKind::RemoteHttp(RemoteConfig {
                    endpoint,
                    model: model_name.clone(),
                    api_key_env: self.api_key_env.clone(),
                    min_interval: Duration::from_millis(self.min_interval_ms.unwrap_or(0)),
                    timeout: Duration::from_secs(self.timeout_secs.unwrap_or(120)),
                })
            }
            RawKind::Scripted => {
                let fixture = self
                    .fixture
                    .as_ref()
                    .ok_or_else(|| invalid("scripted backend needs `fixture`".into()))?;
                BackendKind::Scripted {
                    fixture: base_dir.join(fixture),
                }
            }
            RawKind::NoiseSim => {
                let rates = match (self.error_rate, &self.error_rates) {
                    (Some(_), Some(_)) => {
                        return Err(invalid("give either `error_rate` or `error_rates`, not both".into()))
                    }
                    (Some(e), None) => SentimentLabel::ALL.iter().map(|&l| (l, e)).collect(),
                    (None, Some(map)) => {
                        let mut full = BTreeMap::new();
                        for label in SentimentLabel::ALL {
                            let e = map
                                .get(&label)
                                .ok_or_else(|| invalid(format!("error_rates lacks `{label}`")))?;
                            full.insert(label, *e);
                        }
                        full
                    }
                    (None, None) => return Err(invalid("noise_sim backend needs `error_rate` or `error_rates`".into())),
                };
                let cfg = NoiseConfig {
                    error_rates: rates,
                    seed: self.seed.unwrap_or(0),
                };
                cfg.validate().map_err(invalid)?;
                BackendKind::NoiseSim(cfg)
            }
        };
        Ok(BackendProfile {
            backend_id: self.id,
            model: self.model,
            kind,
            token_budget,
            weight: self.weight,
        })
    }
}

/// Parses a TOML registry (`[[backend]]` tables). Relative fixture paths
/// resolve against `base_dir`. Disabled backends are dropped.
pub fn parse_registry(text: &str, base_dir: &Path) -> Result<Vec<BackendProfile>, RegistryError> {
    let raw: RawRegistry = toml::from_str(text).map_err(|e| RegistryError::Parse(e.to_string()))?;
    let mut seen = HashSet::new();
    let mut profiles = Vec::new();
    for entry in raw.backend {
        if !seen.insert(entry.id.clone()) {
            return Err(RegistryError::Invalid {
                backend_id: entry.id,
                message: "duplicate backend id".into(),
            });
        }
        if entry.enabled {
            profiles.push(entry.into_profile(base_dir)?);
        }
    }
    Ok(profiles)
}

pub fn load_registry(path: &Path) -> Result<Vec<BackendProfile>, RegistryError> {
    let text = std::fs::read_to_string(path).map_err(|source| RegistryError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_registry(&text, path.parent().unwrap_or(Path::new(".")))
}
