//! Run configuration (TOML). Paths are relative to the config file.

use std::path::{Path, PathBuf};
use std::time::Duration;

use num_rational::Ratio;
use serde::Deserialize;
use sentifuse::backends::{load_registry, BackendKind, BackendProfile, RetryPolicy};
use sentifuse::corpus::{CorpusFormat, Language, Registry, Topic};
use sentifuse::fusion::{FusionConfig, TiePolicy, DEFAULT_QUORUM};
use sentifuse::prompting::PromptTemplate;
use sentifuse::scoring::{LanguageAveraging, Rational, ScoreOptions};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    corpus: PathBuf,
    corpus_format: Option<CorpusFormat>,
    registry: Option<PathBuf>,
    template: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    output_dir: PathBuf,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_quorum")]
    quorum: usize,
    #[serde(default)]
    tie_policy: TiePolicy,
    /// Decimal or `p/q`.
    neutral_weight: Option<String>,
    #[serde(default)]
    averaging: LanguageAveraging,
    #[serde(default = "default_parallelism")]
    parallelism: usize,
    annotator_note: Option<String>,
    languages: Option<Vec<String>>,
    topics: Option<Vec<String>>,
    #[serde(default)]
    retry: RawRetry,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRetry {
    #[serde(default = "default_attempts")]
    max_attempts: u32,
    #[serde(default = "default_base_delay")]
    base_delay_ms: u64,
    #[serde(default = "default_max_delay")]
    max_delay_ms: u64,
    #[serde(default = "default_true")]
    split_on_parse_failure: bool,
}

impl Default for RawRetry {
    fn default() -> Self {
        RawRetry {
            max_attempts: default_attempts(),
            base_delay_ms: default_base_delay(),
            max_delay_ms: default_max_delay(),
            split_on_parse_failure: true,
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_quorum() -> usize {
    DEFAULT_QUORUM
}
fn default_parallelism() -> usize {
    4
}
fn default_attempts() -> u32 {
    3
}
fn default_base_delay() -> u64 {
    1000
}
fn default_max_delay() -> u64 {
    60_000
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub corpus: PathBuf,
    pub corpus_format: CorpusFormat,
    pub registry: Option<PathBuf>,
    pub template: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub quorum: usize,
    pub tie_policy: TiePolicy,
    pub neutral_weight: Rational,
    pub averaging: LanguageAveraging,
    pub parallelism: usize,
    pub annotator_note: Option<String>,
    pub names: Registry,
    pub retry: RetryPolicy,
}

/// Parses `1`, `0.5` or `1/2` into an exact rational.
pub fn parse_rational(raw: &str) -> Option<Rational> {
    let raw = raw.trim();
    if let Some((n, d)) = raw.split_once('/') {
        let n: i64 = n.trim().parse().ok()?;
        let d: i64 = d.trim().parse().ok()?;
        return (d != 0).then(|| Ratio::new(n, d));
    }
    let (int, frac) = raw.split_once('.').unwrap_or((raw, ""));
    if frac.len() > 12 || !frac.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let negative = int.starts_with('-');
    let whole: i64 = if int.is_empty() || int == "-" { 0 } else { int.parse().ok()? };
    let scale = 10i64.pow(frac.len() as u32);
    let frac_value: i64 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
    let magnitude = whole.abs() * scale + frac_value;
    Some(Ratio::new(if negative { -magnitude } else { magnitude }, scale))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        RunConfig::parse(&text, base)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<RunConfig> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base_dir.join(p) };
        let neutral_weight = match &raw.neutral_weight {
            None => Ratio::from_integer(1),
            Some(w) => parse_rational(w)
                .filter(|r| *r >= Ratio::from_integer(0))
                .ok_or_else(|| CliError::Usage(format!("config: neutral_weight {w:?} is not a non-negative number")))?,
        };
        let mut names = Registry::default();
        if let Some(langs) = raw.languages {
            names.languages = langs.iter().map(|l| Language::new(l.as_str())).collect();
        }
        if let Some(topics) = raw.topics {
            names.topics = topics.iter().map(|t| Topic::new(t.as_str())).collect();
        }
        if raw.quorum == 0 {
            return Err(CliError::Usage("config: quorum must be at least 1".into()));
        }
        if raw.parallelism == 0 {
            return Err(CliError::Usage("config: parallelism must be at least 1".into()));
        }
        let corpus = resolve(&raw.corpus);
        Ok(RunConfig {
            corpus_format: raw.corpus_format.unwrap_or_else(|| CorpusFormat::from_path(&corpus)),
            corpus,
            registry: raw.registry.as_deref().map(resolve),
            template: raw.template.as_deref().map(resolve),
            output_dir: resolve(&raw.output_dir),
            seed: raw.seed,
            quorum: raw.quorum,
            tie_policy: raw.tie_policy,
            neutral_weight,
            averaging: raw.averaging,
            parallelism: raw.parallelism,
            annotator_note: raw.annotator_note,
            names,
            retry: RetryPolicy {
                max_attempts: raw.retry.max_attempts.max(1),
                base_delay: Duration::from_millis(raw.retry.base_delay_ms),
                max_delay: Duration::from_millis(raw.retry.max_delay_ms),
                split_on_parse_failure: raw.retry.split_on_parse_failure,
            },
        })
    }

    /// Checks that referenced input files exist.
    pub fn validate(&self) -> Result<()> {
        let mut files = vec![("corpus", &self.corpus)];
        if let Some(r) = &self.registry {
            files.push(("registry", r));
        }
        if let Some(t) = &self.template {
            files.push(("template", t));
        }
        for (what, path) in files {
            if !path.is_file() {
                return Err(CliError::Usage(format!("config: {what} file {} does not exist", path.display())));
            }
        }
        Ok(())
    }

    pub fn registry_path(&self) -> Result<&Path> {
        self.registry
            .as_deref()
            .ok_or_else(|| CliError::Usage("config: `registry` (backend registry file) is required".into()))
    }

    /// Enabled backends, with noise-simulator seeds derived from the run
    /// seed so that `--seed` changes every simulated backend and no two
    /// backends share a random stream.
    pub fn backends(&self) -> Result<Vec<BackendProfile>> {
        let path = self.registry_path()?;
        let mut profiles = load_registry(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        if profiles.is_empty() {
            return Err(CliError::Usage(format!("{}: no enabled backends", path.display())));
        }
        if self.quorum > profiles.len() {
            return Err(CliError::Usage(format!(
                "config: quorum {} exceeds the {} enabled backends",
                self.quorum,
                profiles.len()
            )));
        }
        for p in &mut profiles {
            if let BackendKind::NoiseSim(cfg) = &mut p.kind {
                cfg.seed = derive_seed(self.seed, cfg.seed, &p.backend_id);
            }
        }
        Ok(profiles)
    }

    pub fn template(&self) -> Result<PromptTemplate> {
        match &self.template {
            None => Ok(PromptTemplate::default()),
            Some(path) => PromptTemplate::from_file(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display()))),
        }
    }

    pub fn fusion_config(&self, profiles: &[BackendProfile]) -> FusionConfig {
        FusionConfig {
            quorum: self.quorum,
            tie_policy: self.tie_policy,
            weights: profiles
                .iter()
                .filter_map(|p| p.weight.map(|w| (p.backend_id.clone(), w)))
                .collect(),
        }
    }

    pub fn score_options(&self) -> ScoreOptions {
        ScoreOptions {
            neutral_weight: self.neutral_weight,
            averaging: self.averaging,
        }
    }
}

fn derive_seed(run_seed: u64, profile_seed: u64, backend_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(run_seed.to_le_bytes());
    h.update(profile_seed.to_le_bytes());
    h.update(backend_id.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}
