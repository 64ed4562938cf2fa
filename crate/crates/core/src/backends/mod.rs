//! Classifier backends.
//!
//! Every backend turns a rendered prompt plus its [`Batch`] into a textual
//! `id,label` reply through a [`Responder`]; [`Backend::classify_batch`]
//! then parses the reply into [`Verdict`]s. Three responders ship with the
//! crate:
//!
//! * [`RemoteResponder`]: single-turn chat-completion request over HTTP
//! * [`ScriptedResponder`]: replays a `backend_id,post_id,label` fixture
//! * [`NoiseResponder`]: corrupts gold labels at configured per-class rates

mod noise;
mod parse;
mod registry;
mod remote;
mod retry;
mod scripted;
mod store;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::label::SentimentLabel;
use crate::prompting::{estimate_tokens, Batch, TokenBudget};

pub use noise::{NoiseConfig, NoiseResponder};
pub use parse::{parse_response, ParseIssue, ParseIssueKind, ParsedResponse};
pub use registry::{default_context_limit, default_profiles, load_registry, parse_registry, BackendKind, BackendProfile, RegistryError};
pub use remote::{chat_request_body, extract_chat_content, RateGate, RemoteConfig, RemoteResponder};
pub use retry::{run_with_retry, FailureReport, RetryOutcome, RetryPolicy};
pub use scripted::{ScriptedResponder, ScriptedTable};
pub use store::{read_verdicts, write_verdicts, StoreError, VerdictFormat};

/// One backend's label for one post.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Verdict {
    pub post_id: String,
    pub backend_id: String,
    pub label: SentimentLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_fragment: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FailureKind {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("rate limit or quota exhausted: {0}")]
    RateLimited(String),
    #[error("request rejected: {0}")]
    Rejected(String),
    #[error("no fixture entry for post {0:?}")]
    FixtureMiss(String),
    #[error("post {0:?} has no gold label to corrupt")]
    MissingGold(String),
    #[error("prompt needs {needed} tokens, budget allows {usable}")]
    OverBudget { needed: u64, usable: i64 },
    #[error("misconfigured backend: {0}")]
    Config(String),
}

impl FailureKind {
    /// Whether another attempt may succeed.
    pub fn is_retryable(&self) -> bool {
        matches!(self, FailureKind::Transport(_) | FailureKind::RateLimited(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("backend {backend_id}, batch {batch}: {kind}")]
pub struct BackendError {
    pub backend_id: String,
    pub batch: String,
    pub kind: FailureKind,
}

/// Produces the raw textual reply for a prompt.
pub trait Responder: Send + Sync {
    fn respond(&self, prompt: &str, batch: &Batch) -> Result<String, FailureKind>;
}

/// Result of one classification request.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Classified {
    pub verdicts: Vec<Verdict>,
    pub issues: Vec<ParseIssue>,
}

#[derive(Clone)]
pub struct Backend {
    profile: BackendProfile,
    responder: Arc<dyn Responder>,
}

impl fmt::Debug for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Backend").field("profile", &self.profile).finish_non_exhaustive()
    }
}

impl Backend {
    pub fn new(profile: BackendProfile, responder: Arc<dyn Responder>) -> Backend {
        Backend { profile, responder }
    }

    /// Instantiates the responder named by `profile.kind`. Scripted
    /// fixtures are read from disk here.
    pub fn from_profile(profile: BackendProfile) -> Result<Backend, RegistryError> {
        let responder: Arc<dyn Responder> = match &profile.kind {
            BackendKind::RemoteHttp(cfg) => Arc::new(RemoteResponder::new(cfg.clone())?),
            BackendKind::Scripted { fixture } => {
                let table = ScriptedTable::load(fixture)?;
                Arc::new(ScriptedResponder::new(profile.backend_id.clone(), Arc::new(table)))
            }
            BackendKind::NoiseSim(cfg) => Arc::new(NoiseResponder::new(cfg.clone())),
        };
        Ok(Backend { profile, responder })
    }

    pub fn id(&self) -> &str {
        &self.profile.backend_id
    }

    pub fn profile(&self) -> &BackendProfile {
        &self.profile
    }

    pub fn budget(&self) -> &TokenBudget {
        &self.profile.token_budget
    }

    fn error(&self, batch: &Batch, kind: FailureKind) -> BackendError {
        BackendError {
            backend_id: self.profile.backend_id.clone(),
            batch: batch.label(),
            kind,
        }
    }

    /// Sends one prompt and parses the reply. At most one verdict per batch
    /// post; verdict ids are always a subset of the batch ids.
    pub fn classify_batch(&self, prompt: &str, batch: &Batch) -> Result<Classified, BackendError> {
        let needed = estimate_tokens(prompt);
        let usable = self.profile.token_budget.usable(batch.len());
        if needed as i64 > usable {
            return Err(self.error(batch, FailureKind::OverBudget { needed, usable }));
        }
        let reply = self
            .responder
            .respond(prompt, batch)
            .map_err(|kind| self.error(batch, kind))?;
        let parsed = parse_response(&reply, batch, &self.profile.backend_id);
        Ok(Classified {
            verdicts: parsed.verdicts,
            issues: parsed.issues,
        })
    }
}

/// Renders `id,label` reply text, the format every local responder emits.
pub(crate) fn render_reply<'a>(rows: impl IntoIterator<Item = (&'a str, &'a str)>) -> String {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    // Writing into a Vec cannot fail.
    wtr.write_record(["id", "label"]).expect("in-memory csv");
    for (id, label) in rows {
        wtr.write_record([id, label]).expect("in-memory csv");
    }
    let bytes = wtr.into_inner().expect("in-memory csv");
    String::from_utf8(bytes).expect("csv of utf-8 input is utf-8")
}
