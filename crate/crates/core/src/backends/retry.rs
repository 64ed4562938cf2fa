//! Retry with exponential backoff and binary batch splitting.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Backend, FailureKind, ParseIssue, Verdict};
use crate::prompting::{build_prompt, Batch, PromptTemplate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
    /// Halve batches whose replies keep failing to parse.
    pub split_on_parse_failure: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_delay: Duration::from_secs(1),
            max_delay: Duration::from_secs(60),
            split_on_parse_failure: true,
        }
    }
}

impl RetryPolicy {
    /// No sleeping between attempts; for tests and offline backends.
    pub fn immediate(max_attempts: u32) -> RetryPolicy {
        RetryPolicy {
            max_attempts,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
            split_on_parse_failure: true,
        }
    }

    /// Delay after the `attempt`-th failure (1-based).
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt.saturating_sub(1)).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

/// Posts a backend could not classify, with the last reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureReport {
    pub backend_id: String,
    pub batch: String,
    pub post_ids: Vec<String>,
    pub attempts: u32,
    pub reason: String,
    pub retryable: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RetryOutcome {
    pub verdicts: Vec<Verdict>,
    pub issues: Vec<ParseIssue>,
    pub failures: Vec<FailureReport>,
    pub requests: u32,
}

impl RetryOutcome {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

enum LastFailure {
    Parse { unresolved: usize },
    Backend(FailureKind),
}

/// Classifies `batch`, retrying transport failures and replies where half
/// or more of the posts came back without a usable label. Persistent parse
/// failures split the batch in halves down to single posts. Posts that stay
/// unresolved are left out of `verdicts` and listed in `failures`.
pub fn run_with_retry(
    backend: &Backend,
    template: &PromptTemplate,
    batch: &Batch,
    policy: &RetryPolicy,
) -> RetryOutcome {
    let mut outcome = RetryOutcome::default();
    resolve(backend, template, batch, policy, &mut outcome);
    outcome
}

fn resolve(
    backend: &Backend,
    template: &PromptTemplate,
    batch: &Batch,
    policy: &RetryPolicy,
    outcome: &mut RetryOutcome,
) {
    if batch.is_empty() {
        return;
    }
    let report = |attempts: u32, reason: String, retryable: bool| FailureReport {
        backend_id: backend.id().to_string(),
        batch: batch.label(),
        post_ids: batch.post_ids().map(str::to_string).collect(),
        attempts,
        reason,
        retryable,
    };
    let prompt = match build_prompt(template, &batch.topic, batch) {
        Ok(p) => p,
        Err(e) => {
            outcome.failures.push(report(0, e.to_string(), false));
            return;
        }
    };

    let max_attempts = policy.max_attempts.max(1);
    let mut last = None;
    let mut attempts = 0;
    while attempts < max_attempts {
        attempts += 1;
        outcome.requests += 1;
        match backend.classify_batch(&prompt, batch) {
            Ok(classified) => {
                let unresolved = batch.len() - classified.verdicts.len();
                if unresolved * 2 < batch.len() {
                    outcome.verdicts.extend(classified.verdicts);
                    outcome.issues.extend(classified.issues);
                    return;
                }
                last = Some(LastFailure::Parse { unresolved });
            }
            Err(err) if err.kind.is_retryable() => last = Some(LastFailure::Backend(err.kind)),
            Err(err) => {
                outcome.failures.push(report(attempts, err.kind.to_string(), false));
                return;
            }
        }
        if attempts < max_attempts {
            let delay = policy.backoff(attempts);
            if !delay.is_zero() {
                std::thread::sleep(delay);
            }
        }
    }

    match last {
        Some(LastFailure::Parse { .. }) if policy.split_on_parse_failure && batch.len() > 1 => {
            let (left, right) = batch.split();
            resolve(backend, template, &left, policy, outcome);
            resolve(backend, template, &right, policy, outcome);
        }
        Some(LastFailure::Parse { unresolved }) => {
            outcome.failures.push(report(
                attempts,
                format!("{unresolved} of {} posts unparseable after {attempts} attempts", batch.len()),
                false,
            ));
        }
        Some(LastFailure::Backend(kind)) => {
            outcome.failures.push(report(attempts, kind.to_string(), true));
        }
        None => {}
    }
}
