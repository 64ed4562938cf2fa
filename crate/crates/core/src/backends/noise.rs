use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{render_reply, FailureKind, Responder};
use crate::label::SentimentLabel;
use crate::prompting::Batch;

/// Per-gold-class error rates plus the seed of the per-post random streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub error_rates: BTreeMap<SentimentLabel, f64>,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn uniform(error_rate: f64, seed: u64) -> NoiseConfig {
        NoiseConfig {
            error_rates: SentimentLabel::ALL.iter().map(|&l| (l, error_rate)).collect(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for label in SentimentLabel::ALL {
            match self.error_rates.get(&label) {
                Some(e) if (0.0..=1.0).contains(e) => {}
                Some(e) => return Err(format!("error rate {e} for {label} outside [0, 1]")),
                None => return Err(format!("no error rate for {label}")),
            }
        }
        Ok(())
    }

    pub fn rate(&self, gold: SentimentLabel) -> f64 {
        self.error_rates.get(&gold).copied().unwrap_or(0.0)
    }

    /// The label this simulated backend reports for `post_id`.
    ///
    /// Deterministic in `(seed, post_id)`: the same post gets the same label
    /// regardless of batching or call order.
    pub fn label_for(&self, post_id: &str, gold: SentimentLabel) -> SentimentLabel {
        let mut rng = post_stream(self.seed, post_id);
        if rng.random::<f64>() < self.rate(gold) {
            gold.others()[rng.random_range(0..2)]
        } else {
            gold
        }
    }
}

fn post_stream(seed: u64, post_id: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(post_id.as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(digest)
}

#[derive(Debug, Clone)]
pub struct NoiseResponder {
    config: NoiseConfig,
}

impl NoiseResponder {
    pub fn new(config: NoiseConfig) -> NoiseResponder {
        NoiseResponder { config }
    }
}

impl Responder for NoiseResponder {
    fn respond(&self, _prompt: &str, batch: &Batch) -> Result<String, FailureKind> {
        let mut rows = Vec::with_capacity(batch.len());
        for post in &batch.posts {
            let gold = post
                .gold_label
                .ok_or_else(|| FailureKind::MissingGold(post.id.clone()))?;
            rows.push((post.id.as_str(), self.config.label_for(&post.id, gold).as_str()));
        }
        Ok(render_reply(rows))
    }
}
