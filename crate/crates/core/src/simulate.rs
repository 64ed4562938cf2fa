//! Monte-Carlo study of majority-vote fusion under correlated backend errors.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fusion::{fuse_all, VerdictMatrix, DEFAULT_QUORUM};
use crate::label::SentimentLabel;
use crate::stats::{mean, pearson};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n_posts: usize,
    pub error_rates: Vec<f64>,
    /// Probability that a post's errors come from one shared draw.
    pub correlation: f64,
    /// Prior over negative, neutral, positive.
    pub class_prior: [f64; 3],
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimulationError {
    #[error("n_posts must be at least 1")]
    NoPosts,
    #[error("at least one backend error rate is required")]
    NoBackends,
    #[error("error rate {0} outside [0, 1)")]
    ErrorRate(String),
    #[error("correlation {0} outside [0, 1]")]
    Correlation(String),
    #[error("class prior must be non-negative and sum to 1, got {0}")]
    Prior(String),
}

impl SimulationConfig {
    /// Independent backends, uniform prior.
    pub fn independent(n_posts: usize, error_rates: Vec<f64>, seed: u64) -> SimulationConfig {
        SimulationConfig {
            n_posts,
            error_rates,
            correlation: 0.0,
            class_prior: [1.0 / 3.0; 3],
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        if self.n_posts == 0 {
            return Err(SimulationError::NoPosts);
        }
        if self.error_rates.is_empty() {
            return Err(SimulationError::NoBackends);
        }
        if let Some(bad) = self.error_rates.iter().find(|e| !(0.0..1.0).contains(*e)) {
            return Err(SimulationError::ErrorRate(bad.to_string()));
        }
        if !(0.0..=1.0).contains(&self.correlation) {
            return Err(SimulationError::Correlation(self.correlation.to_string()));
        }
        let sum: f64 = self.class_prior.iter().sum();
        if self.class_prior.iter().any(|p| p.is_nan() || *p < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(SimulationError::Prior(format!("{:?}", self.class_prior)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub realized_error: Vec<f64>,
    pub fused_error: f64,
    /// Mean pairwise Pearson r of the -1/0/+1 encoded labels.
    pub mean_label_r: Option<f64>,
    /// Mean pairwise Pearson r of the per-post error indicators; `None`
    /// when no pair is defined, e.g. every rate is 0.
    pub mean_error_r: Option<f64>,
    pub undefined_error_pairs: usize,
    pub fused_ties: usize,
}

fn draw_label(rng: &mut ChaCha8Rng, prior: &[f64; 3]) -> SentimentLabel {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (label, p) in SentimentLabel::ALL.into_iter().zip(prior) {
        acc += p;
        if u < acc {
            return label;
        }
    }
    // rounding slack: last class with non-zero mass
    SentimentLabel::ALL
        .into_iter()
        .zip(prior)
        .rev()
        .find(|(_, p)| **p > 0.0)
        .map_or(SentimentLabel::Positive, |(l, _)| l)
}

/// Draws gold labels from the prior and one label per backend. With
/// probability `correlation` a post uses a shared draw `u` and a shared
/// wrong label, and backend `b` errs iff `u < e_b`; otherwise each backend
/// errs independently with a uniformly chosen wrong label. Either way each
/// backend's marginal error rate is its configured rate.
pub fn run_simulation(config: &SimulationConfig) -> Result<SimulationResult, SimulationError> {
    config.validate()?;
    let k = config.error_rates.len();
    let n = config.n_posts;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let post_ids: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
    let backend_ids: Vec<String> = (0..k).map(|b| format!("b{b}")).collect();
    let mut matrix = VerdictMatrix::new(post_ids, backend_ids).expect("generated ids are distinct");
    let mut gold = Vec::with_capacity(n);
    let mut wrong = vec![vec![0.0f64; n]; k];
    let mut encoded = vec![vec![0.0f64; n]; k];

    for row in 0..n {
        let truth = draw_label(&mut rng, &config.class_prior);
        gold.push(truth);
        let shared = rng.random::<f64>() < config.correlation;
        let shared_u: f64 = rng.random();
        let shared_wrong = truth.others()[rng.random_range(0..2)];
        for (b, &rate) in config.error_rates.iter().enumerate() {
            let label = if shared {
                if shared_u < rate {
                    shared_wrong
                } else {
                    truth
                }
            } else if rng.random::<f64>() < rate {
                truth.others()[rng.random_range(0..2)]
            } else {
                truth
            };
            matrix.set(row, b, Some(label));
            wrong[b][row] = f64::from(u8::from(label != truth));
            encoded[b][row] = f64::from(label.encode());
        }
    }

    let quorum = DEFAULT_QUORUM.min(k);
    let fused = fuse_all(&matrix, quorum).expect("complete matrix with valid quorum");
    let fused_wrong = fused.iter().zip(&gold).filter(|(f, g)| f.label != **g).count();
    let fused_ties = fused.iter().filter(|f| f.tie_broken).count();

    let mut label_rs = Vec::new();
    let mut error_rs = Vec::new();
    let mut undefined_error_pairs = 0;
    for a in 0..k {
        for b in (a + 1)..k {
            if let Some(r) = pearson(&encoded[a], &encoded[b]) {
                label_rs.push(r);
            }
            match pearson(&wrong[a], &wrong[b]) {
                Some(r) => error_rs.push(r),
                None => undefined_error_pairs += 1,
            }
        }
    }

    Ok(SimulationResult {
        realized_error: wrong.iter().map(|w| w.iter().sum::<f64>() / n as f64).collect(),
        fused_error: fused_wrong as f64 / n as f64,
        mean_label_r: mean(&label_rs),
        mean_error_r: mean(&error_rs),
        undefined_error_pairs,
        fused_ties,
    })
}

pub const CSV_HEADER: &str =
    "seed,n_posts,correlation,error_rates,realized_errors,fused_error,mean_label_r,mean_error_r";

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(";")
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "undefined".to_string(), |v| format!("{v:.6}"))
}

/// One csv row (without trailing newline) matching [`CSV_HEADER`].
pub fn csv_row(config: &SimulationConfig, result: &SimulationResult) -> String {
    let mut row = String::new();
    let _ = write!(
        row,
        "{},{},{},{},{},{:.6},{},{}",
        config.seed,
        config.n_posts,
        config.correlation,
        join(&config.error_rates),
        join(&result.realized_error),
        result.fused_error,
        opt(result.mean_label_r),
        opt(result.mean_error_r),
    );
    row
}
