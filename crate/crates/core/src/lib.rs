//! Multi-backend zero-shot sentiment classification of topic-tagged
//! multilingual posts.
//!
//! The pipeline: [`corpus`] loads and normalizes posts, [`prompting`] packs
//! them into token-budgeted topic prompts, [`backends`] classify the
//! batches, [`fusion`] majority-votes the verdicts, [`scoring`] turns fused
//! labels into overall sentiment scores, and [`evaluation`] measures error
//! rates, F1 and agreement against gold labels. [`simulate`] runs the
//! fusion analysis offline on synthetic backends.

pub mod backends;
pub mod corpus;
pub mod evaluation;
pub mod fusion;
pub mod label;
pub mod prompting;
pub mod scoring;
pub mod simulate;
pub mod stats;

pub use backends::{Backend, BackendProfile, Verdict};
pub use corpus::{Language, Post, Registry, Topic};
pub use fusion::{FusedVerdict, VerdictMatrix};
pub use label::SentimentLabel;
pub use prompting::{Batch, PromptTemplate, TokenBudget};
pub use scoring::{SentimentCounts, SentimentScore};
