use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Three-way sentiment polarity.
///
/// The derived ordering (`Negative < Neutral < Positive`) is the one used
/// for every serialized table, so output column order never depends on
/// hash iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentimentLabel {
    Negative,
    Neutral,
    Positive,
}

impl SentimentLabel {
    pub const ALL: [SentimentLabel; 3] = [
        SentimentLabel::Negative,
        SentimentLabel::Neutral,
        SentimentLabel::Positive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SentimentLabel::Negative => "negative",
            SentimentLabel::Neutral => "neutral",
            SentimentLabel::Positive => "positive",
        }
    }

    /// Position in [`SentimentLabel::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    /// Ordinal encoding used for correlations: -1, 0, +1.
    pub fn encode(self) -> i8 {
        self as i8 - 1
    }

    pub fn inverted(self) -> SentimentLabel {
        match self {
            SentimentLabel::Negative => SentimentLabel::Positive,
            SentimentLabel::Neutral => SentimentLabel::Neutral,
            SentimentLabel::Positive => SentimentLabel::Negative,
        }
    }

    /// The two labels different from `self`, in canonical order.
    pub fn others(self) -> [SentimentLabel; 2] {
        match self {
            SentimentLabel::Negative => [SentimentLabel::Neutral, SentimentLabel::Positive],
            SentimentLabel::Neutral => [SentimentLabel::Negative, SentimentLabel::Positive],
            SentimentLabel::Positive => [SentimentLabel::Negative, SentimentLabel::Neutral],
        }
    }

    /// Lenient parse used for model output: case-insensitive, accepts
    /// common abbreviations and surrounding quotes/punctuation.
    pub fn parse_lenient(raw: &str) -> Option<SentimentLabel> {
        let cleaned = raw
            .trim()
            .trim_matches(|c: char| c == '"' || c == '\'' || c == '.' || c == '*' || c == '`')
            .trim()
            .to_lowercase();
        match cleaned.as_str() {
            "negative" | "neg" | "-1" | "-" => Some(SentimentLabel::Negative),
            "neutral" | "neu" | "neut" | "0" => Some(SentimentLabel::Neutral),
            "positive" | "pos" | "+1" | "1" | "+" => Some(SentimentLabel::Positive),
            _ => None,
        }
    }
}

impl fmt::Display for SentimentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown sentiment label {0:?}")]
pub struct UnknownLabel(pub String);

impl FromStr for SentimentLabel {
    type Err = UnknownLabel;

    /// Strict parse for our own files: exact lowercase class names only.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "negative" => Ok(SentimentLabel::Negative),
            "neutral" => Ok(SentimentLabel::Neutral),
            "positive" => Ok(SentimentLabel::Positive),
            other => Err(UnknownLabel(other.to_string())),
        }
    }
}
