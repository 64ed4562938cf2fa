//! Overall sentiment scores, class distributions and need-for-action
//! ranking.
//!
//! All arithmetic is exact on rationals; rendering to two decimals happens
//! only at the edges via [`format_decimal`].

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_rational::Ratio;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::corpus::{Language, Post, Registry, Topic};
use crate::fusion::FusedVerdict;
use crate::label::SentimentLabel;

pub type Rational = Ratio<i64>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SentimentCounts {
    pub negative: u64,
    pub neutral: u64,
    pub positive: u64,
}

impl SentimentCounts {
    pub fn new(negative: u64, neutral: u64, positive: u64) -> Self {
        SentimentCounts {
            negative,
            neutral,
            positive,
        }
    }

    pub fn total(&self) -> u64 {
        self.negative + self.neutral + self.positive
    }

    pub fn add(&mut self, label: SentimentLabel) {
        match label {
            SentimentLabel::Negative => self.negative += 1,
            SentimentLabel::Neutral => self.neutral += 1,
            SentimentLabel::Positive => self.positive += 1,
        }
    }

    pub fn get(&self, label: SentimentLabel) -> u64 {
        match label {
            SentimentLabel::Negative => self.negative,
            SentimentLabel::Neutral => self.neutral,
            SentimentLabel::Positive => self.positive,
        }
    }

    pub fn merged(&self, other: &SentimentCounts) -> SentimentCounts {
        SentimentCounts::new(
            self.negative + other.negative,
            self.neutral + other.neutral,
            self.positive + other.positive,
        )
    }

    /// Class proportions in canonical label order; `None` when empty.
    pub fn proportions(&self) -> Option<[Rational; 3]> {
        let total = self.total() as i64;
        if total == 0 {
            return None;
        }
        Some(SentimentLabel::ALL.map(|l| Ratio::new(self.get(l) as i64, total)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScoreError {
    #[error("sentiment score is undefined for a group without classified posts")]
    Undefined,
    #[error("neutral weight must be non-negative")]
    NegativeWeight,
}

/// `(#positive - #negative) / #all`, in `[-1, 1]`.
pub fn overall_sentiment_score(counts: &SentimentCounts) -> Result<Rational, ScoreError> {
    weighted_sentiment_score(counts, Ratio::from_integer(1))
}

/// Variant where neutral posts count `neutral_weight` times in the
/// denominator. A weight of 1 is the plain score; 0 ignores neutrals.
pub fn weighted_sentiment_score(counts: &SentimentCounts, neutral_weight: Rational) -> Result<Rational, ScoreError> {
    if neutral_weight.is_negative() {
        return Err(ScoreError::NegativeWeight);
    }
    let polar = Ratio::from_integer((counts.positive + counts.negative) as i64);
    let denominator = polar + neutral_weight * counts.neutral as i64;
    if denominator.is_zero() {
        return Err(ScoreError::Undefined);
    }
    Ok(Ratio::from_integer(counts.positive as i64 - counts.negative as i64) / denominator)
}

/// Renders `value` with `places` decimals, rounding half away from zero.
pub fn format_decimal(value: &Rational, places: u32) -> String {
    let scale = 10i64.pow(places);
    let scaled = value * scale;
    let rounded = scaled.round().to_integer();
    let sign = if rounded < 0 { "-" } else { "" };
    let abs = rounded.abs();
    if places == 0 {
        return format!("{sign}{abs}");
    }
    format!(
        "{sign}{}.{:0width$}",
        abs / scale,
        abs % scale,
        width = places as usize
    )
}

pub fn to_f64(value: &Rational) -> f64 {
    *value.numer() as f64 / *value.denom() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    Topic,
    Language,
    TopicLanguage,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupKey {
    pub topic: Option<Topic>,
    pub language: Option<Language>,
}

impl GroupKey {
    pub fn of(post: &Post, by: GroupBy) -> GroupKey {
        match by {
            GroupBy::Topic => GroupKey {
                topic: Some(post.topic.clone()),
                language: None,
            },
            GroupBy::Language => GroupKey {
                topic: None,
                language: Some(post.language.clone()),
            },
            GroupBy::TopicLanguage => GroupKey {
                topic: Some(post.topic.clone()),
                language: Some(post.language.clone()),
            },
        }
    }

    /// Every group the registry can produce, topics before languages in
    /// registry order.
    pub fn all(registry: &Registry, by: GroupBy) -> Vec<GroupKey> {
        match by {
            GroupBy::Topic => registry
                .topics
                .iter()
                .map(|t| GroupKey {
                    topic: Some(t.clone()),
                    language: None,
                })
                .collect(),
            GroupBy::Language => registry
                .languages
                .iter()
                .map(|l| GroupKey {
                    topic: None,
                    language: Some(l.clone()),
                })
                .collect(),
            GroupBy::TopicLanguage => registry
                .topics
                .iter()
                .flat_map(|t| {
                    registry.languages.iter().map(move |l| GroupKey {
                        topic: Some(t.clone()),
                        language: Some(l.clone()),
                    })
                })
                .collect(),
        }
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.topic, &self.language) {
            (Some(t), Some(l)) => write!(f, "{t}/{l}"),
            (Some(t), None) => write!(f, "{t}"),
            (None, Some(l)) => write!(f, "{l}"),
            (None, None) => f.write_str("all"),
        }
    }
}

/// Tallies quorum-met fused labels per group. Returns the tallies in
/// registry order (groups outside the registry appended in key order) and
/// the number of quorum-failed verdicts left out.
fn tally(
    fused: &[FusedVerdict],
    posts: &[Post],
    registry: &Registry,
    by: GroupBy,
) -> (Vec<(GroupKey, SentimentCounts)>, usize) {
    let index: HashMap<&str, &Post> = posts.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut counts: BTreeMap<GroupKey, SentimentCounts> = BTreeMap::new();
    let mut quorum_failed = 0;
    for f in fused {
        if !f.quorum_met {
            quorum_failed += 1;
            continue;
        }
        if let Some(post) = index.get(f.post_id.as_str()) {
            counts.entry(GroupKey::of(post, by)).or_default().add(f.label);
        }
    }
    let mut ordered = Vec::with_capacity(counts.len());
    for key in GroupKey::all(registry, by) {
        let c = counts.remove(&key).unwrap_or_default();
        ordered.push((key, c));
    }
    ordered.extend(counts);
    (ordered, quorum_failed)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributionRow {
    pub group: GroupKey,
    pub counts: SentimentCounts,
    /// Negative, neutral, positive; sums to exactly 1.
    pub proportions: [Rational; 3],
}

impl DistributionRow {
    pub fn share(&self, label: SentimentLabel) -> Rational {
        self.proportions[label.index()]
    }

    /// More than half of the posts are negative.
    pub fn majority_negative(&self) -> bool {
        self.share(SentimentLabel::Negative) > Ratio::new(1, 2)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributionTable {
    pub group_by: GroupBy,
    pub rows: Vec<DistributionRow>,
    pub omitted_empty_groups: Vec<GroupKey>,
    pub quorum_failed: usize,
}

impl DistributionTable {
    pub fn row(&self, group: &GroupKey) -> Option<&DistributionRow> {
        self.rows.iter().find(|r| &r.group == group)
    }

    pub fn notes(&self) -> Vec<String> {
        let mut notes: Vec<String> = self
            .omitted_empty_groups
            .iter()
            .map(|g| format!("group {g} has no classified posts and is omitted"))
            .collect();
        if self.quorum_failed > 0 {
            notes.push(format!("{} posts below fusion quorum excluded", self.quorum_failed));
        }
        notes
    }
}

pub fn distribution(fused: &[FusedVerdict], posts: &[Post], registry: &Registry, group_by: GroupBy) -> DistributionTable {
    let (tallies, quorum_failed) = tally(fused, posts, registry, group_by);
    let mut rows = Vec::new();
    let mut omitted = Vec::new();
    for (group, counts) in tallies {
        match counts.proportions() {
            Some(proportions) => rows.push(DistributionRow {
                group,
                counts,
                proportions,
            }),
            None => omitted.push(group),
        }
    }
    DistributionTable {
        group_by,
        rows,
        omitted_empty_groups: omitted,
        quorum_failed,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentimentScore {
    pub group: GroupKey,
    pub value: Rational,
    pub counts: SentimentCounts,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LanguageAveraging {
    /// Plain mean of the per-topic scores.
    #[default]
    Unweighted,
    /// Mean weighted by each topic's post count, i.e. the pooled score.
    CountWeighted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageMean {
    pub language: Language,
    pub mean: Option<Rational>,
    pub topics_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreOptions {
    pub neutral_weight: Rational,
    pub averaging: LanguageAveraging,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions {
            neutral_weight: Ratio::from_integer(1),
            averaging: LanguageAveraging::Unweighted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub group_by: GroupBy,
    pub scores: Vec<SentimentScore>,
    /// Groups whose score is undefined (no classified posts).
    pub undefined: Vec<GroupKey>,
    pub language_means: Vec<LanguageMean>,
    pub averaging: LanguageAveraging,
    pub quorum_failed: usize,
}

impl ScoreTable {
    pub fn get(&self, group: &GroupKey) -> Option<&SentimentScore> {
        self.scores.iter().find(|s| &s.group == group)
    }

    pub fn language_mean(&self, language: &Language) -> Option<Rational> {
        self.language_means
            .iter()
            .find(|m| &m.language == language)
            .and_then(|m| m.mean)
    }
}

pub fn score_table(
    fused: &[FusedVerdict],
    posts: &[Post],
    registry: &Registry,
    group_by: GroupBy,
    options: &ScoreOptions,
) -> Result<ScoreTable, ScoreError> {
    let (tallies, quorum_failed) = tally(fused, posts, registry, group_by);
    let mut scores = Vec::new();
    let mut undefined = Vec::new();
    for (group, counts) in tallies {
        match weighted_sentiment_score(&counts, options.neutral_weight) {
            Ok(value) => scores.push(SentimentScore { group, value, counts }),
            Err(ScoreError::Undefined) => undefined.push(group),
            Err(e) => return Err(e),
        }
    }

    let (cells, _) = tally(fused, posts, registry, GroupBy::TopicLanguage);
    let mut languages: Vec<Language> = registry.languages.clone();
    for (key, _) in &cells {
        if let Some(l) = &key.language {
            if !languages.contains(l) {
                languages.push(l.clone());
            }
        }
    }
    let mut language_means = Vec::new();
    for language in languages {
        let topic_cells: Vec<&SentimentCounts> = cells
            .iter()
            .filter(|(k, c)| k.language.as_ref() == Some(&language) && c.total() > 0)
            .map(|(_, c)| c)
            .collect();
        let mean = match options.averaging {
            LanguageAveraging::Unweighted => {
                let topic_scores: Vec<Rational> = topic_cells
                    .iter()
                    .filter_map(|c| weighted_sentiment_score(c, options.neutral_weight).ok())
                    .collect();
                if topic_scores.is_empty() {
                    None
                } else {
                    let n = topic_scores.len() as i64;
                    Some(topic_scores.into_iter().sum::<Rational>() / n)
                }
            }
            LanguageAveraging::CountWeighted => {
                let pooled = topic_cells
                    .iter()
                    .fold(SentimentCounts::default(), |acc, c| acc.merged(c));
                weighted_sentiment_score(&pooled, options.neutral_weight).ok()
            }
        };
        language_means.push(LanguageMean {
            language,
            mean,
            topics_used: topic_cells.len(),
        });
    }

    Ok(ScoreTable {
        group_by,
        scores,
        undefined,
        language_means,
        averaging: options.averaging,
        quorum_failed,
    })
}

/// Groups ordered from most negative score to most positive; equal scores
/// are ordered by the group's display name.
pub fn need_for_action_ranking(scores: &[SentimentScore]) -> Vec<(GroupKey, Rational)> {
    let mut ranked: Vec<(GroupKey, Rational)> = scores.iter().map(|s| (s.group.clone(), s.value)).collect();
    ranked.sort_by(|a, b| match a.1.cmp(&b.1) {
        Ordering::Equal => a.0.to_string().cmp(&b.0.to_string()),
        other => other,
    });
    ranked
}

/// Stacked-bar data: one row per topic with class proportions.
pub fn topic_distribution_plot_csv(table: &DistributionTable) -> String {
    let mut out = String::from("topic,negative,neutral,positive\n");
    for row in &table.rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            csv_cell(&row.group.to_string()),
            format_decimal(&row.proportions[0], 4),
            format_decimal(&row.proportions[1], 4),
            format_decimal(&row.proportions[2], 4),
        ));
    }
    out
}

/// Grouped-bar data: one row per topic, one column per language score
/// (empty when undefined), plus a final row of language means.
pub fn language_scores_plot_csv(table: &ScoreTable, registry: &Registry) -> String {
    let languages: Vec<&Language> = table.language_means.iter().map(|m| &m.language).collect();
    let mut out = String::from("topic");
    for l in &languages {
        out.push(',');
        out.push_str(&csv_cell(l.as_str()));
    }
    out.push('\n');
    for topic in &registry.topics {
        out.push_str(&csv_cell(topic.as_str()));
        for l in &languages {
            let key = GroupKey {
                topic: Some(topic.clone()),
                language: Some((*l).clone()),
            };
            out.push(',');
            if let Some(s) = table.get(&key) {
                out.push_str(&format_decimal(&s.value, 2));
            }
        }
        out.push('\n');
    }
    out.push_str("mean");
    for m in &table.language_means {
        out.push(',');
        if let Some(v) = &m.mean {
            out.push_str(&format_decimal(v, 2));
        }
    }
    out.push('\n');
    out
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
