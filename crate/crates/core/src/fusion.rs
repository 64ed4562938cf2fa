//! Majority-vote fusion of per-post verdicts and inter-backend agreement.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::backends::Verdict;
use crate::corpus::Language;
use crate::label::SentimentLabel;
use crate::stats::{mean, pearson};

pub const DEFAULT_QUORUM: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FusionError {
    #[error("quorum must be at least 1")]
    ZeroQuorum,
    #[error("no verdicts to fuse")]
    NoVerdicts,
    #[error("verdicts for {expected:?} and {found:?} mixed in one fusion call")]
    MixedPostIds { expected: String, found: String },
    #[error("backend {backend_id:?} voted twice on post {post_id:?}")]
    DuplicateBackend { post_id: String, backend_id: String },
    #[error("duplicate {what} {id:?} in verdict matrix")]
    DuplicateKey { what: &'static str, id: String },
    #[error("verdict for unknown {what} {id:?}")]
    UnknownKey { what: &'static str, id: String },
}

/// How a vote with several labels sharing the top count is resolved.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    /// Ties become `neutral` with `tie_broken = true`.
    #[default]
    Neutral,
    /// Ties go to the tied label with the largest summed backend weight;
    /// still-tied votes fall back to `neutral`.
    Weighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub quorum: usize,
    pub tie_policy: TiePolicy,
    /// Per-backend weights for [`TiePolicy::Weighted`]; missing backends
    /// weigh 1.
    pub weights: BTreeMap<String, f64>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            quorum: DEFAULT_QUORUM,
            tie_policy: TiePolicy::Neutral,
            weights: BTreeMap::new(),
        }
    }
}

impl FusionConfig {
    pub fn with_quorum(quorum: usize) -> FusionConfig {
        FusionConfig {
            quorum,
            ..FusionConfig::default()
        }
    }
}

/// Vote tally indexed by [`SentimentLabel::index`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VoteCounts {
    pub negative: u32,
    pub neutral: u32,
    pub positive: u32,
}

impl VoteCounts {
    pub fn get(&self, label: SentimentLabel) -> u32 {
        match label {
            SentimentLabel::Negative => self.negative,
            SentimentLabel::Neutral => self.neutral,
            SentimentLabel::Positive => self.positive,
        }
    }

    pub fn add(&mut self, label: SentimentLabel) {
        match label {
            SentimentLabel::Negative => self.negative += 1,
            SentimentLabel::Neutral => self.neutral += 1,
            SentimentLabel::Positive => self.positive += 1,
        }
    }

    pub fn total(&self) -> u32 {
        self.negative + self.neutral + self.positive
    }

    /// Labels holding the maximal count, in canonical order.
    pub fn leaders(&self) -> Vec<SentimentLabel> {
        let top = SentimentLabel::ALL.iter().map(|&l| self.get(l)).max().unwrap_or(0);
        SentimentLabel::ALL.into_iter().filter(|&l| self.get(l) == top).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusedVerdict {
    pub post_id: String,
    pub label: SentimentLabel,
    pub vote_counts: VoteCounts,
    pub contributing_backends: BTreeSet<String>,
    pub tie_broken: bool,
    pub quorum_met: bool,
}

fn fuse_votes<'a>(
    post_id: &str,
    votes: impl IntoIterator<Item = (&'a str, SentimentLabel)>,
    config: &FusionConfig,
) -> Result<FusedVerdict, FusionError> {
    if config.quorum == 0 {
        return Err(FusionError::ZeroQuorum);
    }
    let mut counts = VoteCounts::default();
    let mut backends = BTreeSet::new();
    let mut weight_by_label = [0.0f64; 3];
    for (backend, label) in votes {
        if !backends.insert(backend.to_string()) {
            return Err(FusionError::DuplicateBackend {
                post_id: post_id.to_string(),
                backend_id: backend.to_string(),
            });
        }
        counts.add(label);
        weight_by_label[label.index()] += config.weights.get(backend).copied().unwrap_or(1.0);
    }
    let fused = |label, tie_broken, quorum_met| FusedVerdict {
        post_id: post_id.to_string(),
        label,
        vote_counts: counts,
        contributing_backends: backends.clone(),
        tie_broken,
        quorum_met,
    };
    if backends.len() < config.quorum {
        return Ok(fused(SentimentLabel::Neutral, false, false));
    }
    let leaders = counts.leaders();
    if let [winner] = leaders.as_slice() {
        return Ok(fused(*winner, false, true));
    }
    let label = match config.tie_policy {
        TiePolicy::Neutral => SentimentLabel::Neutral,
        TiePolicy::Weighted => {
            let best = leaders
                .iter()
                .map(|l| weight_by_label[l.index()])
                .fold(f64::NEG_INFINITY, f64::max);
            let top: Vec<_> = leaders
                .iter()
                .filter(|l| weight_by_label[l.index()] == best)
                .collect();
            match top.as_slice() {
                [single] => **single,
                _ => SentimentLabel::Neutral,
            }
        }
    };
    Ok(fused(label, true, true))
}

/// Majority vote over one post's verdicts with the default tie policy.
pub fn fuse(verdicts_for_post: &[Verdict], quorum: usize) -> Result<FusedVerdict, FusionError> {
    fuse_with(verdicts_for_post, &FusionConfig::with_quorum(quorum))
}

pub fn fuse_with(verdicts_for_post: &[Verdict], config: &FusionConfig) -> Result<FusedVerdict, FusionError> {
    let first = verdicts_for_post.first().ok_or(FusionError::NoVerdicts)?;
    if let Some(other) = verdicts_for_post.iter().find(|v| v.post_id != first.post_id) {
        return Err(FusionError::MixedPostIds {
            expected: first.post_id.clone(),
            found: other.post_id.clone(),
        });
    }
    fuse_votes(
        &first.post_id,
        verdicts_for_post.iter().map(|v| (v.backend_id.as_str(), v.label)),
        config,
    )
}

/// Posts × backends grid of optional labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictMatrix {
    post_ids: Vec<String>,
    backend_ids: Vec<String>,
    cells: Vec<Option<SentimentLabel>>,
}

fn check_distinct(ids: &[String], what: &'static str) -> Result<(), FusionError> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(FusionError::DuplicateKey { what, id: id.clone() });
        }
    }
    Ok(())
}

impl VerdictMatrix {
    pub fn new(post_ids: Vec<String>, backend_ids: Vec<String>) -> Result<VerdictMatrix, FusionError> {
        check_distinct(&post_ids, "post")?;
        check_distinct(&backend_ids, "backend")?;
        let cells = vec![None; post_ids.len() * backend_ids.len()];
        Ok(VerdictMatrix {
            post_ids,
            backend_ids,
            cells,
        })
    }

    /// Builds the grid from a verdict list. Verdicts naming posts or
    /// backends outside the given axes, or filling a cell twice, are errors.
    pub fn from_verdicts(
        post_ids: Vec<String>,
        backend_ids: Vec<String>,
        verdicts: &[Verdict],
    ) -> Result<VerdictMatrix, FusionError> {
        let mut m = VerdictMatrix::new(post_ids, backend_ids)?;
        let rows: HashMap<&str, usize> = m.post_ids.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();
        let cols: HashMap<&str, usize> = m.backend_ids.iter().enumerate().map(|(i, b)| (b.as_str(), i)).collect();
        let mut placed = Vec::with_capacity(verdicts.len());
        for v in verdicts {
            let row = *rows.get(v.post_id.as_str()).ok_or_else(|| FusionError::UnknownKey {
                what: "post",
                id: v.post_id.clone(),
            })?;
            let col = *cols.get(v.backend_id.as_str()).ok_or_else(|| FusionError::UnknownKey {
                what: "backend",
                id: v.backend_id.clone(),
            })?;
            placed.push((row, col, v));
        }
        for (row, col, v) in placed {
            let cell = &mut m.cells[row * m.backend_ids.len() + col];
            if cell.is_some() {
                return Err(FusionError::DuplicateBackend {
                    post_id: v.post_id.clone(),
                    backend_id: v.backend_id.clone(),
                });
            }
            *cell = Some(v.label);
        }
        Ok(m)
    }

    pub fn post_ids(&self) -> &[String] {
        &self.post_ids
    }

    pub fn backend_ids(&self) -> &[String] {
        &self.backend_ids
    }

    pub fn n_rows(&self) -> usize {
        self.post_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.backend_ids.len()
    }

    pub fn get(&self, row: usize, col: usize) -> Option<SentimentLabel> {
        self.cells[row * self.n_cols() + col]
    }

    pub fn set(&mut self, row: usize, col: usize, label: Option<SentimentLabel>) {
        let n = self.n_cols();
        self.cells[row * n + col] = label;
    }

    pub fn row(&self, row: usize) -> &[Option<SentimentLabel>] {
        let n = self.n_cols();
        &self.cells[row * n..(row + 1) * n]
    }

    /// The same matrix with columns reordered: new column `k` is old
    /// column `order[k]`.
    pub fn permute_columns(&self, order: &[usize]) -> VerdictMatrix {
        let backend_ids = order.iter().map(|&c| self.backend_ids[c].clone()).collect();
        let mut cells = Vec::with_capacity(self.cells.len());
        for r in 0..self.n_rows() {
            cells.extend(order.iter().map(|&c| self.get(r, c)));
        }
        VerdictMatrix {
            post_ids: self.post_ids.clone(),
            backend_ids,
            cells,
        }
    }

    /// Sub-matrix of the rows for which `keep(post_id)` holds.
    pub fn select_rows(&self, mut keep: impl FnMut(&str) -> bool) -> VerdictMatrix {
        let mut post_ids = Vec::new();
        let mut cells = Vec::new();
        for (r, id) in self.post_ids.iter().enumerate() {
            if keep(id) {
                post_ids.push(id.clone());
                cells.extend_from_slice(self.row(r));
            }
        }
        VerdictMatrix {
            post_ids,
            backend_ids: self.backend_ids.clone(),
            cells,
        }
    }

    pub fn to_verdicts(&self) -> Vec<Verdict> {
        let mut out = Vec::new();
        for (r, post_id) in self.post_ids.iter().enumerate() {
            for (c, backend_id) in self.backend_ids.iter().enumerate() {
                if let Some(label) = self.get(r, c) {
                    out.push(Verdict {
                        post_id: post_id.clone(),
                        backend_id: backend_id.clone(),
                        label,
                        raw_fragment: None,
                    });
                }
            }
        }
        out
    }
}

/// One fused verdict per matrix row, in row order.
pub fn fuse_all(matrix: &VerdictMatrix, quorum: usize) -> Result<Vec<FusedVerdict>, FusionError> {
    fuse_all_with(matrix, &FusionConfig::with_quorum(quorum))
}

pub fn fuse_all_with(matrix: &VerdictMatrix, config: &FusionConfig) -> Result<Vec<FusedVerdict>, FusionError> {
    (0..matrix.n_rows())
        .map(|r| {
            let votes = matrix
                .row(r)
                .iter()
                .zip(matrix.backend_ids())
                .filter_map(|(cell, b)| cell.map(|l| (b.as_str(), l)));
            fuse_votes(&matrix.post_ids()[r], votes, config)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCorrelation {
    pub a: String,
    pub b: String,
    /// `None` when fewer than two shared posts or a constant column.
    pub r: Option<f64>,
    pub shared_posts: usize,
}

/// Symmetric table of pairwise Pearson correlations between backends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable {
    pub pairs: Vec<PairCorrelation>,
}

impl CorrelationTable {
    pub fn get(&self, a: &str, b: &str) -> Option<&PairCorrelation> {
        self.pairs
            .iter()
            .find(|p| (p.a == a && p.b == b) || (p.a == b && p.b == a))
    }

    pub fn defined(&self) -> impl Iterator<Item = f64> + '_ {
        self.pairs.iter().filter_map(|p| p.r)
    }
}

/// Pearson's r between every pair of backend columns, labels encoded
/// -1/0/+1, over the posts both backends classified.
pub fn pairwise_correlation(matrix: &VerdictMatrix) -> CorrelationTable {
    let n = matrix.n_cols();
    let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let (xs, ys): (Vec<f64>, Vec<f64>) = (0..matrix.n_rows())
                .filter_map(|r| match (matrix.get(r, i), matrix.get(r, j)) {
                    (Some(x), Some(y)) => Some((x.encode() as f64, y.encode() as f64)),
                    _ => None,
                })
                .unzip();
            pairs.push(PairCorrelation {
                a: matrix.backend_ids()[i].clone(),
                b: matrix.backend_ids()[j].clone(),
                r: pearson(&xs, &ys),
                shared_posts: xs.len(),
            });
        }
    }
    CorrelationTable { pairs }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationGrouping {
    Language,
    Overall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCorrelation {
    pub group: String,
    pub mean_r: Option<f64>,
    pub pairs_used: usize,
    pub undefined_pairs: Vec<(String, String)>,
}

fn summarize(group: String, table: &CorrelationTable) -> GroupCorrelation {
    let defined: Vec<f64> = table.defined().collect();
    GroupCorrelation {
        group,
        mean_r: mean(&defined),
        pairs_used: defined.len(),
        undefined_pairs: table
            .pairs
            .iter()
            .filter(|p| p.r.is_none())
            .map(|p| (p.a.clone(), p.b.clone()))
            .collect(),
    }
}

/// Mean of the pairwise correlations, overall or within each language.
/// Undefined pairs are left out of the mean and listed.
pub fn mean_correlation(
    by: CorrelationGrouping,
    matrix: &VerdictMatrix,
    languages: &HashMap<String, Language>,
) -> Vec<GroupCorrelation> {
    match by {
        CorrelationGrouping::Overall => vec![summarize("overall".into(), &pairwise_correlation(matrix))],
        CorrelationGrouping::Language => {
            let groups: BTreeSet<&Language> = matrix
                .post_ids()
                .iter()
                .filter_map(|p| languages.get(p))
                .collect();
            groups
                .into_iter()
                .map(|lang| {
                    let sub = matrix.select_rows(|p| languages.get(p) == Some(lang));
                    summarize(lang.to_string(), &pairwise_correlation(&sub))
                })
                .collect()
        }
    }
}

#[derive(Serialize, Deserialize)]
struct FusedRow {
    post_id: String,
    label: SentimentLabel,
    votes_neg: u32,
    votes_neu: u32,
    votes_pos: u32,
    tie_broken: bool,
    quorum_met: bool,
}

/// Writes `post_id,label,votes_neg,votes_neu,votes_pos,tie_broken,quorum_met`.
pub fn write_fused_csv<W: std::io::Write>(fused: &[FusedVerdict], writer: W) -> Result<(), csv::Error> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    for f in fused {
        wtr.serialize(FusedRow {
            post_id: f.post_id.clone(),
            label: f.label,
            votes_neg: f.vote_counts.negative,
            votes_neu: f.vote_counts.neutral,
            votes_pos: f.vote_counts.positive,
            tie_broken: f.tie_broken,
            quorum_met: f.quorum_met,
        })?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a fused csv; `#` lines are comments. The file does not record
/// which backends voted, so `contributing_backends` comes back empty.
pub fn read_fused_csv<R: std::io::Read>(reader: R) -> Result<Vec<FusedVerdict>, csv::Error> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
    rdr.deserialize::<FusedRow>()
        .map(|row| {
            let row = row?;
            Ok(FusedVerdict {
                post_id: row.post_id,
                label: row.label,
                vote_counts: VoteCounts {
                    negative: row.votes_neg,
                    neutral: row.votes_neu,
                    positive: row.votes_pos,
                },
                contributing_backends: BTreeSet::new(),
                tie_broken: row.tie_broken,
                quorum_met: row.quorum_met,
            })
        })
        .collect()
}
