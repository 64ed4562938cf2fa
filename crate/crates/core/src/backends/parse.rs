//! Parsing of `id,label` csv replies into verdicts.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::Verdict;
use crate::label::SentimentLabel;
use crate::prompting::Batch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseIssueKind {
    /// The batch post has no line in the reply.
    Missing,
    /// The reply names an id that is not in the batch.
    UnknownId,
    /// A second line for an id already answered; the first one is kept.
    Duplicate,
    /// The label is outside the three classes.
    UnparseableLabel,
    /// The line is not an `id,label` record at all.
    MalformedLine,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseIssue {
    pub kind: ParseIssueKind,
    pub post_id: Option<String>,
    /// 1-based line in the reply; `None` for missing posts.
    pub line: Option<usize>,
    pub fragment: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedResponse {
    /// In batch order.
    pub verdicts: Vec<Verdict>,
    pub issues: Vec<ParseIssue>,
}

impl ParsedResponse {
    /// Batch posts that did not receive a verdict.
    pub fn unresolved(&self, batch: &Batch) -> usize {
        batch.len() - self.verdicts.len()
    }
}

fn is_header(id: &str, label: &str) -> bool {
    (id.eq_ignore_ascii_case("id") || id.eq_ignore_ascii_case("post_id"))
        && label.eq_ignore_ascii_case("label")
}

fn split_record(line: &str) -> Option<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(line.as_bytes());
    let record = rdr.records().next()?.ok()?;
    Some(record.iter().map(|f| f.trim().to_string()).collect())
}

/// Parses a model reply for `batch`. Never fails: every problem becomes a
/// [`ParseIssue`].
pub fn parse_response(text: &str, batch: &Batch, backend_id: &str) -> ParsedResponse {
    let batch_ids: HashSet<&str> = batch.post_ids().collect();
    let mut answered: HashSet<String> = HashSet::new();
    let mut labels: Vec<(String, SentimentLabel, String)> = Vec::new();
    let mut issues = Vec::new();

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with("```") {
            continue;
        }
        let issue = |kind, post_id: Option<&str>| ParseIssue {
            kind,
            post_id: post_id.map(str::to_string),
            line: Some(line_no),
            fragment: Some(line.to_string()),
        };
        let fields = match split_record(line) {
            Some(f) if f.len() >= 2 && !f[0].is_empty() => f,
            _ => {
                issues.push(issue(ParseIssueKind::MalformedLine, None));
                continue;
            }
        };
        let id = fields[0].as_str();
        let label_field = fields[fields.len() - 1].as_str();
        if is_header(id, label_field) {
            continue;
        }
        if !batch_ids.contains(id) {
            issues.push(issue(ParseIssueKind::UnknownId, Some(id)));
            continue;
        }
        if !answered.insert(id.to_string()) {
            issues.push(issue(ParseIssueKind::Duplicate, Some(id)));
            continue;
        }
        match SentimentLabel::parse_lenient(label_field) {
            Some(label) => labels.push((id.to_string(), label, line.to_string())),
            None => issues.push(issue(ParseIssueKind::UnparseableLabel, Some(id))),
        }
    }

    let mut verdicts = Vec::with_capacity(labels.len());
    for post in &batch.posts {
        if let Some((_, label, fragment)) = labels.iter().find(|(id, _, _)| id == &post.id) {
            verdicts.push(Verdict {
                post_id: post.id.clone(),
                backend_id: backend_id.to_string(),
                label: *label,
                raw_fragment: Some(fragment.clone()),
            });
        } else if !answered.contains(&post.id) {
            issues.push(ParseIssue {
                kind: ParseIssueKind::Missing,
                post_id: Some(post.id.clone()),
                line: None,
                fragment: None,
            });
        }
    }
    ParsedResponse { verdicts, issues }
}
