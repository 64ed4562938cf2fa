//! Error rates, F1 scores, significance tests and the evaluation report.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::backends::Verdict;
use crate::corpus::{Language, Post, Registry, Topic};
use crate::fusion::{mean_correlation, CorrelationGrouping, FusedVerdict, GroupCorrelation, VerdictMatrix};
use crate::label::SentimentLabel;
use crate::scoring::{format_decimal, Rational};
use crate::stats::{welch_t_test, WelchTest};

pub const FUSED_COLUMN: &str = "fused";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("post {0:?} has no gold label")]
    MissingGold(String),
    #[error("no predictions to evaluate")]
    NoPredictions,
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("verdict matrix: {0}")]
    Matrix(String),
}

/// Fraction of predictions that differ from the gold label.
pub fn error_rate(
    predictions: &[(String, SentimentLabel)],
    gold: &HashMap<String, SentimentLabel>,
) -> Result<Rational, EvalError> {
    if predictions.is_empty() {
        return Err(EvalError::NoPredictions);
    }
    let mut wrong = 0i64;
    for (post_id, label) in predictions {
        let truth = gold.get(post_id).ok_or_else(|| EvalError::MissingGold(post_id.clone()))?;
        if truth != label {
            wrong += 1;
        }
    }
    Ok(Ratio::new(wrong, predictions.len() as i64))
}

/// 3×3 counts indexed `[gold][predicted]` in canonical label order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn from_counts(counts: [[u64; 3]; 3]) -> Self {
        ConfusionMatrix { counts }
    }

    pub fn add(&mut self, gold: SentimentLabel, predicted: SentimentLabel) {
        self.counts[gold.index()][predicted.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..3).map(|i| self.counts[i][i]).sum()
    }

    pub fn gold_count(&self, label: SentimentLabel) -> u64 {
        self.counts[label.index()].iter().sum()
    }

    pub fn predicted_count(&self, label: SentimentLabel) -> u64 {
        (0..3).map(|g| self.counts[g][label.index()]).sum()
    }

    pub fn accuracy(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| self.correct() as f64 / total as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Scores {
    /// `None` for a class with neither gold members nor predictions.
    pub per_class: [Option<ClassScore>; 3],
    pub macro_f1: f64,
    pub micro_f1: f64,
}

/// Per-class, macro and micro F1.
///
/// Precision or recall with a zero denominator count as 0. A class absent
/// from both gold and predictions has no F1 and is left out of the macro
/// mean.
pub fn f1_scores(confusion: &ConfusionMatrix) -> Result<F1Scores, EvalError> {
    let total = confusion.total();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let per_class = SentimentLabel::ALL.map(|label| {
        let i = label.index();
        let tp = confusion.counts[i][i];
        let fp = confusion.predicted_count(label) - tp;
        let fn_ = confusion.gold_count(label) - tp;
        if tp + fp + fn_ == 0 {
            return None;
        }
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        Some(ClassScore {
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            f1: ratio(2 * tp, 2 * tp + fp + fn_),
        })
    });
    let defined: Vec<f64> = per_class.iter().flatten().map(|c| c.f1).collect();
    let macro_f1 = defined.iter().sum::<f64>() / defined.len() as f64;
    // Single-label: pooled FP = pooled FN = errors, so micro-F1 = accuracy.
    let correct = confusion.correct();
    let errors = total - correct;
    let micro_f1 = (2 * correct) as f64 / (2 * correct + 2 * errors) as f64;
    Ok(F1Scores {
        per_class,
        macro_f1,
        micro_f1,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "scope", content = "name", rename_all = "snake_case")]
pub enum Scope {
    Topic(Topic),
    Language(Language),
    Overall,
}

impl Scope {
    pub fn name(&self) -> String {
        match self {
            Scope::Topic(t) => t.to_string(),
            Scope::Language(l) => l.to_string(),
            Scope::Overall => "Overall".to_string(),
        }
    }

    fn contains(&self, post: &Post) -> bool {
        match self {
            Scope::Topic(t) => &post.topic == t,
            Scope::Language(l) => &post.language == l,
            Scope::Overall => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateCell {
    pub errors: u64,
    pub n: u64,
}

impl RateCell {
    pub fn rate(&self) -> Option<Rational> {
        (self.n > 0).then(|| Ratio::new(self.errors as i64, self.n as i64))
    }

    /// e.g. `12.8%`; `None` when the cell has no predictions.
    pub fn percent(&self, places: u32) -> Option<String> {
        self.rate().map(|r| format!("{}%", format_decimal(&(r * 100), places)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub scope: Scope,
    pub cells: Vec<RateCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Cell {
    pub n: u64,
    pub scores: Option<F1Scores>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Row {
    pub scope: Scope,
    pub cells: Vec<F1Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestRow {
    pub a: String,
    pub b: String,
    pub samples: usize,
    pub result: Option<WelchTest>,
    pub degenerate: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Backend columns followed by `fused`.
    pub columns: Vec<String>,
    pub error_rates: Vec<ErrorRow>,
    pub f1: Vec<F1Row>,
    pub correlation: Vec<GroupCorrelation>,
    pub t_tests: Vec<TTestRow>,
    pub evaluated_posts: usize,
    pub unlabeled_excluded: usize,
    pub fused_quorum_failed: usize,
    pub annotator_note: Option<String>,
}

impl EvaluationReport {
    pub fn error_cell(&self, scope: &Scope, column: &str) -> Option<&RateCell> {
        let col = self.columns.iter().position(|c| c == column)?;
        self.error_rates.iter().find(|r| &r.scope == scope).map(|r| &r.cells[col])
    }

    pub fn f1_cell(&self, scope: &Scope, column: &str) -> Option<&F1Cell> {
        let col = self.columns.iter().position(|c| c == column)?;
        self.f1.iter().find(|r| &r.scope == scope).map(|r| &r.cells[col])
    }

    /// Cells without any prediction, as `scope/column`.
    pub fn incomputable_cells(&self) -> Vec<String> {
        let mut out = Vec::new();
        for row in &self.error_rates {
            for (cell, col) in row.cells.iter().zip(&self.columns) {
                if cell.n == 0 {
                    out.push(format!("{}/{}", row.scope.name(), col));
                }
            }
        }
        out
    }
}

pub struct ReportInput<'a> {
    pub posts: &'a [Post],
    pub registry: &'a Registry,
    pub backend_ids: &'a [String],
    pub verdicts: &'a [Verdict],
    pub fused: &'a [FusedVerdict],
    pub annotator_note: Option<String>,
}

/// Fills the per-topic / per-language / overall error table, the
/// per-language / overall F1 table, agreement correlations and Welch tests
/// on per-topic error rates for every backend pair.
pub fn build_report(input: &ReportInput<'_>) -> Result<EvaluationReport, EvalError> {
    let labeled: Vec<&Post> = input.posts.iter().filter(|p| p.gold_label.is_some()).collect();
    let unlabeled_excluded = input.posts.len() - labeled.len();
    let labeled_ids: HashSet<&str> = labeled.iter().map(|p| p.id.as_str()).collect();

    // predictions[col] = post_id -> label
    let mut predictions: Vec<HashMap<&str, SentimentLabel>> = vec![HashMap::new(); input.backend_ids.len() + 1];
    let col_of: HashMap<&str, usize> = input
        .backend_ids
        .iter()
        .enumerate()
        .map(|(i, b)| (b.as_str(), i))
        .collect();
    for v in input.verdicts {
        if let Some(&col) = col_of.get(v.backend_id.as_str()) {
            if labeled_ids.contains(v.post_id.as_str()) {
                predictions[col].insert(v.post_id.as_str(), v.label);
            }
        }
    }
    let fused_col = input.backend_ids.len();
    let mut fused_quorum_failed = 0;
    for f in input.fused {
        if !f.quorum_met {
            fused_quorum_failed += 1;
        } else if labeled_ids.contains(f.post_id.as_str()) {
            predictions[fused_col].insert(f.post_id.as_str(), f.label);
        }
    }

    let mut columns: Vec<String> = input.backend_ids.to_vec();
    columns.push(FUSED_COLUMN.to_string());

    let topics: Vec<Topic> = ordered_present(input.registry.topics.iter(), labeled.iter().map(|p| &p.topic));
    let languages: Vec<Language> = ordered_present(input.registry.languages.iter(), labeled.iter().map(|p| &p.language));

    let confusion_for = |scope: &Scope, col: usize| {
        let mut cm = ConfusionMatrix::default();
        for post in labeled.iter().filter(|p| scope.contains(p)) {
            if let (Some(gold), Some(pred)) = (post.gold_label, predictions[col].get(post.id.as_str())) {
                cm.add(gold, *pred);
            }
        }
        cm
    };

    let mut error_scopes: Vec<Scope> = topics.iter().cloned().map(Scope::Topic).collect();
    error_scopes.extend(languages.iter().cloned().map(Scope::Language));
    error_scopes.push(Scope::Overall);
    let error_rates: Vec<ErrorRow> = error_scopes
        .iter()
        .map(|scope| ErrorRow {
            scope: scope.clone(),
            cells: (0..columns.len())
                .map(|col| {
                    let cm = confusion_for(scope, col);
                    RateCell {
                        errors: cm.total() - cm.correct(),
                        n: cm.total(),
                    }
                })
                .collect(),
        })
        .collect();

    let mut f1_scopes: Vec<Scope> = languages.iter().cloned().map(Scope::Language).collect();
    f1_scopes.push(Scope::Overall);
    let f1: Vec<F1Row> = f1_scopes
        .iter()
        .map(|scope| F1Row {
            scope: scope.clone(),
            cells: (0..columns.len())
                .map(|col| {
                    let cm = confusion_for(scope, col);
                    F1Cell {
                        n: cm.total(),
                        scores: f1_scores(&cm).ok(),
                    }
                })
                .collect(),
        })
        .collect();

    let all_verdicts: Vec<Verdict> = input
        .verdicts
        .iter()
        .filter(|v| col_of.contains_key(v.backend_id.as_str()))
        .cloned()
        .collect();
    let matrix = VerdictMatrix::from_verdicts(
        input.posts.iter().map(|p| p.id.clone()).collect(),
        input.backend_ids.to_vec(),
        &all_verdicts,
    )
    .map_err(|e| EvalError::Matrix(e.to_string()))?;
    let language_of: HashMap<String, Language> = input.posts.iter().map(|p| (p.id.clone(), p.language.clone())).collect();
    let mut correlation = mean_correlation(CorrelationGrouping::Language, &matrix, &language_of);
    correlation.extend(mean_correlation(CorrelationGrouping::Overall, &matrix, &language_of));

    let topic_rates = |col: usize| -> Vec<Option<f64>> {
        error_rates
            .iter()
            .filter(|r| matches!(r.scope, Scope::Topic(_)))
            .map(|r| r.cells[col].rate().map(|q| crate::scoring::to_f64(&q)))
            .collect()
    };
    let mut t_tests = Vec::new();
    for i in 0..input.backend_ids.len() {
        for j in (i + 1)..input.backend_ids.len() {
            let (a, b): (Vec<f64>, Vec<f64>) = topic_rates(i)
                .into_iter()
                .zip(topic_rates(j))
                .filter_map(|(x, y)| Some((x?, y?)))
                .unzip();
            let test = welch_t_test(&a, &b);
            t_tests.push(TTestRow {
                a: input.backend_ids[i].clone(),
                b: input.backend_ids[j].clone(),
                samples: a.len(),
                degenerate: test.as_ref().err().map(ToString::to_string),
                result: test.ok(),
            });
        }
    }

    Ok(EvaluationReport {
        columns,
        error_rates,
        f1,
        correlation,
        t_tests,
        evaluated_posts: labeled.len(),
        unlabeled_excluded,
        fused_quorum_failed,
        annotator_note: input.annotator_note.clone(),
    })
}

/// Registry entries that occur in `present`, in registry order, followed
/// by unregistered ones in sorted order.
fn ordered_present<'a, T: Ord + Clone + std::hash::Hash + 'a>(
    registry: impl Iterator<Item = &'a T>,
    present: impl Iterator<Item = &'a T>,
) -> Vec<T> {
    let present: HashSet<&T> = present.collect();
    let mut out: Vec<T> = Vec::new();
    for item in registry {
        if present.contains(item) {
            out.push(item.clone());
        }
    }
    let mut extra: Vec<T> = present.into_iter().filter(|t| !out.contains(t)).cloned().collect();
    extra.sort();
    out.extend(extra);
    out
}

fn percent_f64(x: f64) -> String {
    format!("{:.1}%", x * 100.0)
}

fn render_grid(out: &mut String, header: &[String], rows: &[Vec<String>]) {
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            rows.iter()
                .map(|r| r[c].chars().count())
                .chain(std::iter::once(header[c].chars().count()))
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (cell, w))| {
                if i == 0 {
                    format!("{cell:<w$}")
                } else {
                    format!("{cell:>w$}")
                }
            })
            .collect::<Vec<_>>()
            .join("  ")
    };
    let _ = writeln!(out, "{}", line(header).trim_end());
    let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len().saturating_sub(1))));
    for r in rows {
        let _ = writeln!(out, "{}", line(r).trim_end());
    }
}

fn error_table_rows(report: &EvaluationReport) -> Vec<Vec<String>> {
    report
        .error_rates
        .iter()
        .map(|row| {
            std::iter::once(row.scope.name())
                .chain(row.cells.iter().map(|c| c.percent(1).unwrap_or_else(|| "n/a".into())))
                .collect()
        })
        .collect()
}

fn f1_table_rows(report: &EvaluationReport, micro: bool) -> Vec<Vec<String>> {
    report
        .f1
        .iter()
        .map(|row| {
            std::iter::once(row.scope.name())
                .chain(row.cells.iter().map(|c| match &c.scores {
                    Some(s) => percent_f64(if micro { s.micro_f1 } else { s.macro_f1 }),
                    None => "n/a".into(),
                }))
                .collect()
        })
        .collect()
}

/// Aligned plain-text tables.
pub fn render_text(report: &EvaluationReport) -> String {
    let mut out = String::new();
    let mut header = vec![String::new()];
    header.extend(report.columns.iter().cloned());

    let _ = writeln!(out, "Error rates ({} labeled posts)", report.evaluated_posts);
    render_grid(&mut out, &header, &error_table_rows(report));
    let _ = writeln!(out);
    let _ = writeln!(out, "Macro-F1");
    render_grid(&mut out, &header, &f1_table_rows(report, false));
    let _ = writeln!(out);
    let _ = writeln!(out, "Micro-F1 (= accuracy)");
    render_grid(&mut out, &header, &f1_table_rows(report, true));
    let _ = writeln!(out);
    let _ = writeln!(out, "Mean pairwise Pearson r between backends");
    for c in &report.correlation {
        let value = c.mean_r.map_or_else(|| "undefined".to_string(), |r| format!("{r:.3}"));
        let _ = write!(out, "  {:<10} {value} ({} pairs)", c.group, c.pairs_used);
        if !c.undefined_pairs.is_empty() {
            let _ = write!(out, ", {} undefined", c.undefined_pairs.len());
        }
        let _ = writeln!(out);
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "Welch t-tests on per-topic error rates");
    for t in &report.t_tests {
        match &t.result {
            Some(r) => {
                let _ = writeln!(
                    out,
                    "  {} vs {}: t = {:.3}, df = {:.2}, p = {:.4}",
                    t.a, t.b, r.t, r.degrees_of_freedom, r.p_two_sided
                );
            }
            None => {
                let _ = writeln!(
                    out,
                    "  {} vs {}: degenerate ({})",
                    t.a,
                    t.b,
                    t.degenerate.as_deref().unwrap_or("no data")
                );
            }
        }
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "Unlabeled posts excluded: {}", report.unlabeled_excluded);
    let _ = writeln!(out, "Fused posts below quorum: {}", report.fused_quorum_failed);
    if let Some(note) = &report.annotator_note {
        let _ = writeln!(out, "Note: {note}");
    }
    out
}

fn csv_table(report: &EvaluationReport, rows: Vec<Vec<String>>) -> String {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let mut header = vec!["scope".to_string()];
    header.extend(report.columns.iter().cloned());
    wtr.write_record(&header).expect("in-memory csv");
    for r in rows {
        wtr.write_record(&r).expect("in-memory csv");
    }
    String::from_utf8(wtr.into_inner().expect("in-memory csv")).expect("utf-8")
}

pub fn error_rates_csv(report: &EvaluationReport) -> String {
    csv_table(report, error_table_rows(report))
}

pub fn f1_csv(report: &EvaluationReport) -> String {
    csv_table(report, f1_table_rows(report, false))
}
