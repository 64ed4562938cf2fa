//! Reply-parser fixture table shared with the cli acceptance suite.

use sentifuse::backends::{parse_response, ParseIssueKind};
use sentifuse::prompting::{Batch, PromptTemplate};
use sentifuse::{Post, SentimentLabel, Topic};

use ParseIssueKind::*;
use SentimentLabel::*;

pub struct ParseCase {
    pub name: &'static str,
    pub batch: &'static [&'static str],
    pub reply: &'static str,
    pub verdicts: &'static [(&'static str, SentimentLabel)],
    /// (kind, post id, reply line)
    pub issues: &'static [(ParseIssueKind, Option<&'static str>, Option<usize>)],
}

pub fn parse_cases() -> Vec<ParseCase> {
    vec![
        ParseCase {
            name: "case and synonyms",
            batch: &["p1", "p2"],
            reply: "p1,Positive\np2,NEG",
            verdicts: &[("p1", Positive), ("p2", Negative)],
            issues: &[],
        },
        ParseCase {
            name: "case variants",
            batch: &["a", "b", "c"],
            reply: "a,NEGATIVE\nb,nEuTrAl\nc,positive",
            verdicts: &[("a", Negative), ("b", Neutral), ("c", Positive)],
            issues: &[],
        },
        ParseCase {
            name: "abbreviations quotes and spacing",
            batch: &["a", "b", "c"],
            reply: "  a , \"pos\"\nb,neu.\nc, 'Neg' ",
            verdicts: &[("a", Positive), ("b", Neutral), ("c", Negative)],
            issues: &[],
        },
        ParseCase {
            name: "header and code fence are skipped",
            batch: &["p1", "p2"],
            reply: "```csv\nid,label\np1,neutral\np2,positive\n```",
            verdicts: &[("p1", Neutral), ("p2", Positive)],
            issues: &[],
        },
        ParseCase {
            name: "missing row",
            batch: &["p1", "p2"],
            reply: "p1,positive",
            verdicts: &[("p1", Positive)],
            issues: &[(Missing, Some("p2"), None)],
        },
        ParseCase {
            name: "empty reply",
            batch: &["p1", "p2"],
            reply: "",
            verdicts: &[],
            issues: &[(Missing, Some("p1"), None), (Missing, Some("p2"), None)],
        },
        ParseCase {
            name: "duplicate id keeps first",
            batch: &["p1", "p2"],
            reply: "p1,negative\np2,neutral\np1,positive",
            verdicts: &[("p1", Negative), ("p2", Neutral)],
            issues: &[(Duplicate, Some("p1"), Some(3))],
        },
        ParseCase {
            name: "unknown id",
            batch: &["p1"],
            reply: "p1,positive\np9,negative",
            verdicts: &[("p1", Positive)],
            issues: &[(UnknownId, Some("p9"), Some(2))],
        },
        ParseCase {
            name: "junk lines",
            batch: &["p1", "p2"],
            reply: "Sure! Here are the labels:\np1,positive\n\n---\np2,negative\nHope this helps",
            verdicts: &[("p1", Positive), ("p2", Negative)],
            issues: &[(MalformedLine, None, Some(1)), (MalformedLine, None, Some(4)), (MalformedLine, None, Some(6))],
        },
        ParseCase {
            name: "label outside the closed set",
            batch: &["p1", "p2"],
            reply: "p1,mixed\np2,neutral",
            verdicts: &[("p2", Neutral)],
            issues: &[(UnparseableLabel, Some("p1"), Some(1))],
        },
        ParseCase {
            name: "out of order reply keeps batch order",
            batch: &["p1", "p2", "p3"],
            reply: "p3,pos\np1,neg\np2,neu",
            verdicts: &[("p1", Negative), ("p2", Neutral), ("p3", Positive)],
            issues: &[],
        },
        ParseCase {
            name: "everything at once",
            batch: &["p1", "p2", "p3", "p4"],
            reply: "Labels:\nP1,positive\np1,Pos\np2,unsure\np2,negative\np9,neutral\n",
            verdicts: &[("p1", Positive)],
            issues: &[
                (MalformedLine, None, Some(1)),
                (UnknownId, Some("P1"), Some(2)),
                (UnparseableLabel, Some("p2"), Some(4)),
                (Duplicate, Some("p2"), Some(5)),
                (UnknownId, Some("p9"), Some(6)),
                (Missing, Some("p3"), None),
                (Missing, Some("p4"), None),
            ],
        },
    ]
}

/// Runs one case; `Err` describes the first mismatch.
pub fn check_parse_case(case: &ParseCase) -> Result<(), String> {
    let posts: Vec<Post> = case
        .batch
        .iter()
        .map(|id| super::post(id, "English", "health", None))
        .collect();
    let batch = Batch::new(Topic::from("health"), posts, &PromptTemplate::default()).map_err(|e| e.to_string())?;
    let parsed = parse_response(case.reply, &batch, "b");
    let got: Vec<(&str, SentimentLabel)> = parsed.verdicts.iter().map(|v| (v.post_id.as_str(), v.label)).collect();
    if got != case.verdicts {
        return Err(format!("{}: verdicts {got:?}, expected {:?}", case.name, case.verdicts));
    }
    if parsed.verdicts.iter().any(|v| v.backend_id != "b" || v.raw_fragment.is_none()) {
        return Err(format!("{}: verdict metadata", case.name));
    }
    let issues: Vec<_> = parsed.issues.iter().map(|i| (i.kind, i.post_id.as_deref(), i.line)).collect();
    if issues != case.issues {
        return Err(format!("{}: issues {issues:?}, expected {:?}", case.name, case.issues));
    }
    Ok(())
}
