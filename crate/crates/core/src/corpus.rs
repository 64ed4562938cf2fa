//! Topic-tagged multilingual post collections: loading, normalization,
//! filtering and corpus statistics.
//!
//! Two on-disk formats are supported, both UTF-8:
//!
//! * csv with header `id,text,language,topic,gold_label`
//! * jsonl with one object per line using the same keys
//!
//! `gold_label` may be empty (csv) or absent (jsonl) for unlabeled posts.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use num_rational::Ratio;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::label::SentimentLabel;

pub const URL_TOKEN: &str = "<url>";
pub const USER_TOKEN: &str = "<user>";

pub const DEFAULT_LANGUAGES: [&str; 3] = ["English", "Sepedi", "Setswana"];

pub const DEFAULT_TOPICS: [&str; 10] = [
    "employment",
    "sanitation",
    "police service",
    "education",
    "health",
    "small business",
    "transport",
    "home affairs",
    "rural development",
    "agriculture",
];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Language(String);

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Topic(String);

macro_rules! name_newtype {
    ($ty:ident) => {
        impl $ty {
            pub fn new(name: impl Into<String>) -> Self {
                $ty(name.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $ty {
            fn from(s: &str) -> Self {
                $ty(s.to_string())
            }
        }
    };
}

name_newtype!(Language);
name_newtype!(Topic);

/// The configured set of languages and topics a corpus may use.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Registry {
    pub languages: Vec<Language>,
    pub topics: Vec<Topic>,
}

impl Default for Registry {
    fn default() -> Self {
        Registry {
            languages: DEFAULT_LANGUAGES.iter().map(|&l| Language::from(l)).collect(),
            topics: DEFAULT_TOPICS.iter().map(|&t| Topic::from(t)).collect(),
        }
    }
}

/// Case-, underscore- and hyphen-insensitive lookup key.
fn registry_key(raw: &str) -> String {
    raw.to_lowercase()
        .replace(['_', '-'], " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

impl Registry {
    pub fn resolve_language(&self, raw: &str) -> Option<Language> {
        let key = registry_key(raw);
        self.languages
            .iter()
            .find(|l| registry_key(l.as_str()) == key)
            .cloned()
    }

    pub fn resolve_topic(&self, raw: &str) -> Option<Topic> {
        let key = registry_key(raw);
        self.topics
            .iter()
            .find(|t| registry_key(t.as_str()) == key)
            .cloned()
    }

    pub fn topic_position(&self, topic: &Topic) -> Option<usize> {
        self.topics.iter().position(|t| t == topic)
    }

    pub fn language_position(&self, language: &Language) -> Option<usize> {
        self.languages.iter().position(|l| l == language)
    }
}

/// One social-media post, the unit of classification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub text: String,
    pub language: Language,
    pub topic: Topic,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_label: Option<SentimentLabel>,
}

impl Post {
    /// Builds a post, normalizing `raw_text`. Returns `None` when the text
    /// is empty after normalization.
    pub fn new(
        id: impl Into<String>,
        raw_text: &str,
        language: Language,
        topic: Topic,
        gold_label: Option<SentimentLabel>,
    ) -> Option<Post> {
        let text = normalize_text(raw_text);
        if text.is_empty() {
            return None;
        }
        Some(Post {
            id: id.into(),
            text,
            language,
            topic,
            gold_label,
        })
    }

    pub fn word_tokens(&self) -> usize {
        self.text.split_whitespace().count()
    }
}

fn url_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(?:https?://|www\.)\S+").expect("valid url regex"))
}

fn mention_pattern() -> &'static Regex {
    // `\B@` skips e-mail addresses such as `info@gov.za`.
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\B@\w+").expect("valid mention regex"))
}

/// Replaces URLs with `<url>` and user mentions with `<user>`, collapses
/// whitespace runs to one space and trims. Case, emoji and hashtags are
/// left alone. Idempotent.
pub fn normalize_text(raw: &str) -> String {
    let no_urls = url_pattern().replace_all(raw, URL_TOKEN);
    let no_users = mention_pattern().replace_all(&no_urls, USER_TOKEN);
    no_users.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn filter_by_topic(posts: &[Post], topic: &Topic) -> Vec<Post> {
    posts.iter().filter(|p| &p.topic == topic).cloned().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Csv,
    Jsonl,
}

impl CorpusFormat {
    /// Guesses the format from a file extension (`.jsonl`/`.ndjson` vs
    /// anything else).
    pub fn from_path(path: &Path) -> CorpusFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("ndjson") | Some("json") => CorpusFormat::Jsonl,
            _ => CorpusFormat::Csv,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: u64, message: String },
    #[error("missing required column `{0}`")]
    MissingColumn(&'static str),
    #[error("line {line}: unknown language {value:?}")]
    UnknownLanguage { line: u64, value: String },
    #[error("line {line}: unknown topic {value:?}")]
    UnknownTopic { line: u64, value: String },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: u64, id: String },
    #[error("line {line}: post {id:?} has empty text after normalization")]
    EmptyText { line: u64, id: String },
    #[error("line {line}: invalid gold_label {value:?}")]
    InvalidLabel { line: u64, value: String },
    #[error("write failed: {0}")]
    Write(String),
}

const REQUIRED_COLUMNS: [&str; 4] = ["id", "text", "language", "topic"];

#[derive(Debug, Deserialize)]
struct RawRow {
    id: String,
    text: String,
    language: String,
    topic: String,
    #[serde(default)]
    gold_label: Option<String>,
}

struct RowBuilder<'a> {
    registry: &'a Registry,
    seen: HashSet<String>,
}

impl RowBuilder<'_> {
    fn build(&mut self, line: u64, row: RawRow) -> Result<Post, CorpusError> {
        let language = self
            .registry
            .resolve_language(&row.language)
            .ok_or_else(|| CorpusError::UnknownLanguage {
                line,
                value: row.language.clone(),
            })?;
        let topic = self
            .registry
            .resolve_topic(&row.topic)
            .ok_or_else(|| CorpusError::UnknownTopic {
                line,
                value: row.topic.clone(),
            })?;
        let gold_label = match row.gold_label.as_deref().map(str::trim) {
            None | Some("") => None,
            Some(raw) => Some(SentimentLabel::parse_lenient(raw).ok_or_else(|| {
                CorpusError::InvalidLabel {
                    line,
                    value: raw.to_string(),
                }
            })?),
        };
        if !self.seen.insert(row.id.clone()) {
            return Err(CorpusError::DuplicateId { line, id: row.id });
        }
        Post::new(row.id.clone(), &row.text, language, topic, gold_label)
            .ok_or(CorpusError::EmptyText { line, id: row.id })
    }
}

pub fn load_corpus(
    path: &Path,
    format: CorpusFormat,
    registry: &Registry,
) -> Result<Vec<Post>, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_corpus(BufReader::new(file), format, registry)
}

pub fn read_corpus<R: Read>(
    reader: R,
    format: CorpusFormat,
    registry: &Registry,
) -> Result<Vec<Post>, CorpusError> {
    let mut builder = RowBuilder {
        registry,
        seen: HashSet::new(),
    };
    match format {
        CorpusFormat::Csv => read_csv(reader, &mut builder),
        CorpusFormat::Jsonl => read_jsonl(reader, &mut builder),
    }
}

fn read_csv<R: Read>(reader: R, builder: &mut RowBuilder<'_>) -> Result<Vec<Post>, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::Headers)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CorpusError::Malformed {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    for column in REQUIRED_COLUMNS {
        if !headers.iter().any(|h| h.trim() == column) {
            return Err(CorpusError::MissingColumn(column));
        }
    }
    let mut posts = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| CorpusError::Malformed {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row: RawRow = record
            .deserialize(Some(&headers))
            .map_err(|e| CorpusError::Malformed {
                line,
                message: e.to_string(),
            })?;
        posts.push(builder.build(line, row)?);
    }
    Ok(posts)
}

fn read_jsonl<R: Read>(reader: R, builder: &mut RowBuilder<'_>) -> Result<Vec<Post>, CorpusError> {
    let mut posts = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = idx as u64 + 1;
        let line = line.map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                line: line_no,
                message: e.to_string(),
            })?;
        for column in REQUIRED_COLUMNS {
            if value.get(column).is_none() {
                return Err(CorpusError::MissingColumn(column));
            }
        }
        let row: RawRow = serde_json::from_value(value).map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        posts.push(builder.build(line_no, row)?);
    }
    Ok(posts)
}

#[derive(Serialize)]
struct OutRow<'a> {
    id: &'a str,
    text: &'a str,
    language: &'a str,
    topic: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    gold_label: Option<&'static str>,
}

impl<'a> From<&'a Post> for OutRow<'a> {
    fn from(p: &'a Post) -> Self {
        OutRow {
            id: &p.id,
            text: &p.text,
            language: p.language.as_str(),
            topic: p.topic.as_str(),
            gold_label: p.gold_label.map(SentimentLabel::as_str),
        }
    }
}

pub fn write_corpus<W: Write>(
    posts: &[Post],
    mut writer: W,
    format: CorpusFormat,
) -> Result<(), CorpusError> {
    let fail = |e: &dyn std::fmt::Display| CorpusError::Write(e.to_string());
    match format {
        CorpusFormat::Csv => {
            let mut wtr = csv::Writer::from_writer(writer);
            wtr.write_record(["id", "text", "language", "topic", "gold_label"])
                .map_err(|e| fail(&e))?;
            for p in posts {
                wtr.write_record([
                    p.id.as_str(),
                    p.text.as_str(),
                    p.language.as_str(),
                    p.topic.as_str(),
                    p.gold_label.map(SentimentLabel::as_str).unwrap_or(""),
                ])
                .map_err(|e| fail(&e))?;
            }
            wtr.flush().map_err(|e| fail(&e))?;
        }
        CorpusFormat::Jsonl => {
            for p in posts {
                serde_json::to_writer(&mut writer, &OutRow::from(p)).map_err(|e| fail(&e))?;
                writer.write_all(b"\n").map_err(|e| fail(&e))?;
            }
            writer.flush().map_err(|e| fail(&e))?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CellCount {
    pub language: Language,
    pub topic: Topic,
    pub posts: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub total: usize,
    /// Non-empty (language, topic) cells, sorted by language then topic.
    pub cells: Vec<CellCount>,
    pub mean_word_tokens: BTreeMap<Language, Ratio<u64>>,
}

impl CorpusStats {
    pub fn cell(&self, language: &Language, topic: &Topic) -> usize {
        self.cells
            .iter()
            .find(|c| &c.language == language && &c.topic == topic)
            .map_or(0, |c| c.posts)
    }

    pub fn mean_word_tokens_f64(&self, language: &Language) -> Option<f64> {
        self.mean_word_tokens
            .get(language)
            .map(|r| *r.numer() as f64 / *r.denom() as f64)
    }
}

pub fn corpus_stats(posts: &[Post]) -> CorpusStats {
    let mut cells: BTreeMap<(Language, Topic), usize> = BTreeMap::new();
    let mut words: BTreeMap<Language, (u64, u64)> = BTreeMap::new();
    for p in posts {
        *cells.entry((p.language.clone(), p.topic.clone())).or_default() += 1;
        let w = words.entry(p.language.clone()).or_default();
        w.0 += p.word_tokens() as u64;
        w.1 += 1;
    }
    CorpusStats {
        total: posts.len(),
        cells: cells
            .into_iter()
            .map(|((language, topic), posts)| CellCount {
                language,
                topic,
                posts,
            })
            .collect(),
        mean_word_tokens: words
            .into_iter()
            .map(|(lang, (w, n))| (lang, Ratio::new(w, n)))
            .collect(),
    }
}
