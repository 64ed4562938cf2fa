//! Topic-specific English prompts and token-budgeted batch packing.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Post, Topic};
use crate::label::SentimentLabel;

pub const DEFAULT_TEMPLATE: &str = include_str!("../templates/default_prompt.txt");

const PLACEHOLDER_TOPIC: &str = "{topic}";
const PLACEHOLDER_CLASSES: &str = "{class_definitions}";
const PLACEHOLDER_POSTS: &str = "{posts_csv}";

const POSTS_HEADER: &str = "id,text";

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("template is missing placeholder {0}")]
    MissingPlaceholder(&'static str),
    #[error("no definition for class `{0}`")]
    MissingClassDefinition(SentimentLabel),
    #[error("cannot build a prompt for an empty batch")]
    EmptyBatch,
    #[error("post {post_id:?} has topic {found:?}, batch topic is {expected:?}")]
    TopicMismatch {
        post_id: String,
        expected: String,
        found: String,
    },
    #[error("post {post_id:?} does not fit the token budget on its own ({needed} > {usable} tokens)")]
    PostTooLarge {
        post_id: String,
        needed: u64,
        usable: i64,
    },
    #[error("invalid token budget: {0}")]
    InvalidBudget(String),
    #[error("cannot read template {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    instruction_text: String,
    class_definitions: BTreeMap<SentimentLabel, String>,
}

pub fn default_class_definitions() -> BTreeMap<SentimentLabel, String> {
    BTreeMap::from([
        (
            SentimentLabel::Negative,
            "the post expresses criticism, complaint, anger, fear or dissatisfaction regarding the topic".to_string(),
        ),
        (
            SentimentLabel::Neutral,
            "the post is factual, mixed or expresses no clear opinion regarding the topic".to_string(),
        ),
        (
            SentimentLabel::Positive,
            "the post expresses approval, praise, hope or satisfaction regarding the topic".to_string(),
        ),
    ])
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate::new(DEFAULT_TEMPLATE, default_class_definitions())
            .expect("shipped template is valid")
    }
}

impl PromptTemplate {
    pub fn new(
        instruction_text: impl Into<String>,
        class_definitions: BTreeMap<SentimentLabel, String>,
    ) -> Result<Self, PromptError> {
        let instruction_text = instruction_text.into();
        for placeholder in [PLACEHOLDER_TOPIC, PLACEHOLDER_CLASSES, PLACEHOLDER_POSTS] {
            if !instruction_text.contains(placeholder) {
                return Err(PromptError::MissingPlaceholder(placeholder));
            }
        }
        for label in SentimentLabel::ALL {
            if !class_definitions.contains_key(&label) {
                return Err(PromptError::MissingClassDefinition(label));
            }
        }
        Ok(PromptTemplate {
            instruction_text,
            class_definitions,
        })
    }

    /// Loads a template file; class definitions are the built-in ones.
    pub fn from_file(path: &Path) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path).map_err(|source| PromptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        PromptTemplate::new(text, default_class_definitions())
    }

    pub fn instruction_text(&self) -> &str {
        &self.instruction_text
    }

    fn render_class_definitions(&self) -> String {
        self.class_definitions
            .iter()
            .map(|(label, def)| format!("{label}: {def}"))
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Single left-to-right pass so that placeholder-like text inside posts
    /// is never expanded.
    fn render(&self, topic: &Topic, posts_csv: &str) -> String {
        let classes = self.render_class_definitions();
        let mut out = String::with_capacity(self.instruction_text.len() + posts_csv.len() + classes.len());
        let mut rest = self.instruction_text.as_str();
        while let Some(start) = rest.find('{') {
            out.push_str(&rest[..start]);
            let tail = &rest[start..];
            let (value, len) = if tail.starts_with(PLACEHOLDER_TOPIC) {
                (topic.as_str(), PLACEHOLDER_TOPIC.len())
            } else if tail.starts_with(PLACEHOLDER_CLASSES) {
                (classes.as_str(), PLACEHOLDER_CLASSES.len())
            } else if tail.starts_with(PLACEHOLDER_POSTS) {
                (posts_csv, PLACEHOLDER_POSTS.len())
            } else {
                ("{", 1)
            };
            out.push_str(value);
            rest = &tail[len..];
        }
        out.push_str(rest);
        out
    }
}

/// A group of same-topic posts sent to a backend in one request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub topic: Topic,
    pub posts: Vec<Post>,
    pub estimated_tokens: u64,
}

impl Batch {
    /// Builds a batch and computes its prompt estimate with `template`.
    pub fn new(topic: Topic, posts: Vec<Post>, template: &PromptTemplate) -> Result<Batch, PromptError> {
        let mut batch = Batch {
            topic,
            posts,
            estimated_tokens: 0,
        };
        let prompt = build_prompt(template, &batch.topic, &batch)?;
        batch.estimated_tokens = estimate_tokens(&prompt);
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn contains(&self, post_id: &str) -> bool {
        self.posts.iter().any(|p| p.id == post_id)
    }

    pub fn post_ids(&self) -> impl Iterator<Item = &str> {
        self.posts.iter().map(|p| p.id.as_str())
    }

    /// Short human-readable identity used in error reports.
    pub fn label(&self) -> String {
        match (self.posts.first(), self.posts.last()) {
            (Some(first), Some(last)) => format!(
                "{}[{}..{}; {} posts]",
                self.topic,
                first.id,
                last.id,
                self.posts.len()
            ),
            _ => format!("{}[empty]", self.topic),
        }
    }

    /// Splits into two halves (first half gets the smaller share).
    pub fn split(&self) -> (Batch, Batch) {
        let mid = self.posts.len() / 2;
        let half = |posts: &[Post]| Batch {
            topic: self.topic.clone(),
            posts: posts.to_vec(),
            estimated_tokens: 0,
        };
        (half(&self.posts[..mid]), half(&self.posts[mid..]))
    }
}

impl fmt::Display for Batch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

fn csv_field(raw: &str) -> String {
    format!("\"{}\"", raw.replace('"', "\"\""))
}

fn csv_id(raw: &str) -> String {
    if raw.contains([',', '"', '\n', '\r']) {
        csv_field(raw)
    } else {
        raw.to_string()
    }
}

fn post_line(post: &Post) -> String {
    format!("{},{}", csv_id(&post.id), csv_field(&post.text))
}

fn posts_csv<'a>(posts: impl Iterator<Item = &'a Post>) -> String {
    let mut block = String::from(POSTS_HEADER);
    for post in posts {
        block.push('\n');
        block.push_str(&post_line(post));
    }
    block
}

/// Renders the English classification prompt for one batch.
pub fn build_prompt(template: &PromptTemplate, topic: &Topic, batch: &Batch) -> Result<String, PromptError> {
    if batch.is_empty() {
        return Err(PromptError::EmptyBatch);
    }
    if let Some(p) = batch.posts.iter().find(|p| &p.topic != topic) {
        return Err(PromptError::TopicMismatch {
            post_id: p.id.clone(),
            expected: topic.to_string(),
            found: p.topic.to_string(),
        });
    }
    Ok(template.render(topic, &posts_csv(batch.posts.iter())))
}

fn tokens_for_words(words: u64) -> u64 {
    (3 * words).div_ceil(2)
}

/// `ceil(1.5 * whitespace_word_count)`.
pub fn estimate_tokens(text: &str) -> u64 {
    tokens_for_words(text.split_whitespace().count() as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenBudget {
    pub context_limit: u64,
    /// Fixed tokens kept free for the reply.
    pub response_reserve: u64,
    /// Additional reply tokens per post in the batch.
    pub reserve_per_post: u64,
    pub safety_margin: f64,
}

pub const DEFAULT_RESPONSE_RESERVE: u64 = 64;
pub const DEFAULT_RESERVE_PER_POST: u64 = 4;
pub const DEFAULT_SAFETY_MARGIN: f64 = 0.9;

impl TokenBudget {
    pub fn new(
        context_limit: u64,
        response_reserve: u64,
        reserve_per_post: u64,
        safety_margin: f64,
    ) -> Result<Self, PromptError> {
        let budget = TokenBudget {
            context_limit,
            response_reserve,
            reserve_per_post,
            safety_margin,
        };
        budget.validate()?;
        Ok(budget)
    }

    /// Budget with the default reserve (64 + 4/post) and 0.9 margin.
    pub fn for_context(context_limit: u64) -> Result<Self, PromptError> {
        TokenBudget::new(
            context_limit,
            DEFAULT_RESPONSE_RESERVE,
            DEFAULT_RESERVE_PER_POST,
            DEFAULT_SAFETY_MARGIN,
        )
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        if !(self.safety_margin > 0.0 && self.safety_margin <= 1.0) {
            return Err(PromptError::InvalidBudget(format!(
                "safety margin {} outside (0, 1]",
                self.safety_margin
            )));
        }
        if self.response_reserve >= self.context_limit {
            return Err(PromptError::InvalidBudget(format!(
                "response reserve {} >= context limit {}",
                self.response_reserve, self.context_limit
            )));
        }
        if self.usable(0) <= 0 {
            return Err(PromptError::InvalidBudget(format!(
                "no usable tokens left in a {}-token context",
                self.context_limit
            )));
        }
        Ok(())
    }

    /// Prompt tokens available for a batch of `posts` posts.
    pub fn usable(&self, posts: usize) -> i64 {
        let scaled = (self.context_limit as f64 * self.safety_margin).floor() as i64;
        scaled - self.response_reserve as i64 - (self.reserve_per_post as i64) * posts as i64
    }
}

/// Greedy, order-preserving packing of same-topic posts into batches whose
/// rendered prompt fits `budget`.
pub fn pack_batches(
    posts: &[Post],
    template: &PromptTemplate,
    topic: &Topic,
    budget: &TokenBudget,
) -> Result<Vec<Batch>, PromptError> {
    budget.validate()?;
    if let Some(p) = posts.iter().find(|p| &p.topic != topic) {
        return Err(PromptError::TopicMismatch {
            post_id: p.id.clone(),
            expected: topic.to_string(),
            found: p.topic.to_string(),
        });
    }
    // Word counts are additive: the posts block is newline separated and
    // each rendered line has no surrounding whitespace.
    let overhead = template.render(topic, POSTS_HEADER).split_whitespace().count() as u64;
    let fits = |words: u64, n: usize| (tokens_for_words(words) as i64) <= budget.usable(n);

    let mut batches = Vec::new();
    let mut current: Vec<Post> = Vec::new();
    let mut words = overhead;
    for post in posts {
        let post_words = post_line(post).split_whitespace().count() as u64;
        if !fits(overhead + post_words, 1) {
            return Err(PromptError::PostTooLarge {
                post_id: post.id.clone(),
                needed: tokens_for_words(overhead + post_words),
                usable: budget.usable(1),
            });
        }
        if !current.is_empty() && !fits(words + post_words, current.len() + 1) {
            batches.push(Batch::new(topic.clone(), std::mem::take(&mut current), template)?);
            words = overhead;
        }
        current.push(post.clone());
        words += post_words;
    }
    if !current.is_empty() {
        batches.push(Batch::new(topic.clone(), current, template)?);
    }
    Ok(batches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Language;
    use proptest::prelude::*;

    fn health() -> Topic {
        Topic::from("health")
    }

    fn mk(id: &str, text: &str, lang: &str) -> Post {
        Post::new(id, text, Language::from(lang), health(), None).unwrap()
    }

    fn batch(posts: Vec<Post>) -> Batch {
        Batch::new(health(), posts, &PromptTemplate::default()).unwrap()
    }

    #[test]
    fn prompt_contains_topic_classes_and_csv_rows() {
        let b = batch(vec![mk("p1", "clinic queues are long", "English"), mk("p2", "nurses were \"kind\"", "English")]);
        let prompt = build_prompt(&PromptTemplate::default(), &health(), &b).unwrap();
        assert!(prompt.contains("health"));
        for label in SentimentLabel::ALL {
            assert!(prompt.contains(label.as_str()));
        }
        assert!(prompt.contains("id,text\np1,\"clinic queues are long\"\np2,\"nurses were \"\"kind\"\"\"\n"));
        assert!(prompt.contains("id,label"));
        assert_eq!(prompt, build_prompt(&PromptTemplate::default(), &health(), &b).unwrap());
    }

    #[test]
    fn prompt_is_english_for_sepedi_batches() {
        let b = batch(vec![mk("s1", "Dikliniki di a fokola", "Sepedi")]);
        let prompt = build_prompt(&PromptTemplate::default(), &health(), &b).unwrap();
        assert!(prompt.starts_with("Classify the sentiment of each social media post"));
    }

    #[test]
    fn placeholders_inside_posts_are_not_expanded() {
        let b = batch(vec![mk("x", "literal {topic} and {posts_csv}", "English")]);
        let prompt = build_prompt(&PromptTemplate::default(), &health(), &b).unwrap();
        assert!(prompt.contains("literal {topic} and {posts_csv}"));
    }

    #[test]
    fn empty_batch_and_mismatched_topic_fail() {
        let empty = Batch { topic: health(), posts: vec![], estimated_tokens: 0 };
        assert!(matches!(build_prompt(&PromptTemplate::default(), &health(), &empty), Err(PromptError::EmptyBatch)));
        let b = batch(vec![mk("p1", "x", "English")]);
        assert!(matches!(
            build_prompt(&PromptTemplate::default(), &Topic::from("transport"), &b),
            Err(PromptError::TopicMismatch { .. })
        ));
    }

    #[test]
    fn template_validation() {
        assert!(matches!(
            PromptTemplate::new("no placeholders", default_class_definitions()),
            Err(PromptError::MissingPlaceholder(_))
        ));
        let mut defs = default_class_definitions();
        defs.remove(&SentimentLabel::Neutral);
        assert!(matches!(
            PromptTemplate::new("{topic} {class_definitions} {posts_csv}", defs),
            Err(PromptError::MissingClassDefinition(SentimentLabel::Neutral))
        ));
    }

    #[test]
    fn token_estimates() {
        assert_eq!(estimate_tokens("one two three four"), 6);
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("a"), 2);
        assert_eq!(estimate_tokens("a b c"), 5);
    }

    #[test]
    fn budget_validation() {
        assert!(TokenBudget::new(100, 100, 0, 0.9).is_err());
        assert!(TokenBudget::new(100, 10, 0, 0.0).is_err());
        assert!(TokenBudget::new(100, 10, 0, 1.5).is_err());
        assert!(TokenBudget::new(100, 89, 0, 0.9).is_ok());
        assert!(TokenBudget::new(100, 90, 0, 0.9).is_err());
        let b = TokenBudget::for_context(2048).unwrap();
        assert_eq!(b.usable(0), 1843 - 64);
        assert_eq!(b.usable(10), 1843 - 64 - 40);
    }

    fn words(n: usize) -> String {
        vec!["w"; n].join(" ")
    }

    #[test]
    fn dolly_budget_packs_hundred_average_posts() {
        let posts: Vec<Post> = (0..100).map(|i| mk(&format!("p{i}"), &words(15), "English")).collect();
        let budget = TokenBudget::for_context(2048).unwrap();
        let template = PromptTemplate::default();
        let batches = pack_batches(&posts, &template, &health(), &budget).unwrap();
        for b in &batches {
            let prompt = build_prompt(&template, &health(), b).unwrap();
            assert!(estimate_tokens(&prompt) as i64 <= budget.usable(b.len()));
            assert_eq!(b.estimated_tokens, estimate_tokens(&prompt));
        }
        // 100 posts need ~2.4k tokens, more than Dolly's context.
        assert!(batches.len() >= 2);
        // Greedy: every batch except the last is full.
        for pair in batches.windows(2) {
            let mut extended = pair[0].posts.clone();
            extended.push(pair[1].posts[0].clone());
            let grown = Batch::new(health(), extended, &template).unwrap();
            assert!(grown.estimated_tokens as i64 > budget.usable(grown.len()));
        }
        let flat: Vec<_> = batches.iter().flat_map(|b| b.post_ids()).collect();
        let expected: Vec<_> = posts.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(flat, expected);
    }

    #[test]
    fn gpt4_budget_fits_everything_in_one_batch() {
        let posts: Vec<Post> = (0..100).map(|i| mk(&format!("p{i}"), &words(15), "English")).collect();
        let budget = TokenBudget::for_context(131_072).unwrap();
        let batches = pack_batches(&posts, &PromptTemplate::default(), &health(), &budget).unwrap();
        assert_eq!(batches.len(), 1);
    }

    #[test]
    fn oversized_post_is_named() {
        let posts = vec![mk("ok", "short", "English"), mk("huge", &words(3000), "English")];
        let budget = TokenBudget::for_context(2048).unwrap();
        match pack_batches(&posts, &PromptTemplate::default(), &health(), &budget) {
            Err(PromptError::PostTooLarge { post_id, .. }) => assert_eq!(post_id, "huge"),
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn estimate_is_monotone_in_word_count(n in 0usize..500) {
            prop_assert!(estimate_tokens(&words(n)) <= estimate_tokens(&words(n + 1)));
        }

        #[test]
        fn packing_partitions_posts(
            lens in proptest::collection::vec(1usize..60, 0..40),
            limit in 400u64..4000,
        ) {
            let posts: Vec<Post> = lens.iter().enumerate().map(|(i, &n)| mk(&format!("p{i}"), &words(n), "English")).collect();
            let budget = TokenBudget::for_context(limit).unwrap();
            let template = PromptTemplate::default();
            match pack_batches(&posts, &template, &health(), &budget) {
                Ok(batches) => {
                    let flat: Vec<_> = batches.iter().flat_map(|b| b.post_ids()).collect();
                    let expected: Vec<_> = posts.iter().map(|p| p.id.as_str()).collect();
                    prop_assert_eq!(flat, expected);
                    for b in &batches {
                        let prompt = build_prompt(&template, &health(), b).unwrap();
                        prop_assert!(estimate_tokens(&prompt) as i64 <= budget.usable(b.len()));
                        for id in b.post_ids() {
                            prop_assert!(prompt.contains(id));
                        }
                    }
                }
                Err(PromptError::PostTooLarge { .. }) => {}
                Err(e) => prop_assert!(false, "unexpected {e}"),
            }
        }
    }
}
