//! Fixture builders shared by the integration tests.
#![allow(dead_code)]

pub mod parse_cases;

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sentifuse::corpus::{Language, Post, Registry, Topic};
use sentifuse::{SentimentLabel, Verdict};

pub const BACKENDS: [&str; 5] = ["gpt-3.5", "gpt-4", "llama-2", "palm-2", "dolly-2"];

/// Table 1 language rows: GPT-3.5, GPT-4, LLaMa 2, PaLM 2, Dolly 2, fused (%).
pub const TABLE1_LANGUAGE_ROWS: [(&str, [f64; 6]); 3] = [
    ("English", [12.8, 8.6, 11.9, 9.5, 12.0, 0.4]),
    ("Sepedi", [12.3, 7.0, 9.7, 8.0, 10.0, 0.7]),
    ("Setswana", [10.0, 7.3, 12.2, 8.8, 11.8, 0.6]),
];

/// Table 1 overall row (%).
pub const TABLE1_OVERALL: [f64; 6] = [12.5, 8.2, 11.5, 9.2, 11.6, 0.5];

/// Table 1 per-topic rows (%), same column order.
pub const TABLE1_TOPIC_ROWS: [(&str, [f64; 6]); 10] = [
    ("agriculture", [11.2, 6.5, 10.9, 8.4, 11.9, 0.3]),
    ("education", [13.0, 8.4, 9.9, 8.9, 12.1, 0.5]),
    ("employment", [10.6, 6.7, 10.0, 6.5, 10.3, 0.3]),
    ("health", [13.5, 8.5, 11.0, 8.7, 12.5, 0.2]),
    ("home affairs", [12.4, 8.6, 12.7, 10.3, 12.1, 0.4]),
    ("police service", [12.9, 9.0, 12.6, 10.0, 11.0, 0.9]),
    ("rural development", [13.8, 6.3, 10.5, 12.6, 11.9, 0.3]),
    ("sanitation", [12.5, 7.0, 11.5, 8.9, 11.3, 0.6]),
    ("small business", [12.6, 7.5, 13.0, 10.4, 11.2, 0.6]),
    ("transport", [12.5, 10.9, 11.7, 8.8, 12.1, 0.6]),
];

pub fn table1_column(col: usize) -> Vec<f64> {
    TABLE1_TOPIC_ROWS.iter().map(|(_, row)| row[col]).collect()
}

pub fn post(id: &str, language: &str, topic: &str, gold: Option<SentimentLabel>) -> Post {
    Post::new(id, &format!("text of {id}"), Language::from(language), Topic::from(topic), gold).expect("non-empty text")
}

pub fn verdict(post_id: &str, backend_id: &str, label: SentimentLabel) -> Verdict {
    Verdict {
        post_id: post_id.to_string(),
        backend_id: backend_id.to_string(),
        label,
        raw_fragment: None,
    }
}

/// Labeled posts and a 5-backend verdict store realizing Table 1's language
/// rows: 1,000 posts per language spread over the 10 topics, backend `b`
/// wrong on exactly `round(rate_b * 10)` of them.
///
/// The first `F` posts of a language (F = fused errors) are wrong for
/// backends 0, 1 and 2 with the same wrong label, which outvotes the two
/// correct backends. The remaining errors are laid out post-major over
/// posts `F..1000`, two layers deep, so no other post has more than two
/// wrong votes and its majority stays correct.
pub fn table1_language_fixture() -> (Vec<Post>, Vec<Verdict>) {
    const PER_LANGUAGE: usize = 1000;
    let registry = Registry::default();
    let mut posts = Vec::new();
    let mut verdicts = Vec::new();
    for (language, row) in TABLE1_LANGUAGE_ROWS {
        let counts: Vec<usize> = row.iter().map(|r| (r * 10.0).round() as usize).collect();
        let fused_errors = counts[5];
        let ids: Vec<String> = (0..PER_LANGUAGE).map(|i| format!("{language}-{i:04}")).collect();
        let gold: Vec<SentimentLabel> = (0..PER_LANGUAGE).map(|i| SentimentLabel::ALL[i % 3]).collect();
        for (i, id) in ids.iter().enumerate() {
            let topic = registry.topics[i % registry.topics.len()].as_str();
            posts.push(post(id, language, topic, Some(gold[i])));
        }

        let mut wrong = vec![vec![false; PER_LANGUAGE]; 5];
        for w in wrong.iter_mut().take(3) {
            w[..fused_errors].iter_mut().for_each(|x| *x = true);
        }
        let capacity = PER_LANGUAGE - fused_errors;
        let mut slot = 0;
        for (b, &count) in counts.iter().take(5).enumerate() {
            let remaining = count - if b < 3 { fused_errors } else { 0 };
            for _ in 0..remaining {
                let p = fused_errors + slot % capacity;
                assert!(!wrong[b][p], "fixture layout overlaps itself");
                wrong[b][p] = true;
                slot += 1;
            }
        }
        assert!(slot <= 2 * capacity);

        for (b, backend) in BACKENDS.iter().enumerate() {
            for (i, id) in ids.iter().enumerate() {
                let label = if wrong[b][i] { gold[i].others()[0] } else { gold[i] };
                verdicts.push(verdict(id, backend, label));
            }
        }
    }
    (posts, verdicts)
}

/// `n` labeled posts with uniform random labels, languages and topics.
pub fn synthetic_posts(n: usize, seed: u64) -> Vec<Post> {
    let registry = Registry::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let language = registry.languages[i % 3].as_str();
            let topic = registry.topics[(i / 3) % registry.topics.len()].as_str();
            let words = rng.random_range(3..30);
            let text: Vec<String> = (0..words).map(|w| format!("w{}", (w * 7 + i) % 97)).collect();
            let gold = SentimentLabel::ALL[rng.random_range(0..3)];
            Post::new(format!("s{i:05}"), &text.join(" "), Language::from(language), Topic::from(topic), Some(gold))
                .expect("non-empty")
        })
        .collect()
}

pub fn gold_map(posts: &[Post]) -> HashMap<String, SentimentLabel> {
    posts
        .iter()
        .filter_map(|p| Some((p.id.clone(), p.gold_label?)))
        .collect()
}

/// Independent vote counter: the label strictly ahead of both others, or
/// neutral on any tie; `None` below quorum.
pub fn brute_force_vote(labels: &[SentimentLabel], quorum: usize) -> Option<(SentimentLabel, bool)> {
    if labels.len() < quorum {
        return None;
    }
    let neg = labels.iter().filter(|l| **l == SentimentLabel::Negative).count();
    let neu = labels.iter().filter(|l| **l == SentimentLabel::Neutral).count();
    let pos = labels.iter().filter(|l| **l == SentimentLabel::Positive).count();
    if neg > neu && neg > pos {
        Some((SentimentLabel::Negative, false))
    } else if neu > neg && neu > pos {
        Some((SentimentLabel::Neutral, false))
    } else if pos > neg && pos > neu {
        Some((SentimentLabel::Positive, false))
    } else {
        Some((SentimentLabel::Neutral, true))
    }
}

/// Per (language, topic) fused label counts (negative, neutral, positive),
/// 100 posts each, consistent with the published score spot values:
/// Setswana agriculture 0.64 and rural development 0.30 with mean -0.01,
/// Sepedi police service -0.84, education -0.71 and sanitation -0.77 with
/// mean -0.29, English employment -0.55 with mean -0.18. Employment, police
/// service, education and health are more than half negative overall.
pub fn score_fixture_counts() -> Vec<(&'static str, &'static str, u64, u64, u64)> {
    let mut rows = vec![
        ("English", "employment", 65, 25, 10),
        ("English", "sanitation", 35, 50, 15),
        ("English", "police service", 55, 30, 15),
        ("English", "education", 55, 30, 15),
        ("English", "health", 55, 30, 15),
        ("English", "small business", 25, 50, 25),
        ("English", "transport", 30, 50, 20),
        ("English", "home affairs", 30, 50, 20),
        ("English", "rural development", 15, 55, 30),
        ("English", "agriculture", 15, 50, 35),
        ("Sepedi", "employment", 55, 30, 15),
        ("Sepedi", "sanitation", 82, 13, 5),
        ("Sepedi", "police service", 88, 8, 4),
        ("Sepedi", "education", 80, 11, 9),
        ("Sepedi", "health", 63, 22, 15),
        ("Sepedi", "small business", 25, 50, 25),
        ("Sepedi", "transport", 20, 50, 30),
        ("Sepedi", "home affairs", 25, 50, 25),
        ("Sepedi", "rural development", 20, 50, 30),
        ("Sepedi", "agriculture", 20, 50, 30),
    ];
    for topic in [
        "employment",
        "sanitation",
        "police service",
        "education",
        "health",
        "small business",
        "transport",
        "home affairs",
    ] {
        rows.push(("Setswana", topic, 33, 47, 20));
    }
    rows.push(("Setswana", "rural development", 10, 50, 40));
    rows.push(("Setswana", "agriculture", 5, 26, 69));
    rows
}

/// Posts and unanimous fused verdicts realizing `counts`.
pub fn fused_fixture(
    counts: &[(&str, &str, u64, u64, u64)],
) -> (Vec<Post>, Vec<sentifuse::FusedVerdict>) {
    let mut posts = Vec::new();
    let mut fused = Vec::new();
    for (language, topic, neg, neu, pos) in counts {
        let labels = std::iter::repeat_n(SentimentLabel::Negative, *neg as usize)
            .chain(std::iter::repeat_n(SentimentLabel::Neutral, *neu as usize))
            .chain(std::iter::repeat_n(SentimentLabel::Positive, *pos as usize));
        for (i, label) in labels.enumerate() {
            let id = format!("{language}/{topic}/{i}");
            posts.push(post(&id, language, topic, Some(label)));
            let mut vote_counts = sentifuse::fusion::VoteCounts::default();
            for _ in 0..5 {
                vote_counts.add(label);
            }
            fused.push(sentifuse::FusedVerdict {
                post_id: id,
                label,
                vote_counts,
                contributing_backends: BACKENDS.iter().map(|b| b.to_string()).collect(),
                tie_broken: false,
                quorum_met: true,
            });
        }
    }
    (posts, fused)
}
