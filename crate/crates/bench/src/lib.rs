//! Input generators for the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sentifuse::fusion::VerdictMatrix;
use sentifuse::{Language, Post, SentimentLabel, Topic};

const WORDS: [&str; 10] = ["clinic", "queue", "nurse", "ke", "a", "leboga", "medicine", "waited", "hours", "today"];

/// `rows` posts by `cols` backends, each cell absent with probability 0.1.
pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> VerdictMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids = (0..rows).map(|i| format!("p{i}")).collect();
    let backends = (0..cols).map(|c| format!("b{c}")).collect();
    let mut m = VerdictMatrix::new(ids, backends).expect("distinct ids");
    for r in 0..rows {
        for c in 0..cols {
            let cell = (!rng.random_bool(0.1)).then(|| SentimentLabel::ALL[rng.random_range(0..3)]);
            m.set(r, c, cell);
        }
    }
    m
}

/// Same-topic posts of 5 to 40 words.
pub fn random_posts(n: usize, topic: &Topic, seed: u64) -> Vec<Post> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let len = rng.random_range(5..40);
            let text: Vec<&str> = (0..len).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect();
            Post::new(format!("p{i}"), &text.join(" "), Language::from("English"), topic.clone(), None).expect("valid post")
        })
        .collect()
}
