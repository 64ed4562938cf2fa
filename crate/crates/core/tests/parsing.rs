mod common;

use common::parse_cases::{check_parse_case, parse_cases};
use proptest::prelude::*;
use sentifuse::backends::parse_response;
use sentifuse::prompting::{Batch, PromptTemplate};
use sentifuse::{SentimentLabel, Topic};

#[test]
fn reply_fixture_suite() {
    let cases = parse_cases();
    let failures: Vec<String> = cases.iter().filter_map(|c| check_parse_case(c).err()).collect();
    assert!(failures.is_empty(), "{failures:#?}");
    assert!(cases.len() >= 10);
}

fn label_spellings(label: SentimentLabel) -> Vec<String> {
    let base = label.as_str();
    let short = &base[..3];
    vec![base.to_uppercase(), base.to_string(), short.to_string(), short.to_uppercase(), format!("\"{base}\"")]
}

proptest! {
    // every batch post ends up with exactly one verdict or one missing issue
    // when the reply is a shuffled, respelled, partly dropped answer set
    #[test]
    fn verdicts_and_missing_partition_the_batch(
        labels in prop::collection::vec(0usize..3, 1..25),
        keep in prop::collection::vec(any::<bool>(), 25),
        spelling in prop::collection::vec(0usize..5, 25),
        rotate in 0usize..25,
    ) {
        let posts: Vec<_> = (0..labels.len())
            .map(|i| common::post(&format!("q{i}"), "English", "health", None))
            .collect();
        let batch = Batch::new(Topic::from("health"), posts, &PromptTemplate::default()).unwrap();
        let mut lines: Vec<String> = labels
            .iter()
            .enumerate()
            .filter(|(i, _)| keep[*i])
            .map(|(i, l)| format!("q{i},{}", label_spellings(SentimentLabel::ALL[*l])[spelling[i]]))
            .collect();
        let n = lines.len();
        if n > 0 {
            lines.rotate_left(rotate % n);
        }
        let parsed = parse_response(&lines.join("\n"), &batch, "b");
        prop_assert_eq!(parsed.verdicts.len(), n);
        prop_assert_eq!(parsed.issues.len(), labels.len() - n);
        for v in &parsed.verdicts {
            let i: usize = v.post_id[1..].parse().unwrap();
            prop_assert!(keep[i]);
            prop_assert_eq!(v.label, SentimentLabel::ALL[labels[i]]);
        }
    }
}
