//! The nine acceptance criteria, run in order. Each prints one PASS/FAIL
//! line with its elapsed time; the test fails if any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;
mod support;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::parse_cases::{check_parse_case, parse_cases};
use common::{brute_force_vote, synthetic_posts, table1_column, table1_language_fixture, verdict, BACKENDS};
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sentifuse::backends::default_context_limit;
use sentifuse::evaluation::{build_report, f1_scores, ConfusionMatrix, ReportInput, Scope, FUSED_COLUMN};
use sentifuse::fusion::{fuse, fuse_all, VerdictMatrix};
use sentifuse::prompting::{build_prompt, estimate_tokens, pack_batches, PromptError, PromptTemplate, TokenBudget};
use sentifuse::scoring::{overall_sentiment_score, SentimentCounts};
use sentifuse::simulate::{run_simulation, SimulationConfig};
use sentifuse::stats::welch_t_test;
use sentifuse::{Batch, Registry, SentimentLabel, Topic};
use support::{manifest_counts, snapshot, Workspace};

const TABLE1_RATES: [f64; 5] = [0.125, 0.082, 0.115, 0.092, 0.116];

/// Checks return a short detail string; panics and `Err`s are failures.
type Check = fn() -> Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn criterion_1() -> Result<String, String> {
    for code in 0..243usize {
        let labels: Vec<SentimentLabel> = (0..5).map(|i| SentimentLabel::ALL[code / 3usize.pow(i) % 3]).collect();
        let votes: Vec<_> = labels.iter().zip(BACKENDS).map(|(l, b)| verdict("p", b, *l)).collect();
        let f = fuse(&votes, 3).map_err(|e| e.to_string())?;
        let want = brute_force_vote(&labels, 3).unwrap();
        ensure((f.label, f.tie_broken) == want, || format!("{labels:?}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ids: Vec<String> = (0..10_000).map(|i| format!("r{i}")).collect();
    let mut m = VerdictMatrix::new(ids, BACKENDS.iter().map(|b| b.to_string()).collect()).unwrap();
    for r in 0..10_000 {
        for c in 0..5 {
            m.set(r, c, (!rng.random_bool(0.2)).then(|| SentimentLabel::ALL[rng.random_range(0..3)]));
        }
    }
    let fused = fuse_all(&m, 3).map_err(|e| e.to_string())?;
    let mut short = 0;
    for (r, f) in fused.iter().enumerate() {
        let labels: Vec<_> = m.row(r).iter().flatten().copied().collect();
        match brute_force_vote(&labels, 3) {
            None => {
                short += 1;
                ensure(!f.quorum_met, || format!("row {r}: quorum"))?;
            }
            Some(want) => ensure(f.quorum_met && (f.label, f.tie_broken) == want, || format!("row {r}"))?,
        }
    }
    Ok(format!("243 combinations + 10000 rows exact ({short} below quorum)"))
}

fn criterion_2() -> Result<String, String> {
    let score = |c: &SentimentCounts| overall_sentiment_score(c).unwrap();
    ensure(score(&SentimentCounts::new(0, 0, 7)) == Ratio::from_integer(1), || "all positive".into())?;
    ensure(score(&SentimentCounts::new(7, 0, 0)) == Ratio::from_integer(-1), || "all negative".into())?;
    ensure(score(&SentimentCounts::new(4, 9, 4)) == Ratio::from_integer(0), || "balanced".into())?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let random = |rng: &mut ChaCha8Rng| loop {
        let c = SentimentCounts::new(rng.random_range(0..500), rng.random_range(0..500), rng.random_range(0..500));
        if c.total() > 0 {
            return c;
        }
    };
    for _ in 0..1000 {
        let a = random(&mut rng);
        let b = random(&mut rng);
        let k = rng.random_range(2..50u64);
        let s = score(&a);
        ensure(score(&SentimentCounts::new(a.negative * k, a.neutral * k, a.positive * k)) == s, || format!("scale {a:?}"))?;
        ensure(score(&SentimentCounts::new(a.positive, a.neutral, a.negative)) == -s, || format!("antisymmetry {a:?}"))?;
        let (na, nb) = (a.total() as i64, b.total() as i64);
        let weighted = (s * na + score(&b) * nb) / (na + nb);
        ensure(score(&a.merged(&b)) == weighted, || format!("merge {a:?} {b:?}"))?;
    }
    Ok("endpoints + 1000 random triples exact".into())
}

fn criterion_3() -> Result<String, String> {
    let r = run_simulation(&SimulationConfig::independent(10_000, TABLE1_RATES.to_vec(), 2024)).map_err(|e| e.to_string())?;
    ensure((0.003..=0.015).contains(&r.fused_error), || format!("fused error {:.4}", r.fused_error))?;
    Ok(format!("fused error {:.3}%", r.fused_error * 100.0))
}

fn criterion_4() -> Result<String, String> {
    let mut means = Vec::new();
    for c in [0.0, 0.25, 0.5] {
        let mut total = 0.0;
        for seed in 0..20 {
            let mut cfg = SimulationConfig::independent(10_000, TABLE1_RATES.to_vec(), seed);
            cfg.correlation = c;
            total += run_simulation(&cfg).map_err(|e| e.to_string())?.fused_error;
        }
        means.push(total / 20.0);
    }
    let text = means.iter().map(|m| format!("{:.3}%", m * 100.0)).collect::<Vec<_>>().join(" < ");
    ensure(means.windows(2).all(|w| w[0] < w[1]), || text.clone())?;
    Ok(format!("mean fused error {text}"))
}

fn criterion_5() -> Result<String, String> {
    let (posts, verdicts) = table1_language_fixture();
    let ids: Vec<String> = BACKENDS.iter().map(|b| b.to_string()).collect();
    let m = VerdictMatrix::from_verdicts(posts.iter().map(|p| p.id.clone()).collect(), ids.clone(), &verdicts).unwrap();
    let fused = fuse_all(&m, 3).unwrap();
    let registry = Registry::default();
    let report = build_report(&ReportInput {
        posts: &posts,
        registry: &registry,
        backend_ids: &ids,
        verdicts: &verdicts,
        fused: &fused,
        annotator_note: None,
    })
    .map_err(|e| e.to_string())?;
    let mut columns = ids.clone();
    columns.push(FUSED_COLUMN.into());
    let mut cells = 0;
    for (language, row) in common::TABLE1_LANGUAGE_ROWS {
        for (col, want) in columns.iter().zip(row) {
            let got = report.error_cell(&Scope::Language(language.into()), col).and_then(|c| c.percent(1));
            ensure(got.as_deref() == Some(format!("{want:.1}%").as_str()), || format!("{language}/{col}: {got:?}"))?;
            cells += 1;
        }
    }

    let f = f1_scores(&ConfusionMatrix::from_counts([[8, 1, 1], [2, 9, 0], [1, 1, 7]])).unwrap();
    let manual = [16.0 / 21.0, 18.0 / 22.0, 14.0 / 17.0];
    for (i, want) in manual.iter().enumerate() {
        ensure((f.per_class[i].unwrap().f1 - want).abs() < 1e-9, || format!("class {i} F1"))?;
    }
    ensure((f.macro_f1 - manual.iter().sum::<f64>() / 3.0).abs() < 1e-9, || "macro F1".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let mut counts = [[0u64; 3]; 3];
        counts.iter_mut().flatten().for_each(|c| *c = rng.random_range(0..40));
        counts[rng.random_range(0..3)][rng.random_range(0..3)] += 1;
        let cm = ConfusionMatrix::from_counts(counts);
        let s = f1_scores(&cm).unwrap();
        ensure((s.micro_f1 - cm.accuracy().unwrap()).abs() < 1e-12, || format!("{counts:?}"))?;
    }
    Ok(format!("{cells}/18 cells, hand F1 to 1e-9, 1000 micro-F1 identities"))
}

fn criterion_6() -> Result<String, String> {
    let t = welch_t_test(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 3.0, 4.0, 5.0, 6.0]).map_err(|e| format!("{e:?}"))?;
    ensure((t.t + 1.0).abs() < 1e-6 && (t.p_two_sided - 0.34659350708733416).abs() < 1e-6, || format!("textbook {t:?}"))?;
    let dolly = table1_column(4);
    let llama = welch_t_test(&dolly, &table1_column(2)).map_err(|e| format!("{e:?}"))?;
    let gpt35 = welch_t_test(&dolly, &table1_column(0)).map_err(|e| format!("{e:?}"))?;
    let detail = format!(
        "textbook ok; Dolly 2 vs LLaMa 2 p = {:.4}; Dolly 2 vs GPT-3.5 t = {:.4}, p = {:.4}",
        llama.p_two_sided, gpt35.t, gpt35.p_two_sided
    );
    ensure(llama.p_two_sided > 0.05 && gpt35.p_two_sided > 0.05, || detail.clone())?;
    Ok(detail)
}

fn criterion_7() -> Result<String, String> {
    let template = PromptTemplate::default();
    let topic = Topic::from("health");
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let words = ["clinic", "queue", "nurse", "ke", "a", "leboga", "bophelo", "medicine", "waited", "hours", "#health"];
    let (mut batches_seen, mut too_large) = (0usize, 0usize);
    for case in 0..10_000 {
        let context = match case % 4 {
            0 => default_context_limit("dolly-2").unwrap(),
            1 => default_context_limit("gpt-4").unwrap(),
            _ => rng.random_range(600..40_000),
        };
        let budget = if case % 4 < 2 {
            TokenBudget::for_context(context).unwrap()
        } else {
            match TokenBudget::new(context, rng.random_range(0..200), rng.random_range(0..8), rng.random_range(0.5..=1.0)) {
                Ok(b) => b,
                Err(_) => continue,
            }
        };
        let n = rng.random_range(1..80);
        let posts: Vec<_> = (0..n)
            .map(|i| {
                let len = rng.random_range(1..120);
                let text: Vec<&str> = (0..len).map(|_| words[rng.random_range(0..words.len())]).collect();
                sentifuse::Post::new(format!("c{case}-{i}"), &text.join(" "), "English".into(), topic.clone(), None).unwrap()
            })
            .collect();
        match pack_batches(&posts, &template, &topic, &budget) {
            Ok(batches) => {
                let flat: Vec<&str> = batches.iter().flat_map(|b| b.post_ids()).collect();
                let want: Vec<&str> = posts.iter().map(|p| p.id.as_str()).collect();
                ensure(flat == want, || format!("case {case}: not an ordered partition"))?;
                for b in &batches {
                    let prompt = build_prompt(&template, &topic, b).unwrap();
                    let used = estimate_tokens(&prompt) as i64;
                    ensure(used <= budget.usable(b.len()), || format!("case {case}: {used} > {}", budget.usable(b.len())))?;
                }
                batches_seen += batches.len();
            }
            Err(PromptError::PostTooLarge { post_id, .. }) => {
                let p = posts.iter().find(|p| p.id == post_id).unwrap().clone();
                let single = Batch::new(topic.clone(), vec![p], &template).unwrap();
                let used = estimate_tokens(&build_prompt(&template, &topic, &single).unwrap()) as i64;
                ensure(used > budget.usable(1), || format!("case {case}: {post_id} wrongly rejected"))?;
                too_large += 1;
            }
            Err(e) => return Err(format!("case {case}: {e}")),
        }
    }
    Ok(format!("{batches_seen} batches checked, {too_large} corpora with an oversize post"))
}

fn criterion_8() -> Result<String, String> {
    let ws = Workspace::new();
    ws.write_posts("posts.csv", &synthetic_posts(300, 8));
    ws.noise_registry(&BACKENDS.iter().zip(TABLE1_RATES).map(|(b, r)| (*b, r)).collect::<Vec<_>>());
    ws.config("seed = 42\n");
    ws.pipeline("a");
    ws.pipeline("b");
    // the run manifest carries wall-clock timestamps
    let keep = |files: Vec<(String, Vec<u8>)>| -> Vec<(String, Vec<u8>)> {
        files.into_iter().filter(|(name, _)| name != "run_manifest.json").collect()
    };
    let a = keep(snapshot(&ws.path("a")));
    let b = keep(snapshot(&ws.path("b")));
    ensure(a == b, || "outputs differ".into())?;
    let (ma, mb) = (manifest_counts(&ws.path("a/run_manifest.json")), manifest_counts(&ws.path("b/run_manifest.json")));
    ensure(ma == mb, || "run manifests differ beyond timestamps".into())?;
    Ok(format!("{} output files byte-identical", a.len()))
}

fn criterion_9() -> Result<String, String> {
    let cases = parse_cases();
    let failures: Vec<String> = cases.iter().filter_map(|c| check_parse_case(c).err()).collect();
    ensure(failures.is_empty(), || failures.join("; "))?;
    Ok(format!("{}/{} fixture cases", cases.len(), cases.len()))
}

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, Check, Duration); 9] = [
        ("1 fusion oracle equivalence", criterion_1, Duration::from_secs(5)),
        ("2 score algebra", criterion_2, Duration::from_secs(1)),
        ("3 fusion gain (independent)", criterion_3, Duration::from_secs(10)),
        ("4 correlation trend", criterion_4, Duration::from_secs(30)),
        ("5 evaluation exactness", criterion_5, Duration::from_secs(5)),
        ("6 Welch t-test", criterion_6, Duration::from_secs(1)),
        ("7 batch packing", criterion_7, Duration::from_secs(30)),
        ("8 end-to-end determinism", criterion_8, Duration::from_secs(30)),
        ("9 parsing robustness", criterion_9, Duration::from_secs(1)),
    ];
    let mut failed = Vec::new();
    for (name, check, limit) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let (status, detail) = match outcome {
            Ok(_) if elapsed > limit => ("FAIL", format!("over time limit {limit:?}")),
            Ok(d) => ("PASS", d),
            Err(e) => ("FAIL", e),
        };
        println!("criterion {name}: {status} ({:.2}s) {detail}", elapsed.as_secs_f64());
        if status == "FAIL" {
            failed.push(name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
