//! Pipeline stages. Each stage reads the files of the stages before it
//! from the output directory and writes its own.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::Serialize;
use sentifuse::backends::{
    read_verdicts, run_with_retry, write_verdicts, Backend, BackendProfile, FailureReport, VerdictFormat,
};
use sentifuse::corpus::{corpus_stats, load_corpus, write_corpus, CorpusFormat, Post, Topic};
use sentifuse::evaluation::{build_report, error_rates_csv, f1_csv, render_text, EvaluationReport, ReportInput};
use sentifuse::fusion::{fuse_all_with, read_fused_csv, write_fused_csv, FusedVerdict, VerdictMatrix};
use sentifuse::prompting::{pack_batches, Batch, PromptError};
use sentifuse::scoring::{
    distribution, format_decimal, language_scores_plot_csv, need_for_action_ranking, score_table,
    topic_distribution_plot_csv, DistributionTable, GroupBy, GroupKey, ScoreTable,
};
use sentifuse::simulate::{csv_row, run_simulation, SimulationConfig, SimulationResult, CSV_HEADER};
use sentifuse::Verdict;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::provenance::Provenance;

pub const CORPUS_FILE: &str = "corpus.csv";
pub const INGEST_FILE: &str = "ingest.json";
pub const VERDICT_DIR: &str = "verdicts";
pub const MANIFEST_FILE: &str = "run_manifest.json";
pub const FAILURES_FILE: &str = "failures.json";
pub const FUSED_FILE: &str = "fused.csv";
pub const SCORES_CSV: &str = "scores.csv";
pub const SCORES_JSON: &str = "scores.json";
pub const DISTRIBUTION_CSV: &str = "distribution.csv";
pub const DISTRIBUTION_JSON: &str = "distribution.json";
pub const PLOT_TOPIC_FILE: &str = "plot_topic_distribution.csv";
pub const PLOT_LANGUAGE_FILE: &str = "plot_language_scores.csv";
pub const EVALUATION_JSON: &str = "evaluation.json";
pub const EVALUATION_TXT: &str = "evaluation.txt";
pub const ERROR_RATES_CSV: &str = "error_rates.csv";
pub const F1_CSV: &str = "f1.csv";
pub const REPORT_FILE: &str = "report.txt";
pub const SIMULATION_FILE: &str = "simulation.csv";

pub fn verdict_path(out: &Path, backend_id: &str) -> PathBuf {
    out.join(VERDICT_DIR).join(format!("{backend_id}.csv"))
}

fn write_file(path: &Path, content: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    std::fs::write(path, content).map_err(|e| CliError::io(path, e))
}

#[derive(Serialize)]
struct WithProvenance<'a, T: Serialize> {
    provenance: &'a Provenance,
    #[serde(flatten)]
    body: T,
}

fn write_json<T: Serialize>(path: &Path, provenance: &Provenance, body: T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(&WithProvenance { provenance, body })
        .map_err(|e| CliError::Data(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn write_csv_with_header(path: &Path, provenance: &Provenance, body: &str) -> Result<()> {
    let mut text = provenance.csv_header();
    text.push_str(body);
    write_file(path, text.as_bytes())
}

fn require(path: &Path, producer: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::missing_upstream(path, producer))
    }
}

/// Posts of the ingested corpus.
pub fn load_ingested(cfg: &RunConfig) -> Result<(PathBuf, Vec<Post>)> {
    let path = cfg.output_dir.join(CORPUS_FILE);
    require(&path, "ingest")?;
    let posts = load_corpus(&path, CorpusFormat::Csv, &cfg.names).map_err(|e| CliError::io(&path, e))?;
    Ok((path, posts))
}

fn load_verdict_file(path: &Path) -> Result<Vec<Verdict>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    read_verdicts(BufReader::new(file), VerdictFormat::Csv).map_err(|e| CliError::io(path, e))
}

fn load_all_verdicts(cfg: &RunConfig, profiles: &[BackendProfile]) -> Result<(Vec<PathBuf>, Vec<Verdict>)> {
    let mut paths = Vec::new();
    let mut verdicts = Vec::new();
    for p in profiles {
        let path = verdict_path(&cfg.output_dir, &p.backend_id);
        require(&path, "classify")?;
        verdicts.extend(load_verdict_file(&path)?);
        paths.push(path);
    }
    Ok((paths, verdicts))
}

fn load_fused(cfg: &RunConfig) -> Result<(PathBuf, Vec<FusedVerdict>)> {
    let path = cfg.output_dir.join(FUSED_FILE);
    require(&path, "fuse")?;
    let file = File::open(&path).map_err(|e| CliError::io(&path, e))?;
    let fused = read_fused_csv(BufReader::new(file)).map_err(|e| CliError::io(&path, e))?;
    Ok((path, fused))
}

// ---------------------------------------------------------------- ingest

#[derive(Serialize)]
struct IngestSummary {
    posts: usize,
    labeled: usize,
    stats: sentifuse::corpus::CorpusStats,
    mean_word_tokens_decimal: BTreeMap<String, f64>,
}

pub fn cmd_ingest(cfg: &RunConfig) -> Result<String> {
    cfg.validate()?;
    let posts = load_corpus(&cfg.corpus, cfg.corpus_format, &cfg.names).map_err(|e| CliError::io(&cfg.corpus, e))?;
    let out = cfg.output_dir.join(CORPUS_FILE);
    let mut buf = Vec::new();
    write_corpus(&posts, &mut buf, CorpusFormat::Csv).map_err(|e| CliError::io(&out, e))?;
    write_file(&out, &buf)?;

    let stats = corpus_stats(&posts);
    let labeled = posts.iter().filter(|p| p.gold_label.is_some()).count();
    let means = stats
        .mean_word_tokens
        .keys()
        .filter_map(|l| Some((l.to_string(), stats.mean_word_tokens_f64(l)?)))
        .collect();
    let provenance = Provenance::new("ingest").input(&cfg.corpus)?;
    write_json(
        &cfg.output_dir.join(INGEST_FILE),
        &provenance,
        IngestSummary {
            posts: posts.len(),
            labeled,
            stats,
            mean_word_tokens_decimal: means,
        },
    )?;
    Ok(format!("ingested {} posts ({labeled} labeled) into {}", posts.len(), out.display()))
}

// -------------------------------------------------------------- classify

#[derive(Debug, Clone, Default, Serialize)]
pub struct BackendRunStats {
    pub backend_id: String,
    pub posts_total: usize,
    pub already_classified: usize,
    pub requested_posts: usize,
    pub newly_classified: usize,
    pub batches: usize,
    pub requests: u32,
    pub parse_issues: usize,
    pub failed_posts: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub started_at: String,
    pub finished_at: String,
    pub seed: u64,
    pub parallelism: usize,
    pub backends: Vec<BackendRunStats>,
    pub provenance: Provenance,
}

fn csv_rows(verdicts: &[Verdict]) -> Vec<u8> {
    let mut wtr = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for v in verdicts {
        wtr.write_record([v.post_id.as_str(), v.backend_id.as_str(), v.label.as_str()])
            .expect("in-memory csv");
    }
    wtr.into_inner().expect("in-memory csv")
}

/// Topic order: registry topics first, then any others as they occur.
fn topics_in_order(cfg: &RunConfig, posts: &[Post]) -> Vec<Topic> {
    let mut topics: Vec<Topic> = cfg.names.topics.clone();
    for p in posts {
        if !topics.contains(&p.topic) {
            topics.push(p.topic.clone());
        }
    }
    topics
}

/// Packs `posts` for one backend. Posts too large for a single-post prompt
/// become failure reports instead of aborting the topic.
fn plan_batches(
    cfg: &RunConfig,
    backend: &Backend,
    template: &sentifuse::PromptTemplate,
    posts: &[&Post],
    failures: &mut Vec<FailureReport>,
) -> Result<Vec<Batch>> {
    let mut batches = Vec::new();
    for topic in topics_in_order(cfg, &posts.iter().map(|p| (*p).clone()).collect::<Vec<_>>()) {
        let mut todo: Vec<Post> = posts.iter().filter(|p| p.topic == topic).map(|p| (*p).clone()).collect();
        while !todo.is_empty() {
            match pack_batches(&todo, template, &topic, backend.budget()) {
                Ok(b) => {
                    batches.extend(b);
                    break;
                }
                Err(PromptError::PostTooLarge { post_id, needed, usable }) => {
                    failures.push(FailureReport {
                        backend_id: backend.id().to_string(),
                        batch: format!("{topic}[{post_id}]"),
                        post_ids: vec![post_id.clone()],
                        attempts: 0,
                        reason: format!("post needs {needed} tokens, budget allows {usable}"),
                        retryable: false,
                    });
                    todo.retain(|p| p.id != post_id);
                }
                Err(e) => return Err(CliError::Usage(format!("backend {}: {e}", backend.id()))),
            }
        }
    }
    Ok(batches)
}

/// Sends every not-yet-classified post to every enabled backend. Verdicts
/// are appended to the backend's store as each batch completes, so an
/// interrupted run resumes where it stopped.
pub fn cmd_classify(cfg: &RunConfig) -> Result<String> {
    let started_at = chrono::Utc::now().to_rfc3339();
    let (corpus_path, posts) = load_ingested(cfg)?;
    let profiles = cfg.backends()?;
    let template = cfg.template()?;
    let backends: Vec<Backend> = profiles
        .iter()
        .cloned()
        .map(|p| {
            let id = p.backend_id.clone();
            Backend::from_profile(p).map_err(|e| CliError::Usage(format!("backend {id}: {e}")))
        })
        .collect::<Result<_>>()?;

    let order: HashMap<&str, usize> = posts.iter().enumerate().map(|(i, p)| (p.id.as_str(), i)).collect();
    let mut stats: Vec<BackendRunStats> = Vec::new();
    let mut failures: Vec<FailureReport> = Vec::new();
    let mut tasks: Vec<(usize, Batch)> = Vec::new();
    let mut sinks: Vec<Mutex<File>> = Vec::new();

    for (b, backend) in backends.iter().enumerate() {
        let path = verdict_path(&cfg.output_dir, backend.id());
        let done: HashSet<String> = if path.is_file() {
            load_verdict_file(&path)?.into_iter().map(|v| v.post_id).collect()
        } else {
            HashSet::new()
        };
        let todo: Vec<&Post> = posts.iter().filter(|p| !done.contains(&p.id)).collect();
        let batches = plan_batches(cfg, backend, &template, &todo, &mut failures)?;
        stats.push(BackendRunStats {
            backend_id: backend.id().to_string(),
            posts_total: posts.len(),
            already_classified: posts.len() - todo.len(),
            requested_posts: batches.iter().map(Batch::len).sum(),
            batches: batches.len(),
            ..Default::default()
        });
        tasks.extend(batches.into_iter().map(|batch| (b, batch)));

        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        let fresh = !path.is_file() || std::fs::metadata(&path).map(|m| m.len() == 0).unwrap_or(true);
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| CliError::io(&path, e))?;
        if fresh {
            file.write_all(b"post_id,backend_id,label\n").map_err(|e| CliError::io(&path, e))?;
        }
        sinks.push(Mutex::new(file));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    let outcomes: Vec<(usize, sentifuse::backends::RetryOutcome)> = pool.install(|| {
        tasks
            .par_iter()
            .map(|(b, batch)| {
                let outcome = run_with_retry(&backends[*b], &template, batch, &cfg.retry);
                if !outcome.verdicts.is_empty() {
                    let mut sink = sinks[*b].lock().expect("verdict sink poisoned");
                    // a failed append only loses resumability, the final rewrite below still has the verdicts
                    let _ = sink.write_all(&csv_rows(&outcome.verdicts)).and_then(|_| sink.flush());
                }
                (*b, outcome)
            })
            .collect()
    });
    drop(sinks);

    let mut new_verdicts: Vec<Vec<Verdict>> = vec![Vec::new(); backends.len()];
    for (b, outcome) in outcomes {
        let s = &mut stats[b];
        s.requests += outcome.requests;
        s.parse_issues += outcome.issues.len();
        s.newly_classified += outcome.verdicts.len();
        failures.extend(outcome.failures);
        new_verdicts[b].extend(outcome.verdicts);
    }

    let mut provenance = Provenance::new("classify").input(&corpus_path)?.input(cfg.registry_path()?)?;
    if let Some(t) = &cfg.template {
        provenance = provenance.input(t)?;
    }
    provenance = provenance.seed(cfg.seed);

    // Rewrite each store in corpus order with a provenance header.
    for (b, backend) in backends.iter().enumerate() {
        let path = verdict_path(&cfg.output_dir, backend.id());
        let mut seen = HashSet::new();
        let mut all: Vec<Verdict> = load_verdict_file(&path)?
            .into_iter()
            .chain(std::mem::take(&mut new_verdicts[b]))
            .filter(|v| order.contains_key(v.post_id.as_str()) && seen.insert(v.post_id.clone()))
            .collect();
        all.sort_by_key(|v| order[v.post_id.as_str()]);
        let mut buf = provenance.csv_header().into_bytes();
        write_verdicts(&all, &mut buf, VerdictFormat::Csv).map_err(|e| CliError::io(&path, e))?;
        write_file(&path, &buf)?;
    }

    failures.sort_by(|a, b| (&a.backend_id, &a.batch).cmp(&(&b.backend_id, &b.batch)));
    for f in &failures {
        if let Some(s) = stats.iter_mut().find(|s| s.backend_id == f.backend_id) {
            s.failed_posts += f.post_ids.len();
        }
    }
    write_json(&cfg.output_dir.join(FAILURES_FILE), &provenance, FailureList { failures: &failures })?;
    let manifest = RunManifest {
        started_at,
        finished_at: chrono::Utc::now().to_rfc3339(),
        seed: cfg.seed,
        parallelism: cfg.parallelism,
        backends: stats.clone(),
        provenance,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write_file(&cfg.output_dir.join(MANIFEST_FILE), text.as_bytes())?;

    let mut summary = String::new();
    for s in &stats {
        let _ = writeln!(
            summary,
            "{}: {} new verdicts in {} requests, {} already classified, {} failed",
            s.backend_id, s.newly_classified, s.requests, s.already_classified, s.failed_posts
        );
    }
    if failures.is_empty() {
        Ok(summary)
    } else {
        let failed: usize = failures.iter().map(|f| f.post_ids.len()).sum();
        Err(CliError::Backend(format!(
            "{summary}{failed} post classifications failed across {} batches; see {}. Rerun `sentifuse classify` to retry them.",
            failures.len(),
            cfg.output_dir.join(FAILURES_FILE).display()
        )))
    }
}

#[derive(Serialize)]
struct FailureList<'a> {
    failures: &'a [FailureReport],
}

// ------------------------------------------------------------------ fuse

pub fn cmd_fuse(cfg: &RunConfig) -> Result<String> {
    let (corpus_path, posts) = load_ingested(cfg)?;
    let profiles = cfg.backends()?;
    let (paths, verdicts) = load_all_verdicts(cfg, &profiles)?;
    let matrix = VerdictMatrix::from_verdicts(
        posts.iter().map(|p| p.id.clone()).collect(),
        profiles.iter().map(|p| p.backend_id.clone()).collect(),
        &verdicts,
    )
    .map_err(|e| CliError::Data(format!("verdict stores do not match the corpus: {e}")))?;
    let fused = fuse_all_with(&matrix, &cfg.fusion_config(&profiles)).map_err(|e| CliError::Data(e.to_string()))?;

    let mut provenance = Provenance::new("fuse").input(&corpus_path)?;
    for p in &paths {
        provenance = provenance.input(p)?;
    }
    let mut body = Vec::new();
    write_fused_csv(&fused, &mut body).map_err(|e| CliError::Data(e.to_string()))?;
    let out = cfg.output_dir.join(FUSED_FILE);
    write_csv_with_header(&out, &provenance, &String::from_utf8(body).expect("utf-8 csv"))?;

    let ties = fused.iter().filter(|f| f.tie_broken).count();
    let below = fused.iter().filter(|f| !f.quorum_met).count();
    Ok(format!(
        "fused {} posts from {} backends ({ties} ties broken, {below} below quorum {}) into {}",
        fused.len(),
        profiles.len(),
        cfg.quorum,
        out.display()
    ))
}

// ----------------------------------------------------------------- score

#[derive(Serialize)]
struct RankedTopic {
    topic: String,
    score: String,
    value: sentifuse::scoring::Rational,
}

#[derive(Serialize)]
struct ScoresBody<'a> {
    neutral_weight: String,
    by_topic_language: &'a ScoreTable,
    by_topic: &'a ScoreTable,
    need_for_action: Vec<RankedTopic>,
}

#[derive(Serialize)]
struct DistributionBody<'a> {
    by_topic: &'a DistributionTable,
    by_topic_language: &'a DistributionTable,
    notes: Vec<String>,
}

fn ratio_text(r: &sentifuse::scoring::Rational) -> String {
    if *r.denom() == 1 {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

fn scores_csv(table: &ScoreTable) -> String {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    wtr.write_record(["topic", "language", "negative", "neutral", "positive", "total", "score"])
        .expect("in-memory csv");
    let name = |g: &GroupKey| {
        (
            g.topic.as_ref().map(ToString::to_string).unwrap_or_default(),
            g.language.as_ref().map(ToString::to_string).unwrap_or_default(),
        )
    };
    for s in &table.scores {
        let (t, l) = name(&s.group);
        wtr.write_record([
            t,
            l,
            s.counts.negative.to_string(),
            s.counts.neutral.to_string(),
            s.counts.positive.to_string(),
            s.counts.total().to_string(),
            format_decimal(&s.value, 2),
        ])
        .expect("in-memory csv");
    }
    for g in &table.undefined {
        let (t, l) = name(g);
        wtr.write_record([t, l, "0".into(), "0".into(), "0".into(), "0".into(), String::new()])
            .expect("in-memory csv");
    }
    String::from_utf8(wtr.into_inner().expect("in-memory csv")).expect("utf-8")
}

fn distribution_csv(table: &DistributionTable) -> String {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    wtr.write_record([
        "topic",
        "language",
        "negative",
        "neutral",
        "positive",
        "share_negative",
        "share_neutral",
        "share_positive",
        "majority_negative",
    ])
    .expect("in-memory csv");
    for r in &table.rows {
        wtr.write_record([
            r.group.topic.as_ref().map(ToString::to_string).unwrap_or_default(),
            r.group.language.as_ref().map(ToString::to_string).unwrap_or_default(),
            r.counts.negative.to_string(),
            r.counts.neutral.to_string(),
            r.counts.positive.to_string(),
            format_decimal(&r.proportions[0], 4),
            format_decimal(&r.proportions[1], 4),
            format_decimal(&r.proportions[2], 4),
            r.majority_negative().to_string(),
        ])
        .expect("in-memory csv");
    }
    String::from_utf8(wtr.into_inner().expect("in-memory csv")).expect("utf-8")
}

struct ScoreArtifacts {
    by_topic_language: ScoreTable,
    by_topic: ScoreTable,
    dist_topic: DistributionTable,
    dist_topic_language: DistributionTable,
}

fn compute_scores(cfg: &RunConfig, posts: &[Post], fused: &[FusedVerdict]) -> Result<ScoreArtifacts> {
    let opts = cfg.score_options();
    let table = |by| score_table(fused, posts, &cfg.names, by, &opts).map_err(|e| CliError::Data(e.to_string()));
    Ok(ScoreArtifacts {
        by_topic_language: table(GroupBy::TopicLanguage)?,
        by_topic: table(GroupBy::Topic)?,
        dist_topic: distribution(fused, posts, &cfg.names, GroupBy::Topic),
        dist_topic_language: distribution(fused, posts, &cfg.names, GroupBy::TopicLanguage),
    })
}

pub fn cmd_score(cfg: &RunConfig, plot_data: bool) -> Result<String> {
    let (corpus_path, posts) = load_ingested(cfg)?;
    let (fused_path, fused) = load_fused(cfg)?;
    let a = compute_scores(cfg, &posts, &fused)?;
    let provenance = Provenance::new("score").input(&corpus_path)?.input(&fused_path)?;
    let out = &cfg.output_dir;

    let ranking: Vec<RankedTopic> = need_for_action_ranking(&a.by_topic.scores)
        .into_iter()
        .map(|(g, v)| RankedTopic {
            topic: g.to_string(),
            score: format_decimal(&v, 2),
            value: v,
        })
        .collect();
    write_json(
        &out.join(SCORES_JSON),
        &provenance,
        ScoresBody {
            neutral_weight: ratio_text(&cfg.neutral_weight),
            by_topic_language: &a.by_topic_language,
            by_topic: &a.by_topic,
            need_for_action: ranking,
        },
    )?;
    write_csv_with_header(&out.join(SCORES_CSV), &provenance, &scores_csv(&a.by_topic_language))?;
    let mut notes = a.dist_topic.notes();
    notes.extend(a.dist_topic_language.notes());
    notes.dedup();
    write_json(
        &out.join(DISTRIBUTION_JSON),
        &provenance,
        DistributionBody {
            by_topic: &a.dist_topic,
            by_topic_language: &a.dist_topic_language,
            notes,
        },
    )?;
    write_csv_with_header(&out.join(DISTRIBUTION_CSV), &provenance, &distribution_csv(&a.dist_topic))?;
    if plot_data {
        write_csv_with_header(&out.join(PLOT_TOPIC_FILE), &provenance, &topic_distribution_plot_csv(&a.dist_topic))?;
        write_csv_with_header(
            &out.join(PLOT_LANGUAGE_FILE),
            &provenance,
            &language_scores_plot_csv(&a.by_topic_language, &cfg.names),
        )?;
    }
    Ok(format!(
        "scored {} topic/language groups ({} undefined) into {}",
        a.by_topic_language.scores.len(),
        a.by_topic_language.undefined.len(),
        out.join(SCORES_CSV).display()
    ))
}

// -------------------------------------------------------------- evaluate

fn no_gold_error() -> CliError {
    CliError::Data(
        "the corpus has no gold labels, so there is nothing to evaluate against. \
         Supply a labeled corpus (fill the gold_label column) and rerun `sentifuse ingest`."
            .into(),
    )
}

fn evaluation_for(cfg: &RunConfig, posts: &[Post]) -> Result<(EvaluationReport, Vec<PathBuf>, PathBuf)> {
    let profiles = cfg.backends()?;
    let (paths, verdicts) = load_all_verdicts(cfg, &profiles)?;
    let (fused_path, fused) = load_fused(cfg)?;
    let ids: Vec<String> = profiles.iter().map(|p| p.backend_id.clone()).collect();
    let report = build_report(&ReportInput {
        posts,
        registry: &cfg.names,
        backend_ids: &ids,
        verdicts: &verdicts,
        fused: &fused,
        annotator_note: cfg.annotator_note.clone(),
    })
    .map_err(|e| CliError::Data(e.to_string()))?;
    Ok((report, paths, fused_path))
}

pub fn cmd_evaluate(cfg: &RunConfig) -> Result<String> {
    let (corpus_path, posts) = load_ingested(cfg)?;
    if posts.iter().all(|p| p.gold_label.is_none()) {
        return Err(no_gold_error());
    }
    let (report, paths, fused_path) = evaluation_for(cfg, &posts)?;
    let mut provenance = Provenance::new("evaluate").input(&corpus_path)?;
    for p in paths.iter().chain(std::iter::once(&fused_path)) {
        provenance = provenance.input(p)?;
    }
    let out = &cfg.output_dir;
    write_json(&out.join(EVALUATION_JSON), &provenance, &report)?;
    let text = render_text(&report);
    write_file(&out.join(EVALUATION_TXT), text.as_bytes())?;
    write_csv_with_header(&out.join(ERROR_RATES_CSV), &provenance, &error_rates_csv(&report))?;
    write_csv_with_header(&out.join(F1_CSV), &provenance, &f1_csv(&report))?;

    let missing = report.incomputable_cells();
    if !missing.is_empty() {
        return Err(CliError::Data(format!(
            "{text}\n{} report cells have no predictions: {}",
            missing.len(),
            missing.join(", ")
        )));
    }
    Ok(text)
}

// ---------------------------------------------------------------- report

/// Human-readable summary: corpus shape, score grid, ranking and, for a
/// labeled corpus, the evaluation tables.
pub fn cmd_report(cfg: &RunConfig) -> Result<String> {
    let (corpus_path, posts) = load_ingested(cfg)?;
    let (fused_path, fused) = load_fused(cfg)?;
    let a = compute_scores(cfg, &posts, &fused)?;
    let stats = corpus_stats(&posts);
    let mut provenance = Provenance::new("report").input(&corpus_path)?.input(&fused_path)?;

    let mut out = String::new();
    let labeled = posts.iter().filter(|p| p.gold_label.is_some()).count();
    let _ = writeln!(out, "Corpus: {} posts, {labeled} with gold labels", stats.total);
    for (language, mean) in &stats.mean_word_tokens {
        let _ = writeln!(
            out,
            "  {language}: {} posts, mean {:.1} word tokens",
            posts.iter().filter(|p| &p.language == language).count(),
            *mean.numer() as f64 / *mean.denom() as f64
        );
    }
    let _ = writeln!(out);

    let languages: Vec<_> = a.by_topic_language.language_means.iter().map(|m| m.language.clone()).collect();
    let _ = writeln!(out, "Overall sentiment score (positive - negative) / all");
    let _ = write!(out, "{:<20}", "topic");
    for l in &languages {
        let _ = write!(out, "{:>10}", l.as_str());
    }
    let _ = writeln!(out);
    for topic in &cfg.names.topics {
        let _ = write!(out, "{:<20}", topic.as_str());
        for l in &languages {
            let key = GroupKey {
                topic: Some(topic.clone()),
                language: Some(l.clone()),
            };
            let cell = a
                .by_topic_language
                .get(&key)
                .map_or_else(|| "n/a".to_string(), |s| format_decimal(&s.value, 2));
            let _ = write!(out, "{cell:>10}");
        }
        let _ = writeln!(out);
    }
    let _ = write!(out, "{:<20}", "mean");
    for m in &a.by_topic_language.language_means {
        let cell = m.mean.map_or_else(|| "n/a".to_string(), |v| format_decimal(&v, 2));
        let _ = write!(out, "{cell:>10}");
    }
    let _ = writeln!(out);
    let _ = writeln!(out);

    let _ = writeln!(out, "Need for action (most negative first)");
    for (i, (group, value)) in need_for_action_ranking(&a.by_topic.scores).iter().enumerate() {
        let _ = writeln!(out, "  {:>2}. {:<20} {}", i + 1, group.to_string(), format_decimal(value, 2));
    }
    let negative: Vec<String> = a
        .dist_topic
        .rows
        .iter()
        .filter(|r| r.majority_negative())
        .map(|r| r.group.to_string())
        .collect();
    if !negative.is_empty() {
        let _ = writeln!(out, "Topics with a majority of negative posts: {}", negative.join(", "));
    }
    for note in a.dist_topic.notes() {
        let _ = writeln!(out, "Note: {note}");
    }

    if labeled > 0 {
        let (report, paths, _) = evaluation_for(cfg, &posts)?;
        for p in &paths {
            provenance = provenance.input(p)?;
        }
        let _ = writeln!(out);
        out.push_str(&render_text(&report));
    }

    let mut text = provenance.csv_header();
    text.push('\n');
    text.push_str(&out);
    write_file(&cfg.output_dir.join(REPORT_FILE), text.as_bytes())?;
    Ok(out)
}

// -------------------------------------------------------------- simulate

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateOptions {
    pub n_posts: usize,
    pub error_rates: Vec<f64>,
    pub correlations: Vec<f64>,
    pub runs: usize,
    pub class_prior: [f64; 3],
    pub seed: u64,
}

/// Runs `runs` seeds per correlation value; rows come out in (correlation,
/// seed) order regardless of scheduling.
pub fn simulate_sweep(opts: &SimulateOptions) -> Result<Vec<(SimulationConfig, SimulationResult)>> {
    let configs: Vec<SimulationConfig> = opts
        .correlations
        .iter()
        .flat_map(|&c| {
            (0..opts.runs as u64).map(move |i| SimulationConfig {
                n_posts: opts.n_posts,
                error_rates: opts.error_rates.clone(),
                correlation: c,
                class_prior: opts.class_prior,
                seed: opts.seed.wrapping_add(i),
            })
        })
        .collect();
    for c in &configs {
        c.validate().map_err(|e| CliError::Usage(format!("simulate: {e}")))?;
    }
    Ok(configs
        .into_par_iter()
        .map(|c| {
            let r = run_simulation(&c).expect("validated");
            (c, r)
        })
        .collect())
}

pub fn cmd_simulate(out_dir: &Path, opts: &SimulateOptions) -> Result<String> {
    let rows = simulate_sweep(opts)?;
    let mut csv_text = String::from(CSV_HEADER);
    csv_text.push('\n');
    for (c, r) in &rows {
        csv_text.push_str(&csv_row(c, r));
        csv_text.push('\n');
    }
    let provenance = Provenance::new("simulate").seed(opts.seed);
    write_csv_with_header(&out_dir.join(SIMULATION_FILE), &provenance, &csv_text)?;

    let mut summary = String::new();
    for &c in &opts.correlations {
        let fused: Vec<f64> = rows
            .iter()
            .filter(|(cfg, _)| cfg.correlation == c)
            .map(|(_, r)| r.fused_error)
            .collect();
        let mean = fused.iter().sum::<f64>() / fused.len() as f64;
        let _ = writeln!(
            summary,
            "correlation {c}: mean fused error {:.3}% over {} runs",
            mean * 100.0,
            fused.len()
        );
    }
    Ok(summary)
}
