//! Scratch workspaces and binary invocation for the cli tests.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use sentifuse::corpus::{write_corpus, CorpusFormat};
use sentifuse::{Post, Verdict};
use tempfile::TempDir;

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub struct Workspace {
    pub dir: TempDir,
}

impl Workspace {
    pub fn new() -> Workspace {
        Workspace { dir: tempfile::tempdir().unwrap() }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn write(&self, name: &str, text: &str) {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).unwrap();
        }
        fs::write(path, text).unwrap();
    }

    pub fn read(&self, name: &str) -> String {
        fs::read_to_string(self.path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
    }

    pub fn write_posts(&self, name: &str, posts: &[Post]) {
        let mut buf = Vec::new();
        write_corpus(posts, &mut buf, CorpusFormat::Csv).unwrap();
        self.write(name, std::str::from_utf8(&buf).unwrap());
    }

    /// `backends.toml` with one noise simulator per `(id, rate)`.
    pub fn noise_registry(&self, backends: &[(&str, f64)]) {
        let mut text = String::new();
        for (id, rate) in backends {
            text.push_str(&format!(
                "[[backend]]\nid = \"{id}\"\nkind = \"noise_sim\"\nmodel = \"{id}\"\ncontext_limit = 8192\nerror_rate = {rate}\n\n"
            ));
        }
        self.write("backends.toml", &text);
    }

    /// `backends.toml` with scripted backends replaying `verdicts` from
    /// `replies.csv`.
    pub fn scripted_registry(&self, ids: &[&str], verdicts: &[Verdict]) {
        let mut replies = String::from("backend_id,post_id,label\n");
        for v in verdicts {
            replies.push_str(&format!("{},{},{}\n", v.backend_id, v.post_id, v.label));
        }
        self.write("replies.csv", &replies);
        let mut text = String::new();
        for id in ids {
            text.push_str(&format!(
                "[[backend]]\nid = \"{id}\"\nkind = \"scripted\"\nmodel = \"{id}\"\ncontext_limit = 8192\nfixture = \"replies.csv\"\n\n"
            ));
        }
        self.write("backends.toml", &text);
    }

    pub fn config(&self, extra: &str) {
        self.write(
            "sentifuse.toml",
            &format!("corpus = \"posts.csv\"\nregistry = \"backends.toml\"\n{extra}"),
        );
    }

    pub fn run(&self, args: &[&str]) -> Run {
        run_in(self.dir.path(), args)
    }

    /// Runs the full pipeline, panicking on the first failing step.
    pub fn pipeline(&self, out: &str) {
        for cmd in [&["ingest"][..], &["classify"], &["fuse"], &["score", "--plot-data"], &["evaluate"], &["report"]] {
            let mut args = cmd.to_vec();
            args.extend(["--out", out]);
            let r = self.run(&args);
            assert_eq!(r.code, 0, "{cmd:?}: {}", r.stderr);
        }
    }
}

pub fn run_in(dir: &Path, args: &[&str]) -> Run {
    let output = Command::new(env!("CARGO_BIN_EXE_sentifuse"))
        .args(args)
        .current_dir(dir)
        .env_remove("RUST_LOG")
        .output()
        .unwrap();
    Run {
        code: output.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&output.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
    }
}

/// Data rows of a csv output, skipping provenance comments and the header.
pub fn data_rows(text: &str) -> Vec<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    rdr.records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect()
}

/// Every file under `dir`, relative path to bytes.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// `run_manifest.json` without its wall-clock timestamps.
pub fn manifest_counts(path: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    let obj = v.as_object_mut().unwrap();
    obj.remove("started_at");
    obj.remove("finished_at");
    v
}
