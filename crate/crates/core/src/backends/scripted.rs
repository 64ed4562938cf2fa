use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;

use super::registry::RegistryError;
use super::{render_reply, FailureKind, Responder};
use crate::prompting::Batch;

/// Fixture of canned replies keyed by `(backend_id, post_id)`.
///
/// Labels are kept verbatim so fixtures can also script malformed output.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScriptedTable {
    entries: HashMap<(String, String), String>,
}

#[derive(Deserialize)]
struct FixtureRow {
    backend_id: String,
    post_id: String,
    label: String,
}

impl ScriptedTable {
    pub fn new() -> ScriptedTable {
        ScriptedTable::default()
    }

    pub fn insert(&mut self, backend_id: impl Into<String>, post_id: impl Into<String>, label: impl Into<String>) {
        self.entries.insert((backend_id.into(), post_id.into()), label.into());
    }

    pub fn get(&self, backend_id: &str, post_id: &str) -> Option<&str> {
        self.entries
            .get(&(backend_id.to_string(), post_id.to_string()))
            .map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Reads csv `backend_id,post_id,label`; `#` lines are comments.
    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<ScriptedTable, String> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut table = ScriptedTable::new();
        for row in rdr.deserialize::<FixtureRow>() {
            let row = row.map_err(|e| e.to_string())?;
            table.insert(row.backend_id, row.post_id, row.label);
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<ScriptedTable, RegistryError> {
        let file = std::fs::File::open(path).map_err(|source| RegistryError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        ScriptedTable::from_reader(file).map_err(|e| RegistryError::Parse(format!("{}: {e}", path.display())))
    }

    pub fn write<W: std::io::Write>(&self, writer: W) -> csv::Result<()> {
        let mut keys: Vec<_> = self.entries.keys().collect();
        keys.sort();
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["backend_id", "post_id", "label"])?;
        for key in keys {
            wtr.write_record([key.0.as_str(), key.1.as_str(), self.entries[key].as_str()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ScriptedResponder {
    backend_id: String,
    table: Arc<ScriptedTable>,
}

impl ScriptedResponder {
    pub fn new(backend_id: impl Into<String>, table: Arc<ScriptedTable>) -> ScriptedResponder {
        ScriptedResponder {
            backend_id: backend_id.into(),
            table,
        }
    }
}

impl Responder for ScriptedResponder {
    fn respond(&self, _prompt: &str, batch: &Batch) -> Result<String, FailureKind> {
        let mut rows = Vec::with_capacity(batch.len());
        for post in &batch.posts {
            let label = self
                .table
                .get(&self.backend_id, &post.id)
                .ok_or_else(|| FailureKind::FixtureMiss(post.id.clone()))?;
            rows.push((post.id.as_str(), label));
        }
        Ok(render_reply(rows))
    }
}
