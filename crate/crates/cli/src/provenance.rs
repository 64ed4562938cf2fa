//! Content hashes of the files an output was computed from.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub command: String,
    /// File name -> sha256 of its content.
    pub inputs: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Provenance {
    pub fn new(command: &str) -> Provenance {
        Provenance {
            command: command.to_string(),
            inputs: BTreeMap::new(),
            seed: None,
        }
    }

    /// Records `path` under its file name. Only names are kept so that
    /// outputs do not depend on where the run directory lives.
    pub fn input(mut self, path: &Path) -> Result<Provenance> {
        let name = path
            .file_name()
            .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        self.inputs.insert(name, sha256_file(path)?);
        Ok(self)
    }

    pub fn seed(mut self, seed: u64) -> Provenance {
        self.seed = Some(seed);
        self
    }

    /// `#` comment lines for the top of a csv file.
    pub fn csv_header(&self) -> String {
        let mut out = format!("# sentifuse {}\n", self.command);
        for (name, hash) in &self.inputs {
            out.push_str(&format!("# input {name} sha256={hash}\n"));
        }
        if let Some(seed) = self.seed {
            out.push_str(&format!("# seed {seed}\n"));
        }
        out
    }
}
