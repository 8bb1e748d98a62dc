//! Stage manifests: which configuration and which file digests produced a
//! group of artifacts.
//!
//! A manifest is a line-oriented `key=value` file:
//!
//! ```text
//! stage=network
//! config_hash=<sha256>
//! config.theta_bar=0.1
//! source./data/prices.csv=<sha256>
//! input.coes/coes.csv=<sha256>
//! output.network/adjacency.csv=<sha256>
//! ```
//!
//! `input.` and `output.` paths are relative to the output directory;
//! `source.` paths point outside it and are recorded for provenance only.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{read_to_string, sha256_bytes, sha256_file};

pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub stage: String,
    pub config: Vec<(String, String)>,
    pub sources: Vec<(String, String)>,
    pub inputs: Vec<(String, String)>,
    pub outputs: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(stage: &str) -> Self {
        Self {
            stage: stage.to_string(),
            ..Self::default()
        }
    }

    pub fn config_value(&self, key: &str) -> Option<&str> {
        self.config
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Replaces or appends a configuration entry.
    pub fn set_config(&mut self, key: &str, value: String) {
        match self.config.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.config.push((key.to_string(), value)),
        }
    }

    pub fn config_hash(&self) -> String {
        let mut text = String::new();
        for (k, v) in &self.config {
            text.push_str(k);
            text.push('=');
            text.push_str(v);
            text.push('\n');
        }
        sha256_bytes(text.as_bytes())
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("stage={}\nconfig_hash={}\n", self.stage, self.config_hash());
        for (prefix, rows) in [
            ("config", &self.config),
            ("source", &self.sources),
            ("input", &self.inputs),
            ("output", &self.outputs),
        ] {
            for (k, v) in rows {
                out.push_str(&format!("{prefix}.{k}={v}\n"));
            }
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let bad = |line: usize, message: &str| Error::Parse {
            path: path.to_path_buf(),
            line: line as u64 + 1,
            field: "<manifest>".into(),
            message: message.to_string(),
        };
        let mut m = Manifest::default();
        let mut hash = None;
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            if let Some(v) = line.strip_prefix("stage=") {
                m.stage = v.to_string();
            } else if let Some(v) = line.strip_prefix("config_hash=") {
                hash = Some(v.to_string());
            } else if let Some(rest) = line.strip_prefix("config.") {
                let (k, v) = rest.split_once('=').ok_or_else(|| bad(n, "missing `=`"))?;
                m.config.push((k.to_string(), v.to_string()));
            } else {
                let (prefix, rest) = line.split_once('.').ok_or_else(|| bad(n, "unknown entry"))?;
                let (k, v) = rest.rsplit_once('=').ok_or_else(|| bad(n, "missing `=`"))?;
                let row = (k.to_string(), v.to_string());
                match prefix {
                    "source" => m.sources.push(row),
                    "input" => m.inputs.push(row),
                    "output" => m.outputs.push(row),
                    _ => return Err(bad(n, "unknown entry")),
                }
            }
        }
        if m.stage.is_empty() {
            return Err(bad(0, "no stage line"));
        }
        if hash.as_deref() != Some(m.config_hash().as_str()) {
            return Err(Error::StaleArtifact {
                path: path.to_path_buf(),
                reason: "config_hash does not match the recorded configuration".into(),
            });
        }
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&read_to_string(path)?, path)
    }

    /// Checks that every recorded `input.` and `output.` file under `root`
    /// still has its recorded digest.
    pub fn verify_files(&self, root: &Path, manifest_path: &Path) -> Result<()> {
        for (kind, rows) in [("input", &self.inputs), ("output", &self.outputs)] {
            for (rel, digest) in rows {
                let path = root.join(rel);
                if !path.exists() {
                    return Err(Error::StaleArtifact {
                        path: manifest_path.to_path_buf(),
                        reason: format!("{kind} {rel} no longer exists"),
                    });
                }
                let now = sha256_file(&path)?;
                if &now != digest {
                    return Err(Error::StaleArtifact {
                        path: manifest_path.to_path_buf(),
                        reason: format!(
                            "{kind} {rel} changed since the {} stage wrote this manifest",
                            self.stage
                        ),
                    });
                }
            }
        }
        Ok(())
    }
}
