//! Shared file plumbing: numeric formatting, digests, and staged writes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// 17 significant digits; parses back to the identical `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    let t = s.trim();
    t.parse::<f64>()
        .map_err(|_| format!("`{t}` is not a number"))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_bytes(&bytes))
}

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Reads a headed comma-separated long file as `(line, fields)` rows,
/// skipping blank lines.
pub(crate) fn read_long(path: &Path, header: &str) -> Result<Vec<(u64, Vec<String>)>> {
    let text = read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, h)| h.trim()) != Some(header) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            field: "header".into(),
            message: format!("expected `{header}`"),
        });
    }
    Ok(lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| (k as u64 + 1, l.split(',').map(str::to_string).collect()))
        .collect())
}

/// Writes files next to their final location with a `.partial` suffix and
/// renames them on [`StagedWrites::commit`]. Dropping without commit removes
/// everything written so far.
#[derive(Debug, Default)]
pub struct StagedWrites {
    pending: Vec<(PathBuf, PathBuf)>,
    committed: bool,
}

impl StagedWrites {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write(&mut self, path: &Path, contents: &[u8]) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
        }
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".partial");
        let tmp = PathBuf::from(tmp);
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(contents).map_err(|e| Error::io(&tmp, e))?;
        self.pending.push((tmp, path.to_path_buf()));
        Ok(())
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.pending.iter().map(|(_, p)| p.as_path())
    }

    pub fn commit(mut self) -> Result<Vec<PathBuf>> {
        let mut out = Vec::with_capacity(self.pending.len());
        for (tmp, dst) in self.pending.drain(..) {
            fs::rename(&tmp, &dst).map_err(|e| Error::io(&dst, e))?;
            out.push(dst);
        }
        self.committed = true;
        Ok(out)
    }
}

impl Drop for StagedWrites {
    fn drop(&mut self) {
        if !self.committed {
            for (tmp, _) in &self.pending {
                let _ = fs::remove_file(tmp);
            }
        }
    }
}
