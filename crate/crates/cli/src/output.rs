//! All-or-nothing file output.
//!
//! A command stages every file it produces in memory, then [`OutputSet::commit`]
//! writes each one to a temporary file inside the target directory and only
//! renames them into place once all writes succeeded.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tempfile::NamedTempFile;

use crate::{CliError, CliResult};

/// Fallback output directory when neither `--out`, the config nor
/// `GMCSIM_OUT` name one.
pub const DEFAULT_OUT_DIR: &str = "gmcsim-out";
pub const OUT_DIR_ENV: &str = "GMCSIM_OUT";

/// `--out`, then the config's `output_dir`, then `GMCSIM_OUT`, then
/// [`DEFAULT_OUT_DIR`].
pub fn resolve_out_dir(flag: Option<&Path>, config: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| config.map(Path::to_path_buf))
        .or_else(|| {
            std::env::var_os(OUT_DIR_ENV)
                .filter(|v| !v.is_empty())
                .map(PathBuf::from)
        })
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

#[derive(Debug, Default)]
pub struct OutputSet {
    files: Vec<(String, Vec<u8>)>,
}

impl OutputSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, contents: impl Into<Vec<u8>>) {
        self.files.push((name.into(), contents.into()));
    }

    pub fn add_json<T: Serialize>(&mut self, name: impl Into<String>, value: &T) {
        let mut text = serde_json::to_string_pretty(value).expect("report serializes");
        text.push('\n');
        self.add(name, text);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    /// Writes every staged file into `dir`, creating it if needed. On error
    /// no staged file is left behind.
    pub fn commit(self, dir: &Path) -> CliResult<Vec<PathBuf>> {
        let io = |what: &str, e: std::io::Error| {
            CliError::Runtime(format!("{what} in {}: {e}", dir.display()))
        };
        std::fs::create_dir_all(dir).map_err(|e| io("cannot create output directory", e))?;
        let mut staged = Vec::with_capacity(self.files.len());
        for (name, contents) in &self.files {
            let mut tmp =
                NamedTempFile::new_in(dir).map_err(|e| io("cannot create temporary file", e))?;
            tmp.write_all(contents).map_err(|e| io("cannot write", e))?;
            tmp.as_file().sync_all().map_err(|e| io("cannot sync", e))?;
            staged.push((tmp, dir.join(name)));
        }
        let mut written = Vec::with_capacity(staged.len());
        for (tmp, path) in staged {
            tmp.persist(&path).map_err(|e| {
                CliError::Runtime(format!("cannot write {}: {}", path.display(), e.error))
            })?;
            written.push(path);
        }
        Ok(written)
    }
}

/// CSV text with the given header; every value uses Rust's shortest
/// round-trip float formatting.
pub fn csv<const N: usize>(header: &str, rows: impl IntoIterator<Item = [f64; N]>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}
