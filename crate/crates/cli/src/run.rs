// SPDX-License-Identifier: MIT OR Apache-2.0

//! Per-run bookkeeping: input checksums, staged outputs, manifest, and the
//! error kinds that decide the exit code.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";

/// A required input file or directory is missing or unreadable (exit 2).
#[derive(Debug)]
pub struct MissingInput(pub PathBuf);

impl fmt::Display for MissingInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "missing input: {}", self.0.display())
    }
}

impl std::error::Error for MissingInput {}

/// Bad flag combination detected after parsing (exit 2).
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "usage: {}", self.0)
    }
}

impl std::error::Error for Usage {}

/// An internal consistency check failed (exit 1).
#[derive(Debug)]
pub struct Violation {
    pub property: &'static str,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invariant violated [{}]: {}", self.property, self.detail)
    }
}

impl std::error::Error for Violation {}

pub fn violation(property: &'static str, detail: impl Into<String>) -> anyhow::Error {
    Violation {
        property,
        detail: detail.into(),
    }
    .into()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub flags: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<InputRecord>,
    /// File names inside the output directory.
    pub outputs: Vec<String>,
    /// Arguments after the program name, for `replay`.
    pub argv: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Read an input file, failing with [`MissingInput`] if it is absent.
pub fn read_input(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|_| MissingInput(path.to_path_buf()).into())
}

/// Collects inputs and outputs of one command and commits them together.
pub struct Run {
    out_dir: PathBuf,
    manifest: Manifest,
    files: Vec<(String, Vec<u8>)>,
}

impl Run {
    pub fn new(command: &str, flags: serde_json::Value, seed: Option<u64>, argv: Vec<String>, out_dir: &Path) -> Self {
        Run {
            out_dir: out_dir.to_path_buf(),
            manifest: Manifest {
                command: command.to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                flags,
                seed,
                inputs: Vec::new(),
                outputs: Vec::new(),
                argv,
            },
            files: Vec::new(),
        }
    }

    /// Register an input: checksum it and return its path for loading.
    pub fn input(&mut self, path: &Path) -> Result<PathBuf> {
        let bytes = read_input(path)?;
        self.record_input(path, &bytes);
        Ok(path.to_path_buf())
    }

    /// Register an input that has already been read.
    pub fn record_input(&mut self, path: &Path, bytes: &[u8]) {
        self.manifest.inputs.push(InputRecord {
            path: path.display().to_string(),
            sha256: sha256_hex(bytes),
        });
    }

    pub fn output(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        let name = name.into();
        self.manifest.outputs.push(name.clone());
        self.files.push((name, bytes));
    }

    /// Write every staged file to a temporary name, then rename them all
    /// into place, manifest last. Nothing is left behind on failure.
    pub fn commit(mut self) -> Result<Manifest> {
        fs::create_dir_all(&self.out_dir).with_context(|| format!("creating {}", self.out_dir.display()))?;
        let manifest_bytes = serde_json::to_vec_pretty(&self.manifest)?;
        self.files.push((MANIFEST.to_string(), manifest_bytes));
        let tag = format!(".tmp-{}", std::process::id());
        let mut staged: Vec<(PathBuf, PathBuf)> = Vec::new();
        let result = (|| -> Result<()> {
            for (name, bytes) in &self.files {
                let final_path = self.out_dir.join(name);
                let tmp = self.out_dir.join(format!(".{name}{tag}"));
                fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
                staged.push((tmp, final_path));
            }
            for (tmp, final_path) in &staged {
                fs::rename(tmp, final_path).with_context(|| format!("renaming into {}", final_path.display()))?;
            }
            Ok(())
        })();
        if result.is_err() {
            for (tmp, _) in &staged {
                let _ = fs::remove_file(tmp);
            }
        }
        result.map(|()| self.manifest)
    }
}

/// Render rows as CSV with floats in shortest round-trip form.
pub fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| anyhow::anyhow!("csv buffer: {e}"))
}

pub fn jsonl_bytes<T: Serialize>(items: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, &item)?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path, bytes: &[u8]) -> Result<Vec<T>> {
    let text = std::str::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), i + 1)))
        .collect()
}
