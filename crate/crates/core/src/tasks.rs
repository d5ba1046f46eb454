// SPDX-License-Identifier: MIT OR Apache-2.0

//! Prompt records and task sets loaded from JSONL.
//!
//! Task lines look like
//! `{"task":"adj_ant","instruction":"Given an adjective, state its antonym.","query":"hot","answer":"cold"}`
//! and rephrasing lines like `{"task":"adj_ant","instruction":"..."}`.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::SimpleTokenizer;

/// One raw task line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskLine {
    pub task: String,
    pub instruction: String,
    pub query: String,
    pub answer: String,
}

/// One raw rephrasing line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RephrasingLine {
    pub task: String,
    pub instruction: String,
}

/// A tokenized `[instruction ++ query]` prompt with its single-token answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub task_label: String,
    pub instruction_text: String,
    pub query_text: String,
    pub answer_text: String,
    pub inst_tokens: Vec<usize>,
    pub query_tokens: Vec<usize>,
    pub answer_token: usize,
    /// Position of the final instruction token.
    pub t_inst_index: usize,
    /// Final prompt position.
    pub t_last_index: usize,
}

impl PromptRecord {
    /// Tokenize a task line; `Err(reason)` if the record must be rejected.
    pub fn from_line(line: &TaskLine, tokenizer: &SimpleTokenizer) -> std::result::Result<(Self, usize), String> {
        let inst = tokenizer.encode(&line.instruction);
        let query = tokenizer.encode(&line.query);
        let answer = tokenizer.encode(&line.answer);
        if inst.ids.is_empty() {
            return Err("instruction tokenizes to zero tokens".into());
        }
        if query.ids.is_empty() {
            return Err("query tokenizes to zero tokens".into());
        }
        if answer.ids.len() != 1 {
            return Err(format!("answer tokenizes to {} tokens, expected 1", answer.ids.len()));
        }
        let unknown = inst.unknown + query.unknown + answer.unknown;
        let t_inst_index = inst.ids.len() - 1;
        let t_last_index = inst.ids.len() + query.ids.len() - 1;
        Ok((
            PromptRecord {
                task_label: line.task.clone(),
                instruction_text: line.instruction.clone(),
                query_text: line.query.clone(),
                answer_text: line.answer.clone(),
                inst_tokens: inst.ids,
                query_tokens: query.ids,
                answer_token: answer.ids[0],
                t_inst_index,
                t_last_index,
            },
            unknown,
        ))
    }

    /// `[T^inst T^q]`.
    pub fn full_tokens(&self) -> Vec<usize> {
        let mut t = self.inst_tokens.clone();
        t.extend_from_slice(&self.query_tokens);
        t
    }

    /// `[<s> T^q]`, with the filler at position 0.
    pub fn target_tokens(&self, filler_id: usize) -> Vec<usize> {
        let mut t = Vec::with_capacity(self.query_tokens.len() + 1);
        t.push(filler_id);
        t.extend_from_slice(&self.query_tokens);
        t
    }
}

/// A tokenized instruction variant used for geometry analysis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rephrasing {
    pub text: String,
    pub tokens: Vec<usize>,
}

/// Records grouped by task, plus optional instruction rephrasings.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TaskSet {
    pub records: Vec<PromptRecord>,
    pub rephrasings: Option<BTreeMap<String, Vec<Rephrasing>>>,
    labels: Vec<String>,
}

impl TaskSet {
    pub fn new(records: Vec<PromptRecord>) -> Self {
        let mut labels: Vec<String> = Vec::new();
        for r in &records {
            if !labels.contains(&r.task_label) {
                labels.push(r.task_label.clone());
            }
        }
        TaskSet {
            records,
            rephrasings: None,
            labels,
        }
    }

    /// Task labels in order of first appearance.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records of one task, in file order.
    pub fn task_records<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a PromptRecord> + 'a {
        self.records.iter().filter(move |r| r.task_label == label)
    }

    /// Attach rephrasings; each list must be nonempty.
    pub fn with_rephrasings(mut self, rephrasings: BTreeMap<String, Vec<Rephrasing>>) -> Result<Self> {
        if rephrasings.values().any(Vec::is_empty) {
            return Err(Error::Empty("rephrasing list"));
        }
        for label in rephrasings.keys() {
            if !self.labels.contains(label) {
                self.labels.push(label.clone());
            }
        }
        self.rephrasings = Some(rephrasings);
        Ok(self)
    }
}

/// A record dropped during loading.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    /// 1-based line number.
    pub line: usize,
    pub reason: String,
}

/// Per-file loading diagnostics; serializes as `{"rejected": [...]}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub rejected: Vec<Rejection>,
    /// Number of unknown spans mapped to `<unk>` across all accepted records.
    #[serde(skip)]
    pub unknown_spans: usize,
}

fn jsonl_lines<T: for<'de> Deserialize<'de>>(
    reader: impl BufRead,
    path: &Path,
) -> Result<Vec<(usize, T)>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| Error::Record {
            path: path.to_path_buf(),
            line: idx + 1,
            reason: e.to_string(),
        })?;
        out.push((idx + 1, value));
    }
    Ok(out)
}

/// Load and tokenize tasks from any reader. `origin` is used in error messages.
pub fn load_tasks_from(
    reader: impl BufRead,
    origin: &Path,
    tokenizer: &SimpleTokenizer,
) -> Result<(TaskSet, LoadReport)> {
    let mut report = LoadReport::default();
    let mut records = Vec::new();
    for (line_no, line) in jsonl_lines::<TaskLine>(reader, origin)? {
        match PromptRecord::from_line(&line, tokenizer) {
            Ok((record, unknown)) => {
                if unknown > 0 {
                    log::warn!("{}:{line_no}: {unknown} unknown span(s) mapped to <unk>", origin.display());
                }
                report.unknown_spans += unknown;
                records.push(record);
            }
            Err(reason) => report.rejected.push(Rejection { line: line_no, reason }),
        }
    }
    Ok((TaskSet::new(records), report))
}

/// Load a tasks JSONL file.
pub fn load_tasks(path: impl AsRef<Path>, tokenizer: &SimpleTokenizer) -> Result<(TaskSet, LoadReport)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    load_tasks_from(std::io::BufReader::new(file), path, tokenizer)
}

/// Load a rephrasings JSONL file, grouped by task label.
pub fn load_rephrasings(
    path: impl AsRef<Path>,
    tokenizer: &SimpleTokenizer,
) -> Result<BTreeMap<String, Vec<Rephrasing>>> {
    let path: PathBuf = path.as_ref().to_path_buf();
    let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut out: BTreeMap<String, Vec<Rephrasing>> = BTreeMap::new();
    for (line_no, line) in jsonl_lines::<RephrasingLine>(std::io::BufReader::new(file), &path)? {
        let enc = tokenizer.encode(&line.instruction);
        if enc.ids.is_empty() {
            return Err(Error::Record {
                path: path.clone(),
                line: line_no,
                reason: "instruction tokenizes to zero tokens".into(),
            });
        }
        out.entry(line.task).or_default().push(Rephrasing {
            text: line.instruction,
            tokens: enc.ids,
        });
    }
    Ok(out)
}
