// SPDX-License-Identifier: MIT OR Apache-2.0

//! Helpers for driving the `ivtrace` binary from tests.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_ivtrace"))
}

pub fn ivtrace(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("spawn ivtrace")
}

/// Run and require success, returning stderr on failure.
pub fn ok(args: &[&str]) -> Result<(), String> {
    let out = ivtrace(args);
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "ivtrace {} exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// File name → contents for every regular file in `dir`.
pub fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .expect("read dir")
        .map(|e| {
            let e = e.expect("dir entry");
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).expect("read"))
        })
        .collect();
    files.sort();
    files
}

/// Data rows of a CSV file as string fields.
pub fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).expect("read csv");
    text.lines().skip(1).map(|l| l.split(',').map(str::to_owned).collect()).collect()
}

/// The full toy pipeline into `root/{toy,scan,superadd,trace,contrib,heads}`.
pub fn pipeline(root: &Path, seed: &str) -> Result<(), String> {
    let toy = root.join("toy");
    ok(&[
        "gen-toy", "--seed", seed, "--layers", "3", "--heads", "2", "--dim", "16", "--vocab", "64", "--out", s(&toy),
    ])?;
    let model = toy.join("model.bin");
    let vocab = toy.join("vocab.txt");
    let tasks = toy.join("tasks.jsonl");
    let m = ["--model", s(&model), "--vocab", s(&vocab)];
    let scan = root.join("scan");
    ok(&[&["patch-scan"][..], &m, &["--tasks", s(&tasks), "--out", s(&scan)]].concat())?;
    ok(&["superadd", "--scan", s(&scan), "--top", "10", "--out", s(&root.join("superadd"))])?;
    let trace = root.join("trace");
    ok(&[&["trace"][..], &m, &["--tasks", s(&tasks), "--out", s(&trace)]].concat())?;
    ok(&["token-contrib", "--trace", s(&trace), "--out", s(&root.join("contrib"))])?;
    ok(&["head-activity", "--trace", s(&trace), "--out", s(&root.join("heads"))])?;
    Ok(())
}

pub const STAGES: [&str; 6] = ["toy", "scan", "superadd", "trace", "contrib", "heads"];
