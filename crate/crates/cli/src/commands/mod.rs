// SPDX-License-Identifier: MIT OR Apache-2.0

mod analytics;
mod eval;
mod gen_toy;
mod geometry;
mod patch_scan;
mod replay;
mod superadd;
mod trace;

use anyhow::Result;

use crate::args::Command;
use crate::run::Run;

/// File-name-safe form of a task label.
pub fn file_label(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn dispatch(command: &Command, argv: Vec<String>) -> Result<()> {
    let flags = serde_json::to_value(command)?;
    let new_run = |seed: Option<u64>, out: &std::path::Path| Run::new(command.name(), flags.clone(), seed, argv.clone(), out);
    match command {
        Command::GenToy(a) => gen_toy::run(a, new_run(Some(a.seed), &a.out)),
        Command::PatchScan(a) => patch_scan::run(a, new_run(None, &a.out)),
        Command::Superadd(a) => superadd::run(a, new_run(None, &a.out)),
        Command::Geometry(a) => geometry::run(a, new_run(Some(a.seed), &a.out)),
        Command::Trace(a) => trace::run(a, new_run(None, &a.out)),
        Command::TokenContrib(a) => analytics::token_contrib(a, new_run(None, &a.out)),
        Command::HeadActivity(a) => analytics::head_activity(a, new_run(None, &a.out)),
        Command::Eval(a) => eval::run(a, new_run(None, &a.out)),
        Command::Replay(a) => replay::run(a),
    }
}
