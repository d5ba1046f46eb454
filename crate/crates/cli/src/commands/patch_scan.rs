// SPDX-License-Identifier: MIT OR Apache-2.0

use std::io::Cursor;

use anyhow::Result;
use ivtrace_core::patching::{grid_scan, MediationOptions};
use ivtrace_core::tasks::{load_tasks_from, LoadReport};
use serde::{Deserialize, Serialize};

use super::file_label;
use crate::args::PatchScanArgs;
use crate::run::{csv_bytes, jsonl_bytes, read_input, violation, Run};
use crate::source::load_bundle;

/// Summary written next to the grids; read back by `superadd`.
#[derive(Debug, Serialize, Deserialize)]
pub struct ScanInfo {
    pub num_layers: usize,
    pub max_pair_order: usize,
    pub tasks: Vec<String>,
    pub report: LoadReport,
}

pub fn run(args: &PatchScanArgs, mut run: Run) -> Result<()> {
    let bundle = load_bundle(&args.model, &mut run)?;
    let bytes = read_input(&args.tasks)?;
    run.record_input(&args.tasks, &bytes);
    let (tasks, report) = load_tasks_from(Cursor::new(bytes), &args.tasks, &bundle.tokenizer)?;
    if !report.rejected.is_empty() {
        log::warn!("{} task record(s) rejected", report.rejected.len());
    }
    let num_layers = bundle.model.config().num_layers;
    let grid = grid_scan(
        &bundle.model,
        &tasks,
        args.max_pair_order,
        MediationOptions::new(bundle.tokenizer.filler_id()),
    )?;

    let expected = if args.max_pair_order == 1 { num_layers } else { num_layers * (num_layers + 1) / 2 };
    let mut raw = Vec::new();
    for tg in &grid.tasks {
        if tg.cells.len() != expected {
            return Err(violation(
                "grid-cell-count",
                format!("task {} has {} cells, expected {expected}", tg.task, tg.cells.len()),
            ));
        }
        let label = file_label(&tg.task);
        let rows = tg.cells.iter().map(|c| {
            vec![
                c.layer_i.to_string(),
                c.layer_j.to_string(),
                c.mean_rank_effect.to_string(),
                c.mean_logit_effect.to_string(),
                c.n_samples.to_string(),
            ]
        });
        run.output(
            format!("grid_{label}.csv"),
            csv_bytes(&["layer_i", "layer_j", "mean_rank_effect", "mean_logit_effect", "n_samples"], rows)?,
        );
        let rows = tg.normalized().into_iter().map(|c| {
            vec![
                c.layer_i.to_string(),
                c.layer_j.to_string(),
                c.norm_rank.to_string(),
                c.norm_logit.to_string(),
            ]
        });
        run.output(
            format!("grid_{label}_normalized.csv"),
            csv_bytes(&["layer_i", "layer_j", "norm_rank", "norm_logit"], rows)?,
        );
        raw.extend(tg.samples.iter());
    }
    run.output("raw_scores.jsonl", jsonl_bytes(raw)?);
    let info = ScanInfo {
        num_layers,
        max_pair_order: args.max_pair_order,
        tasks: grid.tasks.iter().map(|t| t.task.clone()).collect(),
        report,
    };
    run.output("scan.json", serde_json::to_vec_pretty(&info)?);
    run.commit()?;
    Ok(())
}
