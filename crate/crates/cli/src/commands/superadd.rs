// SPDX-License-Identifier: MIT OR Apache-2.0

use anyhow::Result;
use ivtrace_core::patching::{SampleScore, TaskGrid};
use ivtrace_core::stats::{superadd_for_task, Alternative, EffectMetric, SuperaddReport};
use serde::Serialize;

use super::file_label;
use super::patch_scan::ScanInfo;
use crate::args::SuperaddArgs;
use crate::run::{csv_bytes, read_input, read_jsonl, violation, Run};

#[derive(Serialize)]
struct TaskReport<'a> {
    task: &'a str,
    pairs: Vec<(usize, usize)>,
    report: SuperaddReport,
}

#[derive(Serialize)]
struct Summary<'a> {
    metric: EffectMetric,
    alternative: Alternative,
    top: usize,
    tasks: Vec<TaskReport<'a>>,
}

pub fn run(args: &SuperaddArgs, mut run: Run) -> Result<()> {
    let info_path = args.scan.join("scan.json");
    let info_bytes = read_input(&info_path)?;
    run.record_input(&info_path, &info_bytes);
    let info: ScanInfo = serde_json::from_slice(&info_bytes)?;
    let raw_path = args.scan.join("raw_scores.jsonl");
    let raw_bytes = read_input(&raw_path)?;
    run.record_input(&raw_path, &raw_bytes);
    let scores: Vec<SampleScore> = read_jsonl(&raw_path, &raw_bytes)?;

    let mut reports = Vec::new();
    for task in &info.tasks {
        let samples: Vec<SampleScore> = scores.iter().filter(|s| &s.task == task).cloned().collect();
        let grid = TaskGrid::from_samples(task, info.num_layers, samples);
        let report = superadd_for_task(&grid, args.top, args.metric, args.alternative)?;
        for row in &report.rows {
            if grid.cell(row.layer_i, row.layer_j).is_none() {
                return Err(violation(
                    "superadd-pairs-in-scan",
                    format!("task {task}: pair ({}, {}) not in scan", row.layer_i, row.layer_j),
                ));
            }
        }
        let rows = report.rows.iter().map(|r| {
            vec![
                r.layer_i.to_string(),
                r.layer_j.to_string(),
                r.t_statistic.to_string(),
                r.p_value.to_string(),
                r.mean_delta.to_string(),
                r.fraction_holding.to_string(),
                r.n.to_string(),
            ]
        });
        run.output(
            format!("superadd_{}.csv", file_label(task)),
            csv_bytes(
                &["layer_i", "layer_j", "t_stat", "p_value", "mean_delta", "frac_holding", "n"],
                rows,
            )?,
        );
        reports.push(TaskReport {
            task,
            pairs: report.rows.iter().map(|r| (r.layer_i, r.layer_j)).collect(),
            report,
        });
    }
    let summary = Summary {
        metric: args.metric,
        alternative: args.alternative,
        top: args.top,
        tasks: reports,
    };
    run.output("superadd.json", serde_json::to_vec_pretty(&summary)?);
    run.commit()?;
    Ok(())
}
