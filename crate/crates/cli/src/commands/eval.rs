// SPDX-License-Identifier: MIT OR Apache-2.0

use std::io::Cursor;

use anyhow::Result;
use ivtrace_core::eval_ema;
use ivtrace_core::tasks::load_tasks_from;

use crate::args::EvalArgs;
use crate::run::{csv_bytes, read_input, Run};
use crate::source::load_bundle;

pub fn run(args: &EvalArgs, mut run: Run) -> Result<()> {
    let bundle = load_bundle(&args.model, &mut run)?;
    let bytes = read_input(&args.tasks)?;
    run.record_input(&args.tasks, &bytes);
    let (tasks, report) = load_tasks_from(Cursor::new(bytes), &args.tasks, &bundle.tokenizer)?;
    let acc = eval_ema(&bundle.model, &tasks)?;
    let rows = tasks.labels().iter().filter_map(|label| {
        acc.get(label).map(|a| {
            vec![
                label.clone(),
                a.correct.to_string(),
                a.total.to_string(),
                a.accuracy.to_string(),
            ]
        })
    });
    run.output("ema.csv", csv_bytes(&["task", "correct", "total", "accuracy"], rows)?);
    run.output("rejected.json", serde_json::to_vec_pretty(&report)?);
    run.commit()?;
    Ok(())
}
