// SPDX-License-Identifier: MIT OR Apache-2.0

use anyhow::Result;
use ivtrace_core::toy::{gen_toy_model, gen_toy_tasks, ToyTaskSpec};
use ivtrace_core::weights_io::model_to_bytes;

use crate::args::GenToyArgs;
use crate::run::{jsonl_bytes, Run};
use crate::source::toy_config;

/// Offset separating the task stream from the weight stream of one seed.
const TASK_STREAM: u64 = 0x7461_736b;

pub fn run(args: &GenToyArgs, mut run: Run) -> Result<()> {
    let cfg = toy_config(&args.shape)?;
    let bundle = gen_toy_model(args.seed, &cfg)?;
    let spec = ToyTaskSpec {
        num_tasks: args.tasks,
        samples_per_task: args.samples,
        rephrasings_per_task: args.rephrasings,
    };
    let (tasks, rephrasings) = gen_toy_tasks(args.seed ^ TASK_STREAM, &bundle.tokenizer, spec)?;
    run.output("model.bin", model_to_bytes(&bundle.model)?);
    run.output("vocab.txt", bundle.tokenizer.to_file_string().into_bytes());
    run.output("tasks.jsonl", jsonl_bytes(&tasks)?);
    run.output("rephrasings.jsonl", jsonl_bytes(&rephrasings)?);
    run.commit()?;
    Ok(())
}
