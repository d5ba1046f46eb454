// SPDX-License-Identifier: MIT OR Apache-2.0

use std::io::Cursor;

use anyhow::Result;
use ivtrace_core::pathtrace::{
    build_surrogates, enumerate_paths, layer_rewrite_check, EdgePolicy, EnumerateOptions, PathRecord,
};
use ivtrace_core::tasks::load_tasks_from;
use ivtrace_core::{forward, Intervention};
use serde::{Deserialize, Serialize};

use crate::args::TraceArgs;
use crate::run::{jsonl_bytes, read_input, violation, Run, Usage};
use crate::source::load_bundle;

/// Largest exhaustive expansion the oracle mode will attempt.
const EXHAUSTIVE_LIMIT: f64 = 2e6;
const REWRITE_TOL: f64 = 1e-8;
const PATH_SUM_TOL: f64 = 1e-6;

#[derive(Debug, Serialize, Deserialize)]
pub struct TraceInfo {
    pub num_layers: usize,
    pub num_heads: usize,
    pub vocab_size: usize,
    pub rank_threshold: usize,
    pub exhaustive: bool,
    pub source_pos: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleLine {
    pub sample_id: usize,
    pub task: String,
    pub seq_len: usize,
    pub t_inst: usize,
    pub answer_token: usize,
    pub enumerated: usize,
    pub kept: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathLine {
    pub sample_id: usize,
    pub task: String,
    pub t_inst: usize,
    #[serde(flatten)]
    pub path: PathRecord,
}

enum SourceSel {
    All,
    Inst,
    At(usize),
}

pub fn run(args: &TraceArgs, mut run: Run) -> Result<()> {
    let bundle = load_bundle(&args.model, &mut run)?;
    let bytes = read_input(&args.tasks)?;
    run.record_input(&args.tasks, &bytes);
    let (tasks, _) = load_tasks_from(Cursor::new(bytes), &args.tasks, &bundle.tokenizer)?;
    let model = &bundle.model;
    let cfg = model.config();
    if args.rank_threshold == 0 {
        return Err(Usage("--rank-threshold must be at least 1".into()).into());
    }
    let sel = match args.source_pos.as_deref() {
        None => SourceSel::All,
        Some("inst") => SourceSel::Inst,
        Some(p) => SourceSel::At(p.parse().map_err(|_| Usage(format!("--source-pos {p:?} is not a position or 'inst'")))?),
    };

    let mut samples = Vec::new();
    let mut lines = Vec::new();
    for (sample_id, record) in tasks.records.iter().enumerate() {
        let tokens = record.full_tokens();
        let n = tokens.len();
        if args.exhaustive_oracle {
            let bound = (2.0 * (1.0 + (cfg.num_heads * n) as f64)).powi(cfg.num_layers as i32);
            if bound > EXHAUSTIVE_LIMIT {
                return Err(Usage(format!(
                    "--exhaustive-oracle is for tiny models: up to {bound:.0} paths for sample {sample_id}"
                ))
                .into());
            }
        }
        let sources = match sel {
            SourceSel::All => None,
            SourceSel::Inst => Some(vec![record.t_inst_index]),
            SourceSel::At(p) if p < n => Some(vec![p]),
            SourceSel::At(p) => return Err(Usage(format!("--source-pos {p} beyond prompt of length {n}")).into()),
        };
        let trace = forward(model, &tokens, &Intervention::none())?;
        let surrogates = build_surrogates(&trace, model)?;
        for l in 1..=cfg.num_layers {
            for i in 0..n {
                let err = layer_rewrite_check(&trace, &surrogates, model, l, i)?;
                if err > REWRITE_TOL {
                    return Err(violation(
                        "surrogate-exactness",
                        format!("sample {sample_id}, layer {l}, position {i}: error {err:e}"),
                    ));
                }
            }
        }
        let policy = if args.exhaustive_oracle { EdgePolicy::All } else { EdgePolicy::Argmax };
        let opts = EnumerateOptions {
            rank_threshold: args.rank_threshold,
            policy,
            sources,
            top_k: args.top_k,
        };
        let found = enumerate_paths(&trace, &surrogates, model, record.answer_token, &opts)?;
        let full_count = (2 * (cfg.num_heads + 1)).pow(cfg.num_layers as u32);
        if !args.exhaustive_oracle && opts.sources.is_none() && found.enumerated != full_count {
            return Err(violation(
                "branch-count",
                format!("sample {sample_id}: {} paths enumerated, expected {full_count}", found.enumerated),
            ));
        }
        if args.exhaustive_oracle {
            let all = EnumerateOptions {
                rank_threshold: cfg.vocab_size,
                sources: None,
                ..opts.clone()
            };
            let every = enumerate_paths(&trace, &surrogates, model, record.answer_token, &all)?;
            let mut sum = vec![0.0; cfg.model_dim];
            for p in &every.paths {
                for (s, v) in sum.iter_mut().zip(p.vector.iter()) {
                    *s += v;
                }
            }
            let target = trace.resid_at(cfg.num_layers + 1, n - 1);
            let err = sum.iter().zip(target.iter()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if err > PATH_SUM_TOL {
                return Err(violation(
                    "path-sum-reconstruction",
                    format!("sample {sample_id}: max error {err:e}"),
                ));
            }
        }
        samples.push(SampleLine {
            sample_id,
            task: record.task_label.clone(),
            seq_len: n,
            t_inst: record.t_inst_index,
            answer_token: record.answer_token,
            enumerated: found.enumerated,
            kept: found.paths.len(),
        });
        lines.extend(found.paths.into_iter().map(|path| PathLine {
            sample_id,
            task: record.task_label.clone(),
            t_inst: record.t_inst_index,
            path,
        }));
    }
    run.output("paths.jsonl", jsonl_bytes(&lines)?);
    run.output("samples.jsonl", jsonl_bytes(&samples)?);
    let info = TraceInfo {
        num_layers: cfg.num_layers,
        num_heads: cfg.num_heads,
        vocab_size: cfg.vocab_size,
        rank_threshold: args.rank_threshold,
        exhaustive: args.exhaustive_oracle,
        source_pos: args.source_pos.clone(),
    };
    run.output("trace.json", serde_json::to_vec_pretty(&info)?);
    run.commit()?;
    Ok(())
}
