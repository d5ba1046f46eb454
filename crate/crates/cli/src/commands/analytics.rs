// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Result;
use ivtrace_core::pathtrace::{head_activity as activity, path_contribution_by_token, PathRecord, SamplePaths};
use serde::Serialize;

use super::trace::{PathLine, SampleLine, TraceInfo};
use crate::args::{HeadActivityArgs, TokenContribArgs};
use crate::run::{csv_bytes, read_input, read_jsonl, violation, Run};

struct Loaded {
    info: TraceInfo,
    samples: Vec<SampleLine>,
    paths: BTreeMap<usize, Vec<PathRecord>>,
    n_paths: usize,
}

fn load(dir: &Path, task: Option<&str>, run: &mut Run) -> Result<Loaded> {
    let mut read = |name: &str| -> Result<(std::path::PathBuf, Vec<u8>)> {
        let path = dir.join(name);
        let bytes = read_input(&path)?;
        run.record_input(&path, &bytes);
        Ok((path, bytes))
    };
    let (_, info_bytes) = read("trace.json")?;
    let (sample_path, sample_bytes) = read("samples.jsonl")?;
    let (path_path, path_bytes) = read("paths.jsonl")?;
    let keep = |t: &str| task.is_none_or(|want| want == t);
    let samples: Vec<SampleLine> = read_jsonl::<SampleLine>(&sample_path, &sample_bytes)?
        .into_iter()
        .filter(|s| keep(&s.task))
        .collect();
    let mut paths: BTreeMap<usize, Vec<PathRecord>> = samples.iter().map(|s| (s.sample_id, Vec::new())).collect();
    let mut n_paths = 0;
    for line in read_jsonl::<PathLine>(&path_path, &path_bytes)? {
        if !keep(&line.task) {
            continue;
        }
        let slot = paths.get_mut(&line.sample_id).ok_or_else(|| {
            violation("path-sample-reference", format!("path refers to unknown sample {}", line.sample_id))
        })?;
        slot.push(line.path);
        n_paths += 1;
    }
    Ok(Loaded {
        info: serde_json::from_slice(&info_bytes)?,
        samples,
        paths,
        n_paths,
    })
}

fn sample_views(loaded: &Loaded) -> Vec<SamplePaths<'_>> {
    loaded
        .samples
        .iter()
        .map(|s| SamplePaths {
            seq_len: s.seq_len,
            t_inst: s.t_inst,
            paths: &loaded.paths[&s.sample_id],
        })
        .collect()
}

pub fn token_contrib(args: &TokenContribArgs, mut run: Run) -> Result<()> {
    let loaded = load(&args.trace, args.task.as_deref(), &mut run)?;
    let contrib = path_contribution_by_token(&sample_views(&loaded));
    let total: usize = contrib.iter().map(|c| c.total_count).sum();
    if total != loaded.n_paths {
        return Err(violation(
            "path-count-conservation",
            format!("per-token counts sum to {total}, trace holds {} paths", loaded.n_paths),
        ));
    }
    let rows = contrib.iter().map(|c| {
        vec![
            c.token_pos.to_string(),
            c.mean_count.to_string(),
            c.total_count.to_string(),
            c.n_samples.to_string(),
        ]
    });
    run.output(
        "token_contrib.csv",
        csv_bytes(&["token_pos", "mean_count", "total_count", "n_samples"], rows)?,
    );
    run.commit()?;
    Ok(())
}

#[derive(Serialize)]
struct ActivitySummary {
    n_samples: usize,
    n_paths: usize,
    empty: bool,
}

pub fn head_activity(args: &HeadActivityArgs, mut run: Run) -> Result<()> {
    let loaded = load(&args.trace, args.task.as_deref(), &mut run)?;
    let act = activity(&sample_views(&loaded), loaded.info.num_layers, loaded.info.num_heads);
    if act.empty {
        log::warn!("no kept paths start at T_inst; activity is all zero");
    }
    let mut rows = Vec::new();
    for (l, heads) in act.fractions.iter().enumerate() {
        for (h, f) in heads.iter().enumerate() {
            if !(0.0..=1.0).contains(f) {
                return Err(violation("activity-range", format!("layer {} head {h}: {f}", l + 1)));
            }
            rows.push(vec![(l + 1).to_string(), h.to_string(), f.to_string()]);
        }
    }
    run.output("head_activity.csv", csv_bytes(&["layer", "head", "activity"], rows)?);
    let summary = ActivitySummary {
        n_samples: act.n_samples,
        n_paths: act.n_paths,
        empty: act.empty,
    };
    run.output("head_activity.json", serde_json::to_vec_pretty(&summary)?);
    run.commit()?;
    Ok(())
}
