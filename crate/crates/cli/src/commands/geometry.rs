// SPDX-License-Identifier: MIT OR Apache-2.0

use anyhow::Result;
use ivtrace_core::geometry::{
    extract_reps, lda_project, separation_ratio, train_probe, LayerSelector, ProbeConfig, ProbeReport,
};
use ivtrace_core::tasks::load_rephrasings;
use ivtrace_core::TaskSet;
use serde::Serialize;

use crate::args::GeometryArgs;
use crate::run::{csv_bytes, Run, Usage};
use crate::source::load_bundle;

#[derive(Serialize)]
struct SelectorReport {
    selector: LayerSelector,
    out_dim: usize,
    lda_eigenvalues: Vec<f64>,
    separation_ratio: f64,
    probe: ProbeReport,
}

#[derive(Serialize)]
#[serde(untagged)]
enum Entry {
    Done(Box<SelectorReport>),
    Skipped { selector: LayerSelector, skipped: String },
}

fn selector_name(s: &LayerSelector) -> String {
    match s {
        LayerSelector::Single(l) => format!("layer{l}"),
        LayerSelector::Concat => "concat".to_string(),
    }
}

pub fn run(args: &GeometryArgs, mut run: Run) -> Result<()> {
    let bundle = load_bundle(&args.model, &mut run)?;
    let path = run.input(&args.rephrasings)?;
    let rephrasings = load_rephrasings(&path, &bundle.tokenizer)?;
    let tasks = TaskSet::new(Vec::new()).with_rephrasings(rephrasings)?;
    let num_layers = bundle.model.config().num_layers;
    let sweep = args.layer.is_none() && !args.concat;
    let selectors: Vec<LayerSelector> = match (args.layer, args.concat) {
        (Some(l), _) => {
            if l == 0 || l > num_layers + 1 {
                return Err(Usage(format!("--layer {l} outside 1..={}", num_layers + 1)).into());
            }
            vec![LayerSelector::Single(l)]
        }
        (None, true) => vec![LayerSelector::Concat],
        (None, false) => (1..=num_layers + 1).map(LayerSelector::Single).collect(),
    };
    let probe_cfg = ProbeConfig {
        train_fraction: args.train_fraction,
        seed: args.seed,
        learning_rate: args.lr,
        epochs: args.epochs,
    };

    let mut reports = Vec::new();
    let mut summary = Vec::new();
    for selector in selectors {
        let reps = extract_reps(&bundle.model, &tasks, &selector)?;
        let out_dim = 2.min(reps.num_classes().saturating_sub(1)).max(1);
        let lda = match lda_project(&reps, out_dim) {
            Ok(lda) => lda,
            // In a sweep, a layer where every class looks the same (such as
            // the embedding of a shared final token) is reported, not fatal.
            Err(e @ ivtrace_core::Error::Geometry(_)) if sweep => {
                log::warn!("{}: {e}", selector_name(&selector));
                reports.push(Entry::Skipped {
                    selector,
                    skipped: e.to_string(),
                });
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let ratio = separation_ratio(&lda.coords, &reps.labels, reps.num_classes());
        let probe = train_probe(&reps, &probe_cfg)?;
        let rows = (0..reps.len()).map(|i| {
            let y = if out_dim > 1 { lda.coords[[i, 1]] } else { 0.0 };
            vec![
                reps.class_names[reps.labels[i]].clone(),
                reps.sample_ids[i].to_string(),
                lda.coords[[i, 0]].to_string(),
                y.to_string(),
            ]
        });
        let name = selector_name(&selector);
        run.output(format!("coords_{name}.csv"), csv_bytes(&["task_label", "sample_id", "x", "y"], rows)?);
        summary.push(vec![
            name,
            probe.train_accuracy.to_string(),
            probe.test_accuracy.to_string(),
            ratio.to_string(),
        ]);
        reports.push(Entry::Done(Box::new(SelectorReport {
            selector,
            out_dim,
            lda_eigenvalues: lda.eigenvalues,
            separation_ratio: ratio,
            probe,
        })));
    }
    run.output(
        "probe_summary.csv",
        csv_bytes(&["selector", "train_accuracy", "test_accuracy", "separation_ratio"], summary)?,
    );
    run.output("probe.json", serde_json::to_vec_pretty(&reports)?);
    run.commit()?;
    Ok(())
}
