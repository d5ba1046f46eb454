// SPDX-License-Identifier: MIT OR Apache-2.0

//! Causal mediation by residual-stream patching.
//!
//! For a record `[T^inst T^q]` with answer `a`:
//!
//! 1. source run on `[T^inst T^q]`, capturing `X^l` at `t_inst`;
//! 2. target run on `[<s> T^q]`;
//! 3. patched run on `[<s> T^q]` with `X^l` at the filler position replaced by
//!    the captured source vectors for every `l` in the layer set.
//!
//! Effects are measured on the answer token at the final position:
//! reciprocal-rank difference and raw logit difference (patched − target).

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{forward, ForwardTrace, Intervention};
use crate::metrics::token_rank;
use crate::model::Model;
use crate::tasks::{PromptRecord, TaskSet};

/// Where the filler sits in the target prompt.
pub const FILLER_POSITION: usize = 0;

/// A residual-stream intervention: which layers, from where, to where.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSpec {
    pub layers: BTreeSet<usize>,
    pub source_position: usize,
    pub target_position: usize,
    pub source_vectors: BTreeMap<usize, Array1<f64>>,
}

impl PatchSpec {
    /// Capture `X^l[source_position]` from `source` for each layer.
    pub fn capture(
        source: &ForwardTrace,
        layers: &BTreeSet<usize>,
        source_position: usize,
        target_position: usize,
    ) -> Result<Self> {
        let num_layers = source.num_layers();
        if layers.is_empty() {
            return Err(Error::Empty("patch layer set"));
        }
        if source_position >= source.seq_len() {
            return Err(Error::index("position", source_position, format!("0..{}", source.seq_len())));
        }
        let mut source_vectors = BTreeMap::new();
        for &l in layers {
            if l == 0 || l > num_layers {
                return Err(Error::index("layer", l, format!("1..={num_layers}")));
            }
            source_vectors.insert(l, source.resid_at(l, source_position).to_owned());
        }
        Ok(PatchSpec {
            layers: layers.clone(),
            source_position,
            target_position,
            source_vectors,
        })
    }

    pub fn to_intervention(&self) -> Intervention {
        let mut iv = Intervention::none();
        for (&l, v) in &self.source_vectors {
            iv.push(l, self.target_position, v.clone());
        }
        iv
    }
}

/// Effect of one patched run on the answer token.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchResult {
    /// `1/rank_patched − 1/rank_target`, in `[−1, 1]`.
    pub rank_effect: f64,
    /// `logit_patched − logit_target`.
    pub logit_effect: f64,
    pub rank_target: usize,
    pub rank_patched: usize,
    pub logit_target: f64,
    pub logit_patched: f64,
}

impl PatchResult {
    pub fn rr_target(&self) -> f64 {
        1.0 / self.rank_target as f64
    }

    pub fn rr_patched(&self) -> f64 {
        1.0 / self.rank_patched as f64
    }

    fn from_traces(target: &ForwardTrace, patched: &ForwardTrace, answer: usize) -> Self {
        let (lt, lp) = (target.last_logits(), patched.last_logits());
        let rank_target = token_rank(lt, answer);
        let rank_patched = token_rank(lp, answer);
        PatchResult {
            rank_effect: 1.0 / rank_patched as f64 - 1.0 / rank_target as f64,
            logit_effect: lp[answer] - lt[answer],
            rank_target,
            rank_patched,
            logit_target: lt[answer],
            logit_patched: lp[answer],
        }
    }
}

/// Options shared by all mediation runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MediationOptions {
    pub filler_id: usize,
    /// Longest admissible full prompt, if the model has a context limit.
    pub max_context: Option<usize>,
}

impl MediationOptions {
    pub fn new(filler_id: usize) -> Self {
        MediationOptions {
            filler_id,
            max_context: None,
        }
    }
}

/// Source and target traces for one record, reusable across layer sets.
#[derive(Debug, Clone)]
pub struct Mediation<'a> {
    model: &'a Model,
    record: &'a PromptRecord,
    pub source: ForwardTrace,
    pub target: ForwardTrace,
}

impl<'a> Mediation<'a> {
    pub fn new(model: &'a Model, record: &'a PromptRecord, opts: MediationOptions) -> Result<Self> {
        let full = record.full_tokens();
        if let Some(max) = opts.max_context {
            if full.len() > max {
                return Err(Error::index("prompt length", full.len(), format!("1..={max}")));
            }
        }
        let source = forward(model, &full, &Intervention::none())?;
        let target = forward(model, &record.target_tokens(opts.filler_id), &Intervention::none())?;
        Ok(Mediation {
            model,
            record,
            source,
            target,
        })
    }

    pub fn spec(&self, layers: &BTreeSet<usize>) -> Result<PatchSpec> {
        PatchSpec::capture(&self.source, layers, self.record.t_inst_index, FILLER_POSITION)
    }

    /// Patched trace for `layers`.
    pub fn patched_trace(&self, layers: &BTreeSet<usize>) -> Result<ForwardTrace> {
        let spec = self.spec(layers)?;
        forward(self.model, &self.target.tokens, &spec.to_intervention())
    }

    pub fn patch(&self, layers: &BTreeSet<usize>) -> Result<PatchResult> {
        let patched = self.patched_trace(layers)?;
        Ok(PatchResult::from_traces(&self.target, &patched, self.record.answer_token))
    }
}

/// Run the three-pass mediation protocol for one record and layer set.
pub fn run_mediation(
    model: &Model,
    record: &PromptRecord,
    layers: &BTreeSet<usize>,
    opts: MediationOptions,
) -> Result<PatchResult> {
    Mediation::new(model, record, opts)?.patch(layers)
}

/// Mean effects of patching layers `(layer_i, layer_j)`, `layer_i <= layer_j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub layer_i: usize,
    pub layer_j: usize,
    pub mean_rank_effect: f64,
    pub mean_logit_effect: f64,
    pub n_samples: usize,
}

/// One raw score, kept for the superadditivity tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub task: String,
    /// Index of the sample within its task.
    pub sample: usize,
    pub layer_i: usize,
    pub layer_j: usize,
    #[serde(flatten)]
    pub result: PatchResult,
}

/// Grid of one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskGrid {
    pub task: String,
    pub num_layers: usize,
    /// Cells in `(i, j)` lexicographic order.
    pub cells: Vec<GridCell>,
    pub samples: Vec<SampleScore>,
}

/// Min-max normalized cell values within one task grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedCell {
    pub layer_i: usize,
    pub layer_j: usize,
    pub norm_rank: f64,
    pub norm_logit: f64,
}

impl TaskGrid {
    /// Average raw scores into cells, one per distinct layer pair in
    /// lexicographic order. Sums run in `samples` order.
    pub fn from_samples(task: &str, num_layers: usize, samples: Vec<SampleScore>) -> Self {
        let pairs: BTreeSet<(usize, usize)> = samples.iter().map(|s| (s.layer_i, s.layer_j)).collect();
        let cells = pairs
            .into_iter()
            .map(|(i, j)| {
                let mut n = 0;
                let (mut rank, mut logit) = (0.0, 0.0);
                for s in samples.iter().filter(|s| s.layer_i == i && s.layer_j == j) {
                    n += 1;
                    rank += s.result.rank_effect;
                    logit += s.result.logit_effect;
                }
                GridCell {
                    layer_i: i,
                    layer_j: j,
                    mean_rank_effect: rank / n as f64,
                    mean_logit_effect: logit / n as f64,
                    n_samples: n,
                }
            })
            .collect();
        TaskGrid {
            task: task.to_string(),
            num_layers,
            cells,
            samples,
        }
    }

    pub fn cell(&self, i: usize, j: usize) -> Option<&GridCell> {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.cells.iter().find(|c| c.layer_i == i && c.layer_j == j)
    }

    /// Per-grid min-max scaling to `[0, 1]`; a constant grid maps to 0.
    pub fn normalized(&self) -> Vec<NormalizedCell> {
        fn scale(values: &[f64]) -> Vec<f64> {
            let min = values.iter().copied().fold(f64::INFINITY, f64::min);
            let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let span = max - min;
            values
                .iter()
                .map(|v| if span > 0.0 { (v - min) / span } else { 0.0 })
                .collect()
        }
        let ranks: Vec<f64> = self.cells.iter().map(|c| c.mean_rank_effect).collect();
        let logits: Vec<f64> = self.cells.iter().map(|c| c.mean_logit_effect).collect();
        self.cells
            .iter()
            .zip(scale(&ranks).into_iter().zip(scale(&logits)))
            .map(|(c, (norm_rank, norm_logit))| NormalizedCell {
                layer_i: c.layer_i,
                layer_j: c.layer_j,
                norm_rank,
                norm_logit,
            })
            .collect()
    }

    /// Raw scores of one sample keyed by layer pair.
    pub fn sample_scores(&self) -> BTreeMap<usize, BTreeMap<(usize, usize), PatchResult>> {
        let mut out: BTreeMap<usize, BTreeMap<(usize, usize), PatchResult>> = BTreeMap::new();
        for s in &self.samples {
            out.entry(s.sample)
                .or_default()
                .insert((s.layer_i, s.layer_j), s.result);
        }
        out
    }
}

/// Grid scans for every task, in task-label order of first appearance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub tasks: Vec<TaskGrid>,
}

impl GridResult {
    pub fn task(&self, label: &str) -> Option<&TaskGrid> {
        self.tasks.iter().find(|t| t.task == label)
    }
}

/// All layer pairs `i <= j` in lexicographic order; only the diagonal when
/// `max_pair_order == 1`.
pub fn layer_pairs(num_layers: usize, max_pair_order: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for i in 1..=num_layers {
        for j in i..=num_layers {
            if i == j || max_pair_order >= 2 {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// Patch every layer pair for every record and average per task.
pub fn grid_scan(
    model: &Model,
    tasks: &TaskSet,
    max_pair_order: usize,
    opts: MediationOptions,
) -> Result<GridResult> {
    if tasks.is_empty() {
        return Err(Error::Empty("task set"));
    }
    if !(1..=2).contains(&max_pair_order) {
        return Err(Error::Config(format!("max_pair_order must be 1 or 2, got {max_pair_order}")));
    }
    let pairs = layer_pairs(model.config().num_layers, max_pair_order);
    let contexts = tasks
        .records
        .par_iter()
        .map(|r| Mediation::new(model, r, opts))
        .collect::<Result<Vec<_>>>()?;
    let items: Vec<(usize, (usize, usize))> = (0..contexts.len())
        .flat_map(|r| pairs.iter().map(move |&p| (r, p)))
        .collect();
    let results = items
        .par_iter()
        .map(|&(r, (i, j))| contexts[r].patch(&BTreeSet::from([i, j])))
        .collect::<Result<Vec<_>>>()?;

    let mut sample_index: BTreeMap<&str, usize> = BTreeMap::new();
    let sample_of: Vec<usize> = tasks
        .records
        .iter()
        .map(|r| {
            let slot = sample_index.entry(r.task_label.as_str()).or_insert(0);
            *slot += 1;
            *slot - 1
        })
        .collect();

    let mut grids = Vec::new();
    for label in tasks.labels() {
        let mut samples = Vec::new();
        for (&(r, (i, j)), result) in items.iter().zip(&results) {
            if tasks.records[r].task_label == *label {
                samples.push(SampleScore {
                    task: label.clone(),
                    sample: sample_of[r],
                    layer_i: i,
                    layer_j: j,
                    result: *result,
                });
            }
        }
        if samples.is_empty() {
            continue;
        }
        grids.push(TaskGrid::from_samples(label, model.config().num_layers, samples));
    }
    Ok(GridResult { tasks: grids })
}
