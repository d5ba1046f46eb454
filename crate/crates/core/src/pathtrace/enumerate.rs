// SPDX-License-Identifier: MIT OR Apache-2.0

//! Token-to-token path enumeration through the linearized network.
//!
//! At each layer a path either stays on the residual or follows one head
//! edge from the head's argmax source into the current position, then either
//! passes through the MLP map `V` or bypasses it. Counted backward from the
//! final position there are `2(H+1)` options per layer. Paths carry a
//! `d`-vector starting at the source token's embedding; the full map is
//! never materialized.

use std::fmt;

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::surrogates::Surrogates;
use crate::error::{Error, Result};
use crate::forward::ForwardTrace;
use crate::metrics::token_rank;
use crate::model::Model;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Edge {
    Residual,
    /// Head edge from `source` into the step's destination position.
    Head { head: usize, source: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MlpBranch {
    /// Takes the `V` term.
    Through,
    /// Takes the identity term.
    Bypass,
}

/// One layer of a path. Serialized as `[layer, "R" | "H:h:j", "T" | "B"]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "(usize, String, String)", try_from = "(usize, String, String)")]
pub struct PathStep {
    pub layer: usize,
    pub edge: Edge,
    pub mlp: MlpBranch,
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Edge::Residual => f.write_str("R"),
            Edge::Head { head, source } => write!(f, "H:{head}:{source}"),
        }
    }
}

impl From<PathStep> for (usize, String, String) {
    fn from(s: PathStep) -> Self {
        let mlp = match s.mlp {
            MlpBranch::Through => "T",
            MlpBranch::Bypass => "B",
        };
        (s.layer, s.edge.to_string(), mlp.to_string())
    }
}

impl TryFrom<(usize, String, String)> for PathStep {
    type Error = String;

    fn try_from((layer, edge, mlp): (usize, String, String)) -> std::result::Result<Self, String> {
        let edge = if edge == "R" {
            Edge::Residual
        } else {
            let parts: Vec<&str> = edge.split(':').collect();
            match parts.as_slice() {
                ["H", h, j] => Edge::Head {
                    head: h.parse().map_err(|_| format!("bad head in '{edge}'"))?,
                    source: j.parse().map_err(|_| format!("bad source in '{edge}'"))?,
                },
                _ => return Err(format!("bad edge '{edge}'")),
            }
        };
        let mlp = match mlp.as_str() {
            "T" => MlpBranch::Through,
            "B" => MlpBranch::Bypass,
            _ => return Err(format!("bad mlp branch '{mlp}'")),
        };
        Ok(PathStep { layer, edge, mlp })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub source_pos: usize,
    pub choices: Vec<PathStep>,
    /// Position after each layer; the last entry is the final position.
    pub positions: Vec<usize>,
    /// Product of the attention weights along head edges.
    pub attention_weight: f64,
    /// 1-based rank of the answer token in this path's logits.
    pub answer_rank: usize,
    pub top_logit_tokens: Vec<usize>,
    /// Output contribution in the residual basis.
    #[serde(skip)]
    pub vector: Array1<f64>,
}

impl PathRecord {
    /// `(layer, head)` pairs of the head edges on this path.
    pub fn heads(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.choices.iter().filter_map(|s| match s.edge {
            Edge::Head { head, .. } => Some((s.layer, head)),
            Edge::Residual => None,
        })
    }
}

/// Which head edges are followed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EdgePolicy {
    /// Only from each head's argmax source (lowest index on ties).
    #[default]
    Argmax,
    /// From every causal source; the paths then sum to the final residual.
    All,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnumerateOptions {
    /// Keep paths whose answer rank is at most this (fewer than this many
    /// tokens strictly ahead of the answer).
    pub rank_threshold: usize,
    pub policy: EdgePolicy,
    /// Restrict to these source positions.
    pub sources: Option<Vec<usize>>,
    pub top_k: usize,
}

impl Default for EnumerateOptions {
    fn default() -> Self {
        EnumerateOptions {
            rank_threshold: 100,
            policy: EdgePolicy::Argmax,
            sources: None,
            top_k: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Enumeration {
    /// Kept paths, by source then in depth-first order.
    pub paths: Vec<PathRecord>,
    /// Terminating paths visited before rank filtering.
    pub enumerated: usize,
}

struct Walker<'a> {
    trace: &'a ForwardTrace,
    surrogates: &'a Surrogates,
    model: &'a Model,
    w_ov: Vec<Vec<Array2<f64>>>,
    /// `[layer - 1][head][dest]` argmax source.
    argmax_src: Vec<Vec<Vec<usize>>>,
    /// `[layer - 1][pos]`: can a path at `X^layer[pos]` reach the final position.
    reach: Vec<Vec<bool>>,
    answer: usize,
    opts: &'a EnumerateOptions,
}

impl Walker<'_> {
    fn edge_weight(&self, layer: usize, head: usize, from: usize, to: usize) -> Option<f64> {
        if from > to {
            return None;
        }
        let a = self.trace.attention[layer - 1][head][[to, from]];
        match self.opts.policy {
            EdgePolicy::Argmax if self.argmax_src[layer - 1][head][to] == from => Some(a),
            EdgePolicy::All if a != 0.0 => Some(a),
            _ => None,
        }
    }

    fn finish(&self, source: usize, steps: &[(PathStep, usize)], weight: f64, v: Array1<f64>, out: &mut (Vec<PathRecord>, usize)) {
        let logits = self.model.weights().w_u.dot(&v);
        let rank = token_rank(logits.view(), self.answer);
        out.1 += 1;
        if rank <= self.opts.rank_threshold {
            let mut order: Vec<usize> = (0..logits.len()).collect();
            order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
            order.truncate(self.opts.top_k);
            out.0.push(PathRecord {
                source_pos: source,
                choices: steps.iter().map(|s| s.0).collect(),
                positions: steps.iter().map(|s| s.1).collect(),
                attention_weight: weight,
                answer_rank: rank,
                top_logit_tokens: order,
                vector: v,
            });
        }
    }

    fn mlp_step(&self, layer: usize, dest: usize, v: Array1<f64>) -> [(MlpBranch, Array1<f64>); 2] {
        let u = v * &self.surrogates.u_att[layer - 1].row(dest);
        let u_mlp = self.surrogates.u_mlp[layer - 1].row(dest);
        let through = self.surrogates.apply_v(self.model, layer, dest, u.view()) * &u_mlp;
        [(MlpBranch::Through, through), (MlpBranch::Bypass, u * &u_mlp)]
    }

    #[allow(clippy::too_many_arguments)]
    fn walk(
        &self,
        source: usize,
        layer: usize,
        pos: usize,
        v: Array1<f64>,
        weight: f64,
        steps: &mut Vec<(PathStep, usize)>,
        out: &mut (Vec<PathRecord>, usize),
    ) {
        let num_layers = self.reach.len() - 1;
        if layer > num_layers {
            self.finish(source, steps, weight, v, out);
            return;
        }
        let n = self.trace.seq_len();
        let next_reach = &self.reach[layer];
        let mut moves: Vec<(Edge, usize, f64, Array1<f64>)> = Vec::new();
        if next_reach[pos] {
            moves.push((Edge::Residual, pos, 1.0, v.clone()));
        }
        for (h, w_ov) in self.w_ov[layer - 1].iter().enumerate() {
            let mut moved: Option<Array1<f64>> = None;
            for dest in pos..n {
                if !next_reach[dest] {
                    continue;
                }
                if let Some(a) = self.edge_weight(layer, h, pos, dest) {
                    let base = moved.get_or_insert_with(|| w_ov.dot(&v));
                    moves.push((Edge::Head { head: h, source: pos }, dest, a, &*base * a));
                }
            }
        }
        for (edge, dest, a, moved) in moves {
            for (mlp, next) in self.mlp_step(layer, dest, moved) {
                steps.push((PathStep { layer, edge, mlp }, dest));
                self.walk(source, layer + 1, dest, next, weight * a, steps, out);
                steps.pop();
            }
        }
    }
}

/// Enumerate paths ending at the final position and keep those whose
/// answer-token rank passes the threshold.
pub fn enumerate_paths(
    trace: &ForwardTrace,
    surrogates: &Surrogates,
    model: &Model,
    answer_token: usize,
    opts: &EnumerateOptions,
) -> Result<Enumeration> {
    let cfg = model.config();
    let (num_layers, n) = (cfg.num_layers, trace.seq_len());
    if answer_token >= cfg.vocab_size {
        return Err(Error::TokenOutOfRange {
            id: answer_token,
            vocab_size: cfg.vocab_size,
        });
    }
    if opts.rank_threshold == 0 {
        return Err(Error::Config("rank threshold must be at least 1".into()));
    }
    if surrogates.num_layers() != num_layers || trace.num_layers() != num_layers {
        return Err(Error::MissingIntermediate("surrogates for every layer"));
    }
    if let Some(bad) = opts.sources.iter().flatten().find(|&&s| s >= n) {
        return Err(Error::index("source position", *bad, format!("0..{n}")));
    }

    let argmax_src: Vec<Vec<Vec<usize>>> = trace
        .attention
        .iter()
        .map(|heads| {
            heads
                .iter()
                .map(|a| {
                    (0..n)
                        .map(|i| {
                            let mut best = 0;
                            for j in 1..=i {
                                if a[[i, j]] > a[[i, best]] {
                                    best = j;
                                }
                            }
                            best
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let mut walker = Walker {
        trace,
        surrogates,
        model,
        w_ov: model.fold_ov_all(),
        argmax_src,
        reach: Vec::new(),
        answer: answer_token,
        opts,
    };

    let mut reach = vec![vec![false; n]; num_layers + 1];
    reach[num_layers][n - 1] = true;
    for layer in (1..=num_layers).rev() {
        for dest in 0..n {
            if !reach[layer][dest] {
                continue;
            }
            reach[layer - 1][dest] = true;
            for h in 0..cfg.num_heads {
                for src in 0..=dest {
                    if walker.edge_weight(layer, h, src, dest).is_some() {
                        reach[layer - 1][src] = true;
                    }
                }
            }
        }
    }
    walker.reach = reach;

    let sources: Vec<usize> = match &opts.sources {
        Some(s) => s.clone(),
        None => (0..n).collect(),
    };
    let per_source: Vec<(Vec<PathRecord>, usize)> = sources
        .par_iter()
        .map(|&s| {
            let mut out = (Vec::new(), 0);
            if walker.reach[0][s] {
                let v = trace.resid_at(1, s).to_owned();
                walker.walk(s, 1, s, v, 1.0, &mut Vec::with_capacity(num_layers), &mut out);
            }
            out
        })
        .collect();
    let mut result = Enumeration {
        paths: Vec::new(),
        enumerated: 0,
    };
    for (paths, count) in per_source {
        result.paths.extend(paths);
        result.enumerated += count;
    }
    Ok(result)
}
