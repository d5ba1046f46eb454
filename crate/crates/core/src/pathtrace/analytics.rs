// SPDX-License-Identifier: MIT OR Apache-2.0

//! Aggregates over kept paths: per-position path counts and per-head
//! activity on paths emitted from the last instruction token.

use serde::{Deserialize, Serialize};

use super::enumerate::PathRecord;

/// Kept paths of one prompt.
#[derive(Debug, Clone, Copy)]
pub struct SamplePaths<'a> {
    pub seq_len: usize,
    pub t_inst: usize,
    pub paths: &'a [PathRecord],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenContribution {
    pub token_pos: usize,
    /// Mean count over the samples long enough to have this position.
    pub mean_count: f64,
    pub total_count: usize,
    pub n_samples: usize,
}

pub fn path_contribution_by_token(samples: &[SamplePaths<'_>]) -> Vec<TokenContribution> {
    let max_len = samples.iter().map(|s| s.seq_len).max().unwrap_or(0);
    let mut totals = vec![0usize; max_len];
    let mut present = vec![0usize; max_len];
    for s in samples {
        for p in s.paths {
            totals[p.source_pos] += 1;
        }
        for slot in present.iter_mut().take(s.seq_len) {
            *slot += 1;
        }
    }
    (0..max_len)
        .map(|pos| TokenContribution {
            token_pos: pos,
            mean_count: totals[pos] as f64 / present[pos] as f64,
            total_count: totals[pos],
            n_samples: present[pos],
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadActivity {
    /// `[layer - 1][head]`, fraction of samples in which the head is on at
    /// least one kept path from `t_inst`.
    pub fractions: Vec<Vec<f64>>,
    pub n_samples: usize,
    /// Kept paths from `t_inst`, over all samples.
    pub n_paths: usize,
    /// Set when there were no such paths; `fractions` is then all zero.
    pub empty: bool,
}

pub fn head_activity(samples: &[SamplePaths<'_>], num_layers: usize, num_heads: usize) -> HeadActivity {
    let mut counts = vec![vec![0usize; num_heads]; num_layers];
    let mut n_paths = 0;
    for s in samples {
        let mut used = vec![vec![false; num_heads]; num_layers];
        for p in s.paths.iter().filter(|p| p.source_pos == s.t_inst) {
            n_paths += 1;
            for (layer, head) in p.heads() {
                used[layer - 1][head] = true;
            }
        }
        for (c, u) in counts.iter_mut().flatten().zip(used.iter().flatten()) {
            *c += usize::from(*u);
        }
    }
    let denom = samples.len().max(1) as f64;
    HeadActivity {
        fractions: counts
            .iter()
            .map(|row| row.iter().map(|&c| c as f64 / denom).collect())
            .collect(),
        n_samples: samples.len(),
        n_paths,
        empty: n_paths == 0,
    }
}
