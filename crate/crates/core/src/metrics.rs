// SPDX-License-Identifier: MIT OR Apache-2.0

//! Rank of a token within a logit vector.

use ndarray::ArrayView1;

/// `1 + #{v != token : logits[v] >= logits[token]}`. Ties count against the
/// token, so a rank of 1 means a strict maximum.
pub fn token_rank(logits: ArrayView1<'_, f64>, token: usize) -> usize {
    let target = logits[token];
    1 + logits
        .iter()
        .enumerate()
        .filter(|&(v, &x)| v != token && x >= target)
        .count()
}

pub fn reciprocal_rank(logits: ArrayView1<'_, f64>, token: usize) -> f64 {
    1.0 / token_rank(logits, token) as f64
}
