// SPDX-License-Identifier: MIT OR Apache-2.0

//! Straight-line forward pass over plain vectors, written independently of
//! the library's matrix code. Used as an oracle in tests.

#![allow(dead_code)]

use ivtrace_core::{Model, MlpKind, Positional};

pub struct RefRun {
    /// `[layer - 1][position]`, `L + 1` entries.
    pub residual: Vec<Vec<Vec<f64>>>,
    /// `[position][token]`.
    pub logits: Vec<Vec<f64>>,
}

fn matvec(rows: usize, cols: usize, m: impl Fn(usize, usize) -> f64, x: &[f64]) -> Vec<f64> {
    (0..rows).map(|r| (0..cols).map(|c| m(r, c) * x[c]).sum()).collect()
}

fn rmsnorm(x: &[f64], gain: &[f64], eps: f64) -> Vec<f64> {
    let ms = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    let r = (ms + eps).sqrt();
    x.iter().zip(gain).map(|(v, g)| v / r * g).collect()
}

fn rotate(v: &mut [f64], pos: usize) {
    let dim = v.len();
    for k in 0..dim / 2 {
        let theta = pos as f64 / 10_000f64.powf((2 * k) as f64 / dim as f64);
        let (a, b) = (v[2 * k], v[2 * k + 1]);
        v[2 * k] = a * theta.cos() - b * theta.sin();
        v[2 * k + 1] = a * theta.sin() + b * theta.cos();
    }
}

/// Patches are `(layer, position, vector)`: `X^layer[position]` is replaced
/// before layer `layer` runs.
pub fn reference_forward(model: &Model, tokens: &[usize], patches: &[(usize, usize, Vec<f64>)]) -> RefRun {
    let cfg = model.config();
    let w = model.weights();
    let (d, dh, dp, vocab) = (cfg.model_dim, cfg.head_dim, cfg.mlp_dim, cfg.vocab_size);
    let n = tokens.len();
    let mut x: Vec<Vec<f64>> = tokens.iter().map(|&t| (0..d).map(|r| w.w_e[[r, t]]).collect()).collect();
    let mut residual = Vec::new();
    for (idx, lw) in w.layers.iter().enumerate() {
        for (l, p, v) in patches {
            if *l == idx + 1 {
                x[*p] = v.clone();
            }
        }
        let mut att = vec![vec![0.0; d]; n];
        for h in 0..cfg.num_heads {
            let proj = |m: &ndarray::Array2<f64>, v: &[f64]| matvec(dh, d, |r, c| m[[r, c]], v);
            let mut q: Vec<Vec<f64>> = x.iter().map(|v| proj(&lw.w_q[h], v)).collect();
            let mut k: Vec<Vec<f64>> = x.iter().map(|v| proj(&lw.w_k[h], v)).collect();
            if cfg.positional == Positional::Rotary {
                for (p, (qv, kv)) in q.iter_mut().zip(k.iter_mut()).enumerate() {
                    rotate(qv, p);
                    rotate(kv, p);
                }
            }
            let vals: Vec<Vec<f64>> = x.iter().map(|v| proj(&lw.w_v[h], v)).collect();
            for i in 0..n {
                let scores: Vec<f64> = (0..=i)
                    .map(|j| q[i].iter().zip(&k[j]).map(|(a, b)| a * b).sum::<f64>() / (dh as f64).sqrt())
                    .collect();
                let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
                let z: f64 = exps.iter().sum();
                let mut mixed = vec![0.0; dh];
                for (j, e) in exps.iter().enumerate() {
                    for (m, v) in mixed.iter_mut().zip(&vals[j]) {
                        *m += e / z * v;
                    }
                }
                let out = matvec(d, dh, |r, c| lw.w_o[h][[r, c]], &mixed);
                for (a, o) in att[i].iter_mut().zip(out) {
                    *a += o;
                }
            }
        }
        let mut next = Vec::with_capacity(n);
        for i in 0..n {
            let pre: Vec<f64> = att[i].iter().zip(&x[i]).map(|(a, b)| a + b).collect();
            let mid = rmsnorm(&pre, lw.g_att.as_slice().unwrap(), cfg.norm_eps);
            let z = matvec(dp, d, |r, c| lw.w_1[[r, c]], &mid);
            let hidden: Vec<f64> = match (cfg.mlp_kind, &lw.w_gate) {
                (MlpKind::Gated, Some(wg)) => {
                    let g = matvec(dp, d, |r, c| wg[[r, c]], &mid);
                    g.iter().zip(&z).map(|(g, z)| cfg.activation.apply(*g) * z).collect()
                }
                _ => z.iter().map(|v| cfg.activation.apply(*v)).collect(),
            };
            let mlp = matvec(d, dp, |r, c| lw.w_2[[r, c]], &hidden);
            let sum: Vec<f64> = mid.iter().zip(&mlp).map(|(a, b)| a + b).collect();
            next.push(rmsnorm(&sum, lw.g_mlp.as_slice().unwrap(), cfg.norm_eps));
        }
        residual.push(std::mem::replace(&mut x, next));
    }
    let logits = x.iter().map(|v| matvec(vocab, d, |r, c| w.w_u[[r, c]], v)).collect();
    residual.push(x);
    RefRun { residual, logits }
}

/// Rank by full descending sort; ties placed ahead of the token.
pub fn rank_by_sort(logits: &[f64], token: usize) -> usize {
    let mut order: Vec<usize> = (0..logits.len()).collect();
    order.sort_by(|&a, &b| {
        logits[b]
            .partial_cmp(&logits[a])
            .unwrap()
            .then_with(|| (a == token).cmp(&(b == token)))
    });
    order.iter().position(|&v| v == token).unwrap() + 1
}
