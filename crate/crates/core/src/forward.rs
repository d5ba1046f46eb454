// SPDX-License-Identifier: MIT OR Apache-2.0

//! Forward pass with full intermediate capture.
//!
//! Block `l` maps the residual stream `X^l` to `X^{l+1}`:
//!
//! ```text
//! X_att  = Σ_h A^h · X · W_OV[h]ᵀ             (causal softmax attention)
//! X_mid  = RMSNorm_att(X_att + X)
//! X_mlp  = W_2 · act(W_1 · X_mid)              (or act(W_gate·X_mid) ⊙ W_1·X_mid)
//! X^{l+1} = RMSNorm_mlp(X_mid + X_mlp)
//! ```
//!
//! with `X^1` the embedding columns and logits `W_U · X^{L+1}`.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};

use crate::config::{MlpKind, Positional};
use crate::error::{Error, Result};
use crate::model::Model;

const ROTARY_BASE: f64 = 10_000.0;

/// Replace the residual `X^layer` at `position` before block `layer` runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualPatch {
    /// 1-based layer whose input residual is overwritten.
    pub layer: usize,
    pub position: usize,
    pub vector: Array1<f64>,
}

/// A set of residual-stream replacements applied within one forward pass.
///
/// Patches on different layers are applied as the computation reaches each
/// layer, so a multi-layer intervention is simultaneous.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Intervention {
    pub patches: Vec<ResidualPatch>,
}

impl Intervention {
    pub fn none() -> Self {
        Intervention::default()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn push(&mut self, layer: usize, position: usize, vector: Array1<f64>) {
        self.patches.push(ResidualPatch {
            layer,
            position,
            vector,
        });
    }

    fn validate(&self, model: &Model, seq_len: usize) -> Result<()> {
        let d = model.config().model_dim;
        for p in &self.patches {
            model.check_layer(p.layer)?;
            if p.position >= seq_len {
                return Err(Error::index("position", p.position, format!("0..{seq_len}")));
            }
            if p.vector.len() != d {
                return Err(Error::shape(
                    format!("patch vector for layer {}", p.layer),
                    &[d],
                    &[p.vector.len()],
                ));
            }
        }
        Ok(())
    }
}

/// Every intermediate of one forward pass.
///
/// Per-layer vectors are indexed `[layer - 1]`; rows of each matrix are
/// token positions. `residual` has `L + 1` entries: `residual[k]` is `X^{k+1}`,
/// so the last entry is the final residual fed to the unembedding.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub tokens: Vec<usize>,
    pub residual: Vec<Array2<f64>>,
    pub attn_out: Vec<Array2<f64>>,
    pub mid: Vec<Array2<f64>>,
    pub mlp_out: Vec<Array2<f64>>,
    /// `[layer - 1][head]`, each `n × n` with row `i` the weights of query `i`.
    pub attention: Vec<Vec<Array2<f64>>>,
    /// `W_1 · X_mid`, `n × d'`.
    pub mlp_preact: Vec<Array2<f64>>,
    /// `W_gate · X_mid` for gated MLPs.
    pub gate_preact: Option<Vec<Array2<f64>>>,
    /// RMS of the attention-block norm input, per position.
    pub rms_att: Vec<Array1<f64>>,
    /// RMS of the MLP-block norm input, per position.
    pub rms_mlp: Vec<Array1<f64>>,
    /// `n × |V|`.
    pub logits: Array2<f64>,
}

impl ForwardTrace {
    pub fn seq_len(&self) -> usize {
        self.tokens.len()
    }

    pub fn num_layers(&self) -> usize {
        self.attn_out.len()
    }

    /// Residual stream `X^layer` for `layer` in `1..=L+1`.
    pub fn resid(&self, layer: usize) -> ArrayView2<'_, f64> {
        self.residual[layer - 1].view()
    }

    /// Residual `X^layer` at one position.
    pub fn resid_at(&self, layer: usize, position: usize) -> ArrayView1<'_, f64> {
        self.residual[layer - 1].row(position)
    }

    pub fn final_residual(&self) -> ArrayView2<'_, f64> {
        self.residual[self.residual.len() - 1].view()
    }

    /// Attention weights of `head` in `layer` (1-based) for query `query`.
    pub fn attn_row(&self, layer: usize, head: usize, query: usize) -> ArrayView1<'_, f64> {
        self.attention[layer - 1][head].row(query)
    }

    pub fn logits_at(&self, position: usize) -> ArrayView1<'_, f64> {
        self.logits.row(position)
    }

    pub fn last_logits(&self) -> ArrayView1<'_, f64> {
        self.logits.row(self.tokens.len() - 1)
    }
}

fn rmsnorm_rows(x: &Array2<f64>, gain: &Array1<f64>, eps: f64) -> (Array2<f64>, Array1<f64>) {
    let d = x.ncols() as f64;
    let rms: Array1<f64> = x
        .rows()
        .into_iter()
        .map(|r| (r.dot(&r) / d + eps).sqrt())
        .collect();
    let mut out = x.clone();
    for (mut row, &r) in out.rows_mut().into_iter().zip(rms.iter()) {
        row.zip_mut_with(gain, |v, &g| *v = *v * g / r);
    }
    (out, rms)
}

/// Rotate consecutive pairs `(2k, 2k+1)` of each row by `pos · base^{-2k/dim}`.
pub(crate) fn apply_rotary(m: &mut Array2<f64>) {
    let dim = m.ncols();
    for (pos, mut row) in m.rows_mut().into_iter().enumerate() {
        for k in 0..dim / 2 {
            let theta = pos as f64 * ROTARY_BASE.powf(-2.0 * k as f64 / dim as f64);
            let (sin, cos) = theta.sin_cos();
            let (a, b) = (row[2 * k], row[2 * k + 1]);
            row[2 * k] = a * cos - b * sin;
            row[2 * k + 1] = a * sin + b * cos;
        }
    }
}

/// Causal softmax attention pattern for one head.
fn attention_pattern(q: &Array2<f64>, k: &Array2<f64>, scale: f64) -> Array2<f64> {
    let n = q.nrows();
    let scores = q.dot(&k.t());
    let mut pattern = Array2::zeros((n, n));
    for i in 0..n {
        let row = scores.slice(s![i, ..=i]);
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v * scale));
        let mut denom = 0.0;
        for j in 0..=i {
            let e = (scores[[i, j]] * scale - max).exp();
            pattern[[i, j]] = e;
            denom += e;
        }
        pattern.slice_mut(s![i, ..=i]).mapv_inplace(|e| e / denom);
    }
    pattern
}

/// Run the model on `tokens`, applying `intervention`, and capture everything.
pub fn forward(model: &Model, tokens: &[usize], intervention: &Intervention) -> Result<ForwardTrace> {
    let cfg = model.config();
    if tokens.is_empty() {
        return Err(Error::Empty("token sequence"));
    }
    let n = tokens.len();
    intervention.validate(model, n)?;

    let w = model.weights();
    let mut x = Array2::zeros((n, cfg.model_dim));
    for (i, &t) in tokens.iter().enumerate() {
        x.row_mut(i).assign(&model.embed(t)?);
    }

    let num_layers = cfg.num_layers;
    let mut residual = Vec::with_capacity(num_layers + 1);
    let mut attn_out = Vec::with_capacity(num_layers);
    let mut mid_all = Vec::with_capacity(num_layers);
    let mut mlp_out = Vec::with_capacity(num_layers);
    let mut attention = Vec::with_capacity(num_layers);
    let mut mlp_preact = Vec::with_capacity(num_layers);
    let mut gate_preact = (cfg.mlp_kind == MlpKind::Gated).then(|| Vec::with_capacity(num_layers));
    let mut rms_att = Vec::with_capacity(num_layers);
    let mut rms_mlp = Vec::with_capacity(num_layers);
    let scale = 1.0 / (cfg.head_dim as f64).sqrt();

    for (idx, lw) in w.layers.iter().enumerate() {
        let layer = idx + 1;
        for p in intervention.patches.iter().filter(|p| p.layer == layer) {
            x.row_mut(p.position).assign(&p.vector);
        }

        let mut att = Array2::zeros((n, cfg.model_dim));
        let mut patterns = Vec::with_capacity(cfg.num_heads);
        for h in 0..cfg.num_heads {
            let mut q = x.dot(&lw.w_q[h].t());
            let mut k = x.dot(&lw.w_k[h].t());
            if cfg.positional == Positional::Rotary {
                apply_rotary(&mut q);
                apply_rotary(&mut k);
            }
            let pattern = attention_pattern(&q, &k, scale);
            let v = x.dot(&lw.w_v[h].t());
            att += &pattern.dot(&v).dot(&lw.w_o[h].t());
            patterns.push(pattern);
        }

        let (mid, r_att) = rmsnorm_rows(&(&att + &x), &lw.g_att, cfg.norm_eps);
        let z = mid.dot(&lw.w_1.t());
        let act = match (&lw.w_gate, gate_preact.as_mut()) {
            (Some(wg), Some(gates)) => {
                let g = mid.dot(&wg.t());
                let act = g.mapv(|v| cfg.activation.apply(v)) * &z;
                gates.push(g);
                act
            }
            _ => z.mapv(|v| cfg.activation.apply(v)),
        };
        let mlp = act.dot(&lw.w_2.t());
        let (next, r_mlp) = rmsnorm_rows(&(&mid + &mlp), &lw.g_mlp, cfg.norm_eps);

        residual.push(std::mem::replace(&mut x, next));
        attn_out.push(att);
        mid_all.push(mid);
        mlp_out.push(mlp);
        attention.push(patterns);
        mlp_preact.push(z);
        rms_att.push(r_att);
        rms_mlp.push(r_mlp);
    }

    let logits = x.dot(&w.w_u.t());
    residual.push(x);

    Ok(ForwardTrace {
        tokens: tokens.to_vec(),
        residual,
        attn_out,
        mid: mid_all,
        mlp_out,
        attention,
        mlp_preact,
        gate_preact,
        rms_att,
        rms_mlp,
        logits,
    })
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(v: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Greedy next-token prediction at the last position.
pub fn greedy_next(trace: &ForwardTrace) -> usize {
    argmax(trace.last_logits())
}
