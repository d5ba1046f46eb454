// SPDX-License-Identifier: MIT OR Apache-2.0

//! Diagonal surrogates that make each layer linear at a traced point.
//!
//! With `D` the MLP gating diagonal and `U` the norm diagonals,
//! `X^{l+1}_i = U_mlp (I + V) U_att (X^l_i + Σ_h Σ_j a^h_ij W_OV[h] X^l_j)`
//! where `V = W_2 D W_1`. Everything is read from the trace, so the identity
//! is exact up to rounding.

use ndarray::{Array1, Array2, ArrayView1};

use crate::config::MlpKind;
use crate::error::{Error, Result};
use crate::forward::ForwardTrace;
use crate::model::Model;

/// Per-layer, per-position diagonals, indexed `[layer - 1][position]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Surrogates {
    /// `n × d'` per layer.
    pub d: Vec<Array2<f64>>,
    /// `n × d` per layer: `g_att / rms_att`.
    pub u_att: Vec<Array2<f64>>,
    /// `n × d` per layer: `g_mlp / rms_mlp`.
    pub u_mlp: Vec<Array2<f64>>,
}

impl Surrogates {
    pub fn num_layers(&self) -> usize {
        self.d.len()
    }

    /// `V v = W_2 (D ⊙ W_1 v)` at `(layer, position)`.
    pub fn apply_v(&self, model: &Model, layer: usize, position: usize, v: ArrayView1<'_, f64>) -> Array1<f64> {
        let lw = &model.weights().layers[layer - 1];
        let z = lw.w_1.dot(&v) * &self.d[layer - 1].row(position);
        lw.w_2.dot(&z)
    }
}

fn diag_from_gain(gain: &Array1<f64>, rms: &Array1<f64>) -> Array2<f64> {
    Array2::from_shape_fn((rms.len(), gain.len()), |(i, k)| gain[k] / rms[i])
}

pub fn build_surrogates(trace: &ForwardTrace, model: &Model) -> Result<Surrogates> {
    let cfg = model.config();
    let layers = cfg.num_layers;
    if trace.mlp_preact.len() != layers || trace.rms_att.len() != layers || trace.rms_mlp.len() != layers {
        return Err(Error::MissingIntermediate("per-layer pre-activations or norm statistics"));
    }
    let gates = match cfg.mlp_kind {
        MlpKind::Gated => Some(
            trace
                .gate_preact
                .as_ref()
                .filter(|g| g.len() == layers)
                .ok_or(Error::MissingIntermediate("gate pre-activations"))?,
        ),
        MlpKind::Plain => None,
    };
    let act = cfg.activation;
    let mut d = Vec::with_capacity(layers);
    let mut u_att = Vec::with_capacity(layers);
    let mut u_mlp = Vec::with_capacity(layers);
    for (idx, lw) in model.weights().layers.iter().enumerate() {
        d.push(match gates {
            Some(g) => g[idx].mapv(|v| act.apply(v)),
            None => trace.mlp_preact[idx].mapv(|z| if z == 0.0 { 0.0 } else { act.apply(z) / z }),
        });
        u_att.push(diag_from_gain(&lw.g_att, &trace.rms_att[idx]));
        u_mlp.push(diag_from_gain(&lw.g_mlp, &trace.rms_mlp[idx]));
    }
    Ok(Surrogates { d, u_att, u_mlp })
}

/// `‖rewrite(X^l)_i − X^{l+1}_i‖_∞` for the linearized layer.
pub fn layer_rewrite_check(
    trace: &ForwardTrace,
    surrogates: &Surrogates,
    model: &Model,
    layer: usize,
    position: usize,
) -> Result<f64> {
    model.check_layer(layer)?;
    if position >= trace.seq_len() {
        return Err(Error::index("position", position, format!("0..{}", trace.seq_len())));
    }
    let x = trace.resid(layer);
    let mut pre = x.row(position).to_owned();
    for h in 0..model.config().num_heads {
        let w_ov = model.fold_ov(layer, h)?;
        let a = trace.attn_row(layer, h, position);
        for j in 0..=position {
            pre.scaled_add(a[j], &w_ov.dot(&x.row(j)));
        }
    }
    let mid = pre * &surrogates.u_att[layer - 1].row(position);
    let out = (&mid + &surrogates.apply_v(model, layer, position, mid.view())) * &surrogates.u_mlp[layer - 1].row(position);
    let target = trace.resid_at(layer + 1, position);
    Ok(out.iter().zip(target.iter()).fold(0.0, |m, (a, b)| m.max((a - b).abs())))
}
