// SPDX-License-Identifier: MIT OR Apache-2.0

//! Transformer parameters.
//!
//! Matrices act on column vectors: `W_E` is `d × |V|` (column `v` is the
//! embedding of token `v`), `W_U` is `|V| × d`, per-head `W_Q/W_K/W_V` are
//! `d_h × d` and `W_O` is `d × d_h`. Layers are numbered from 1 in every public
//! API; `layers[0]` holds layer 1.

use ndarray::{Array1, Array2, ArrayView1};

use crate::config::{MlpKind, ModelConfig};
use crate::error::{Error, Result};
use crate::tokenizer::SimpleTokenizer;

/// Parameters of one transformer block.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub w_q: Vec<Array2<f64>>,
    pub w_k: Vec<Array2<f64>>,
    pub w_v: Vec<Array2<f64>>,
    pub w_o: Vec<Array2<f64>>,
    /// `d' × d`.
    pub w_1: Array2<f64>,
    /// `d' × d`, present only for gated MLPs.
    pub w_gate: Option<Array2<f64>>,
    /// `d × d'`.
    pub w_2: Array2<f64>,
    /// RMSNorm gain after attention.
    pub g_att: Array1<f64>,
    /// RMSNorm gain after the MLP.
    pub g_mlp: Array1<f64>,
}

/// All parameters of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub w_e: Array2<f64>,
    pub w_u: Array2<f64>,
    pub layers: Vec<LayerWeights>,
}

/// Config plus weights, checked for consistency at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    weights: ModelWeights,
}

/// A model together with the tokenizer that produced its vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub model: Model,
    pub tokenizer: SimpleTokenizer,
}

impl ModelBundle {
    pub fn new(model: Model, tokenizer: SimpleTokenizer) -> Result<Self> {
        if tokenizer.len() != model.config().vocab_size {
            return Err(Error::Vocab(format!(
                "tokenizer has {} entries but the model vocabulary is {}",
                tokenizer.len(),
                model.config().vocab_size
            )));
        }
        Ok(ModelBundle { model, tokenizer })
    }
}

fn check_matrix(name: String, m: &Array2<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.dim() != (rows, cols) {
        return Err(Error::shape(name, &[rows, cols], &[m.nrows(), m.ncols()]));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Format(format!("{name} contains non-finite entries")));
    }
    Ok(())
}

fn check_vector(name: String, v: &Array1<f64>, len: usize) -> Result<()> {
    if v.len() != len {
        return Err(Error::shape(name, &[len], &[v.len()]));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Format(format!("{name} contains non-finite entries")));
    }
    Ok(())
}

impl Model {
    /// Validate `weights` against `config` and wrap them.
    pub fn new(config: ModelConfig, weights: ModelWeights) -> Result<Self> {
        config.validate()?;
        let (d, dh, dp, v) = (config.model_dim, config.head_dim, config.mlp_dim, config.vocab_size);
        check_matrix("W_E".into(), &weights.w_e, d, v)?;
        check_matrix("W_U".into(), &weights.w_u, v, d)?;
        if weights.layers.len() != config.num_layers {
            return Err(Error::shape("layers", &[config.num_layers], &[weights.layers.len()]));
        }
        for (idx, lw) in weights.layers.iter().enumerate() {
            let l = idx + 1;
            for (kind, mats) in [("W_Q", &lw.w_q), ("W_K", &lw.w_k), ("W_V", &lw.w_v)] {
                if mats.len() != config.num_heads {
                    return Err(Error::shape(format!("layers.{l}.{kind}"), &[config.num_heads], &[mats.len()]));
                }
                for (h, m) in mats.iter().enumerate() {
                    check_matrix(format!("layers.{l}.{kind}.{h}"), m, dh, d)?;
                }
            }
            if lw.w_o.len() != config.num_heads {
                return Err(Error::shape(format!("layers.{l}.W_O"), &[config.num_heads], &[lw.w_o.len()]));
            }
            for (h, m) in lw.w_o.iter().enumerate() {
                check_matrix(format!("layers.{l}.W_O.{h}"), m, d, dh)?;
            }
            check_matrix(format!("layers.{l}.W_1"), &lw.w_1, dp, d)?;
            match (config.mlp_kind, &lw.w_gate) {
                (MlpKind::Gated, Some(g)) => check_matrix(format!("layers.{l}.W_gate"), g, dp, d)?,
                (MlpKind::Gated, None) => {
                    return Err(Error::Config(format!("layers.{l}.W_gate missing for gated MLP")))
                }
                (MlpKind::Plain, Some(_)) => {
                    return Err(Error::Config(format!("layers.{l}.W_gate present for plain MLP")))
                }
                (MlpKind::Plain, None) => {}
            }
            check_matrix(format!("layers.{l}.W_2"), &lw.w_2, d, dp)?;
            check_vector(format!("layers.{l}.g_att"), &lw.g_att, d)?;
            check_vector(format!("layers.{l}.g_mlp"), &lw.g_mlp, d)?;
        }
        Ok(Model { config, weights })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn weights(&self) -> &ModelWeights {
        &self.weights
    }

    pub fn into_parts(self) -> (ModelConfig, ModelWeights) {
        (self.config, self.weights)
    }

    /// Weights of layer `layer` (1-based).
    pub fn layer(&self, layer: usize) -> Result<&LayerWeights> {
        self.check_layer(layer)?;
        Ok(&self.weights.layers[layer - 1])
    }

    pub(crate) fn check_layer(&self, layer: usize) -> Result<()> {
        if layer == 0 || layer > self.config.num_layers {
            return Err(Error::index("layer", layer, format!("1..={}", self.config.num_layers)));
        }
        Ok(())
    }

    pub(crate) fn check_head(&self, head: usize) -> Result<()> {
        if head >= self.config.num_heads {
            return Err(Error::index("head", head, format!("0..{}", self.config.num_heads)));
        }
        Ok(())
    }

    /// Embedding column of `token`.
    pub fn embed(&self, token: usize) -> Result<ArrayView1<'_, f64>> {
        if token >= self.config.vocab_size {
            return Err(Error::TokenOutOfRange {
                id: token,
                vocab_size: self.config.vocab_size,
            });
        }
        Ok(self.weights.w_e.column(token))
    }

    /// Folded value-output map `W_O[h] · W_V[h]` (`d × d`) of head `head` in `layer`.
    pub fn fold_ov(&self, layer: usize, head: usize) -> Result<Array2<f64>> {
        self.check_head(head)?;
        let lw = self.layer(layer)?;
        Ok(lw.w_o[head].dot(&lw.w_v[head]))
    }

    /// All folded OV maps, indexed `[layer - 1][head]`.
    pub fn fold_ov_all(&self) -> Vec<Vec<Array2<f64>>> {
        self.weights
            .layers
            .iter()
            .map(|lw| lw.w_o.iter().zip(&lw.w_v).map(|(o, v)| o.dot(v)).collect())
            .collect()
    }
}
