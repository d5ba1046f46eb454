// SPDX-License-Identifier: MIT OR Apache-2.0

//! Model hyperparameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pointwise nonlinearity used inside the MLP block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// `max(0, x)`.
    Relu,
    /// Exact (erf-based) Gaussian error linear unit.
    Gelu,
    /// `x * sigmoid(x)`.
    Silu,
}

impl Activation {
    /// Apply the nonlinearity to a scalar.
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Gelu => 0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2)),
            Activation::Silu => x / (1.0 + (-x).exp()),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "gelu" => Ok(Activation::Gelu),
            "silu" => Ok(Activation::Silu),
            other => Err(Error::Config(format!("unknown activation {other:?}"))),
        }
    }
}

/// MLP flavour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MlpKind {
    /// `W_2 · act(W_1 x)`.
    Plain,
    /// `W_2 · (act(W_gate x) ⊙ W_1 x)`.
    Gated,
}

impl std::str::FromStr for MlpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(MlpKind::Plain),
            "gated" => Ok(MlpKind::Gated),
            other => Err(Error::Config(format!("unknown mlp kind {other:?}"))),
        }
    }
}

/// Normalization layer. Only RMSNorm is supported because it is exactly
/// linear at a fixed input point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    /// `diag(g) · x / rms(x)`.
    Rmsnorm,
}

/// Positional encoding applied to queries and keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Positional {
    /// Content-only attention.
    #[default]
    None,
    /// Rotary embedding on query/key pairs with base 10000.
    Rotary,
}

fn default_norm_eps() -> f64 {
    1e-6
}

/// Shape and architecture of a decoder-only transformer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Number of transformer blocks `L`.
    pub num_layers: usize,
    /// Attention heads per block `H`.
    pub num_heads: usize,
    /// Residual width `d`.
    pub model_dim: usize,
    /// Per-head width; `num_heads * head_dim == model_dim`.
    pub head_dim: usize,
    /// Hidden width of the MLP.
    pub mlp_dim: usize,
    /// Vocabulary size.
    pub vocab_size: usize,
    pub activation: Activation,
    pub mlp_kind: MlpKind,
    pub norm_kind: NormKind,
    #[serde(default)]
    pub positional: Positional,
    /// Added to the mean square inside RMSNorm.
    #[serde(default = "default_norm_eps")]
    pub norm_eps: f64,
}

impl ModelConfig {
    /// Config with `head_dim = model_dim / num_heads`, `mlp_dim = 4 * model_dim`,
    /// ReLU, plain MLP and no positional encoding.
    pub fn toy(num_layers: usize, num_heads: usize, model_dim: usize, vocab_size: usize) -> Self {
        ModelConfig {
            num_layers,
            num_heads,
            model_dim,
            head_dim: model_dim.checked_div(num_heads).unwrap_or(0),
            mlp_dim: 4 * model_dim,
            vocab_size,
            activation: Activation::Relu,
            mlp_kind: MlpKind::Plain,
            norm_kind: NormKind::Rmsnorm,
            positional: Positional::None,
            norm_eps: default_norm_eps(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("num_layers", self.num_layers),
            ("num_heads", self.num_heads),
            ("model_dim", self.model_dim),
            ("head_dim", self.head_dim),
            ("mlp_dim", self.mlp_dim),
            ("vocab_size", self.vocab_size),
        ];
        for (name, value) in dims {
            if value == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.num_heads * self.head_dim != self.model_dim {
            return Err(Error::Config(format!(
                "num_heads * head_dim = {} * {} != model_dim = {}",
                self.num_heads, self.head_dim, self.model_dim
            )));
        }
        if !(self.norm_eps.is_finite() && self.norm_eps >= 0.0) {
            return Err(Error::Config(format!("norm_eps {} must be finite and >= 0", self.norm_eps)));
        }
        Ok(())
    }
}
