// SPDX-License-Identifier: MIT OR Apache-2.0

//! # ivtrace-core
//!
//! Locating and characterizing instruction representations inside
//! decoder-only transformers:
//!
//! - [`forward`]: an RMSNorm transformer whose forward pass records every
//!   intermediate (residuals, attention patterns, MLP pre-activations, norm
//!   statistics).
//! - [`patching`]: source/target/patched causal mediation runs with
//!   reciprocal-rank and logit effects, and 1-/2-layer grid scans.
//! - [`stats`]: superadditivity samples and one-sample Student-t tests.
//! - [`geometry`]: instruction representations across rephrasings, Fisher
//!   LDA projection and a multinomial logistic probe.
//! - [`pathtrace`]: exact locally-linear surrogates of every nonlinearity and
//!   enumeration of token-to-output paths through attention heads and MLPs.
//!
//! Layers are numbered from 1 everywhere in the public API; heads and token
//! positions from 0.

pub mod config;
pub mod error;
pub mod eval;
pub mod forward;
pub mod geometry;
pub mod metrics;
pub mod model;
pub mod patching;
pub mod pathtrace;
pub mod stats;
pub mod tasks;
pub mod tokenizer;
pub mod toy;
pub mod weights_io;

pub use config::{Activation, MlpKind, ModelConfig, NormKind, Positional};
pub use error::{Error, Result};
pub use eval::{eval_ema, TaskAccuracy};
pub use forward::{forward, ForwardTrace, Intervention, ResidualPatch};
pub use model::{LayerWeights, Model, ModelBundle, ModelWeights};
pub use patching::{grid_scan, run_mediation, GridResult, PatchResult, PatchSpec};
pub use pathtrace::{build_surrogates, enumerate_paths, EnumerateOptions, PathRecord, Surrogates};
pub use tasks::{load_tasks, LoadReport, PromptRecord, TaskSet};
pub use tokenizer::SimpleTokenizer;
pub use toy::{gen_toy_model, gen_toy_tasks, ToyTaskSpec};
