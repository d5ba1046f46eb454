// SPDX-License-Identifier: MIT OR Apache-2.0

//! Resolving `--model/--vocab` or `--toy` into a model bundle.

use anyhow::{anyhow, Context, Result};
use ivtrace_core::toy::gen_toy_model;
use ivtrace_core::weights_io::model_from_bytes;
use ivtrace_core::{ModelBundle, ModelConfig, Positional, SimpleTokenizer};

use crate::args::{ModelArgs, ToyShape};
use crate::run::{Run, Usage};

pub fn toy_config(shape: &ToyShape) -> Result<ModelConfig> {
    if shape.heads == 0 || !shape.dim.is_multiple_of(shape.heads) {
        return Err(Usage(format!("--dim {} must be a positive multiple of --heads {}", shape.dim, shape.heads)).into());
    }
    let mut cfg = ModelConfig::toy(shape.layers, shape.heads, shape.dim, shape.vocab);
    if let Some(m) = shape.mlp_dim {
        cfg.mlp_dim = m;
    }
    cfg.activation = shape.activation;
    cfg.mlp_kind = shape.mlp_kind;
    if shape.rotary {
        cfg.positional = Positional::Rotary;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parse `seed=7,layers=2,...`; unspecified keys take the `gen-toy` defaults.
pub fn parse_toy_spec(spec: &str) -> Result<(u64, ToyShape)> {
    let mut seed = None;
    let mut shape = ToyShape {
        layers: 2,
        heads: 2,
        dim: 16,
        vocab: 64,
        mlp_dim: None,
        activation: ivtrace_core::Activation::Relu,
        mlp_kind: ivtrace_core::MlpKind::Plain,
        rotary: false,
    };
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| Usage(format!("--toy entry {part:?} is not key=value")))?;
        let bad = || Usage(format!("--toy: bad value {value:?} for {key}"));
        match key {
            "seed" => seed = Some(value.parse().map_err(|_| bad())?),
            "layers" => shape.layers = value.parse().map_err(|_| bad())?,
            "heads" => shape.heads = value.parse().map_err(|_| bad())?,
            "dim" => shape.dim = value.parse().map_err(|_| bad())?,
            "vocab" => shape.vocab = value.parse().map_err(|_| bad())?,
            "mlp_dim" | "mlp-dim" => shape.mlp_dim = Some(value.parse().map_err(|_| bad())?),
            "activation" => shape.activation = value.parse().map_err(|_| bad())?,
            "mlp_kind" | "mlp-kind" => shape.mlp_kind = value.parse().map_err(|_| bad())?,
            "rotary" => shape.rotary = value.parse().map_err(|_| bad())?,
            other => return Err(Usage(format!("--toy: unknown key {other:?}")).into()),
        }
    }
    let seed = seed.ok_or_else(|| Usage("--toy needs seed=N".into()))?;
    Ok((seed, shape))
}

/// Load the model named by `args`, registering any files as run inputs.
pub fn load_bundle(args: &ModelArgs, run: &mut Run) -> Result<ModelBundle> {
    let bundle = match (&args.source.model, &args.source.toy) {
        (Some(path), None) => {
            let vocab_path = args.vocab.as_ref().ok_or_else(|| Usage("--model requires --vocab".into()))?;
            let bytes = crate::run::read_input(path)?;
            run.record_input(path, &bytes);
            let model = model_from_bytes(&bytes).with_context(|| format!("reading {}", path.display()))?;
            let vocab_bytes = crate::run::read_input(vocab_path)?;
            run.record_input(vocab_path, &vocab_bytes);
            let text = String::from_utf8(vocab_bytes).with_context(|| format!("{} is not UTF-8", vocab_path.display()))?;
            let tokenizer = SimpleTokenizer::from_text(&text)?;
            ModelBundle::new(model, tokenizer)?
        }
        (None, Some(spec)) => {
            if args.vocab.is_some() {
                return Err(Usage("--vocab applies only with --model".into()).into());
            }
            let (seed, shape) = parse_toy_spec(spec)?;
            gen_toy_model(seed, &toy_config(&shape)?)?
        }
        _ => return Err(anyhow!(Usage("exactly one of --model or --toy is required".into()))),
    };
    let tokenizer = bundle.tokenizer.with_filler(&args.filler)?;
    Ok(ModelBundle {
        model: bundle.model,
        tokenizer,
    })
}
