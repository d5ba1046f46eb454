// SPDX-License-Identifier: MIT OR Apache-2.0

//! Seeded toy models, vocabularies and task sets for desk-scale runs.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::{MlpKind, ModelConfig};
use crate::error::{Error, Result};
use crate::model::{LayerWeights, Model, ModelBundle, ModelWeights};
use crate::tasks::{RephrasingLine, TaskLine};
use crate::tokenizer::{SimpleTokenizer, FILLER, UNK};

const SPECIALS: [&str; 5] = [FILLER, UNK, ".", ",", ":"];

const WORDS: [&str; 44] = [
    "▁Given", "▁an", "▁adjective", "▁state", "▁its", "▁antonym", "▁comparative", "▁form", "▁animal",
    "▁most", "▁typical", "▁associated", "▁color", "▁whether", "▁or", "▁not", "▁it", "▁can", "▁fly",
    "▁Print", "▁'yes'", "▁'no'", "▁hot", "▁cold", "▁big", "▁small", "▁fast", "▁slow", "▁good", "▁bad",
    "▁hotter", "▁colder", "▁bigger", "▁smaller", "▁faster", "▁slower", "▁crow", "▁cat", "▁frog",
    "▁swan", "▁black", "▁orange", "▁green", "▁white",
];

/// Number of leading special entries in a toy vocabulary.
pub const NUM_SPECIALS: usize = SPECIALS.len();

/// Toy vocabulary of exactly `size` entries: specials, built-in words, then
/// `▁w{k}` fillers. Requires `size >= 2` so `<s>` and `<unk>` fit.
pub fn toy_vocab(size: usize) -> Result<SimpleTokenizer> {
    if size < 2 {
        return Err(Error::Config(format!("toy vocabulary needs at least 2 entries, got {size}")));
    }
    let vocab: Vec<String> = SPECIALS
        .iter()
        .chain(WORDS.iter())
        .map(|s| s.to_string())
        .chain((SPECIALS.len() + WORDS.len()..).map(|k| format!("▁w{k}")))
        .take(size)
        .collect();
    SimpleTokenizer::new(vocab)
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample::<f64, _>(StandardNormal) * scale)
}

/// Weights only; usable with any vocabulary size.
pub fn gen_toy_weights(seed: u64, config: &ModelConfig) -> Result<Model> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d, dh, dp, v) = (config.model_dim, config.head_dim, config.mlp_dim, config.vocab_size);
    let scale = 1.0 / (d as f64).sqrt();
    let w_e = normal_matrix(&mut rng, d, v, scale);
    let w_u = normal_matrix(&mut rng, v, d, scale);
    let layers = (0..config.num_layers)
        .map(|_| {
            let mut heads = |rows, cols| -> Vec<Array2<f64>> {
                (0..config.num_heads).map(|_| normal_matrix(&mut rng, rows, cols, scale)).collect()
            };
            let w_q = heads(dh, d);
            let w_k = heads(dh, d);
            let w_v = heads(dh, d);
            let w_o = heads(d, dh);
            let w_1 = normal_matrix(&mut rng, dp, d, scale);
            let w_gate = (config.mlp_kind == MlpKind::Gated).then(|| normal_matrix(&mut rng, dp, d, scale));
            let w_2 = normal_matrix(&mut rng, d, dp, scale);
            let mut gain = || Array1::from_shape_simple_fn(d, || 1.0 + 0.1 * rng.sample::<f64, _>(StandardNormal));
            let g_att = gain();
            let g_mlp = gain();
            LayerWeights {
                w_q,
                w_k,
                w_v,
                w_o,
                w_1,
                w_gate,
                w_2,
                g_att,
                g_mlp,
            }
        })
        .collect();
    Model::new(config.clone(), ModelWeights { w_e, w_u, layers })
}

/// Deterministic toy model plus matching toy vocabulary.
pub fn gen_toy_model(seed: u64, config: &ModelConfig) -> Result<ModelBundle> {
    let model = gen_toy_weights(seed, config)?;
    let tokenizer = toy_vocab(config.vocab_size)?;
    ModelBundle::new(model, tokenizer)
}

/// Shape of a generated toy task set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToyTaskSpec {
    pub num_tasks: usize,
    pub samples_per_task: usize,
    pub rephrasings_per_task: usize,
}

impl Default for ToyTaskSpec {
    fn default() -> Self {
        ToyTaskSpec {
            num_tasks: 4,
            samples_per_task: 8,
            rephrasings_per_task: 12,
        }
    }
}

/// Contrastive toy tasks over the content words of `tokenizer`.
///
/// Every task sees the same queries; answers come from a per-task random
/// mapping of the query word, so tasks differ only in their instruction.
pub fn gen_toy_tasks(
    seed: u64,
    tokenizer: &SimpleTokenizer,
    spec: ToyTaskSpec,
) -> Result<(Vec<TaskLine>, Vec<RephrasingLine>)> {
    let content: Vec<usize> = (0..tokenizer.len())
        .filter(|&id| tokenizer.token(id).is_some_and(|t| t.starts_with(crate::tokenizer::SPACE)))
        .collect();
    let period = tokenizer.id(".");
    let (Some(period), true) = (period, content.len() >= 4) else {
        return Err(Error::Vocab(
            "toy tasks need '.' and at least 4 space-led content words".into(),
        ));
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let queries: Vec<usize> = (0..spec.samples_per_task)
        .map(|_| content[rng.random_range(0..content.len())])
        .collect();

    let mut tasks = Vec::new();
    let mut rephrasings = Vec::new();
    for t in 0..spec.num_tasks {
        let label = format!("toy_{t}");
        let len = rng.random_range(3..=6);
        let mut inst: Vec<usize> = (0..len).map(|_| content[rng.random_range(0..content.len())]).collect();
        inst.push(period);
        let mut mapping = content.clone();
        mapping.shuffle(&mut rng);
        let answer_of = |q: usize| {
            let pos = content.iter().position(|&c| c == q).expect("query drawn from content");
            mapping[pos]
        };
        let instruction = tokenizer.decode(&inst);
        for &q in &queries {
            tasks.push(TaskLine {
                task: label.clone(),
                instruction: instruction.clone(),
                query: tokenizer.decode(&[q]),
                answer: tokenizer.decode(&[answer_of(q)]),
            });
        }
        for r in 0..spec.rephrasings_per_task {
            let mut variant = inst.clone();
            if r > 0 {
                for slot in variant.iter_mut().take(len) {
                    if rng.random_bool(0.3) {
                        *slot = content[rng.random_range(0..content.len())];
                    }
                }
            }
            rephrasings.push(RephrasingLine {
                task: label.clone(),
                instruction: tokenizer.decode(&variant),
            });
        }
    }
    Ok((tasks, rephrasings))
}
