// SPDX-License-Identifier: MIT OR Apache-2.0

use ivtrace_core::pathtrace::{
    build_surrogates, enumerate_paths, head_activity, layer_rewrite_check, path_contribution_by_token, EdgePolicy,
    EnumerateOptions, SamplePaths,
};
use ivtrace_core::toy::gen_toy_weights;
use ivtrace_core::{forward, Activation, Intervention, MlpKind, Model, ModelConfig, Positional};
use ndarray::Array1;
use proptest::prelude::*;

fn config_strategy() -> impl Strategy<Value = ModelConfig> {
    (1usize..4, prop::sample::select(vec![1usize, 2, 4]), 0usize..3, any::<bool>(), any::<bool>()).prop_map(
        |(layers, heads, act, gated, rotary)| ModelConfig {
            activation: [Activation::Relu, Activation::Gelu, Activation::Silu][act],
            mlp_kind: if gated { MlpKind::Gated } else { MlpKind::Plain },
            positional: if rotary { Positional::Rotary } else { Positional::None },
            ..ModelConfig::toy(layers, heads, 8, 20)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rewrite_is_exact(cfg in config_strategy(), seed in any::<u64>(), tokens in prop::collection::vec(0usize..20, 1..7)) {
        let model = gen_toy_weights(seed, &cfg).unwrap();
        let trace = forward(&model, &tokens, &Intervention::none()).unwrap();
        let s = build_surrogates(&trace, &model).unwrap();
        for l in 1..=cfg.num_layers {
            for i in 0..tokens.len() {
                prop_assert!(layer_rewrite_check(&trace, &s, &model, l, i).unwrap() <= 1e-8);
            }
        }
    }

    #[test]
    fn per_source_count_is_bounded(seed in any::<u64>(), tokens in prop::collection::vec(0usize..20, 1..6)) {
        let cfg = ModelConfig::toy(2, 2, 8, 20);
        let model = gen_toy_weights(seed, &cfg).unwrap();
        let trace = forward(&model, &tokens, &Intervention::none()).unwrap();
        let s = build_surrogates(&trace, &model).unwrap();
        let mut total = 0;
        for src in 0..tokens.len() {
            let opts = EnumerateOptions { rank_threshold: 20, sources: Some(vec![src]), ..EnumerateOptions::default() };
            let e = enumerate_paths(&trace, &s, &model, 0, &opts).unwrap();
            prop_assert!(e.enumerated <= 36);
            total += e.enumerated;
        }
        prop_assert_eq!(total, 36);
    }
}

#[test]
fn exhaustive_expansion_reconstructs_logits() {
    for seed in 0..5 {
        let cfg = ModelConfig::toy(2, 2, 8, 20);
        let model = gen_toy_weights(seed, &cfg).unwrap();
        let trace = forward(&model, &[3, 11, 7], &Intervention::none()).unwrap();
        let s = build_surrogates(&trace, &model).unwrap();
        let opts = EnumerateOptions {
            rank_threshold: 20,
            policy: EdgePolicy::All,
            ..EnumerateOptions::default()
        };
        let e = enumerate_paths(&trace, &s, &model, 0, &opts).unwrap();
        let sum = e.paths.iter().fold(Array1::<f64>::zeros(8), |acc, p| acc + &p.vector);
        let logits = model.weights().w_u.dot(&sum);
        for (a, b) in logits.iter().zip(trace.last_logits().iter()) {
            assert!((a - b).abs() <= 1e-6);
        }
    }
}

/// One layer, two heads: head 0 reads the marker token, head 1 reads the
/// first token. Every path out of the marker must use head 0.
fn concentrated_model(marker: usize, first: usize) -> Model {
    let cfg = ModelConfig::toy(1, 2, 8, 20);
    let (cfg, mut w) = gen_toy_weights(1, &cfg).unwrap().into_parts();
    for t in 0..cfg.vocab_size {
        w.w_e[[0, t]] = 1.0;
        w.w_e[[1, t]] = f64::from(u8::from(t == marker));
        w.w_e[[2, t]] = f64::from(u8::from(t == first));
    }
    let lw = &mut w.layers[0];
    for h in 0..2 {
        lw.w_q[h].fill(0.0);
        lw.w_k[h].fill(0.0);
        lw.w_q[h][[0, 0]] = 20.0;
        lw.w_k[h][[0, 1 + h]] = 20.0;
    }
    Model::new(cfg, w).unwrap()
}

#[test]
fn concentrated_head_is_always_active() {
    let (marker, first) = (4, 5);
    let model = concentrated_model(marker, first);
    let prompts: Vec<Vec<usize>> = vec![vec![5, 8, 4, 9, 10], vec![5, 4, 12], vec![5, 7, 7, 4, 11, 13, 14]];
    let mut kept = Vec::new();
    for tokens in &prompts {
        let trace = forward(&model, tokens, &Intervention::none()).unwrap();
        let s = build_surrogates(&trace, &model).unwrap();
        let opts = EnumerateOptions {
            rank_threshold: 20,
            ..EnumerateOptions::default()
        };
        kept.push(enumerate_paths(&trace, &s, &model, 0, &opts).unwrap().paths);
    }
    let samples: Vec<SamplePaths<'_>> = prompts
        .iter()
        .zip(&kept)
        .map(|(t, p)| SamplePaths {
            seq_len: t.len(),
            t_inst: t.iter().position(|&x| x == marker).unwrap(),
            paths: p,
        })
        .collect();
    let act = head_activity(&samples, 1, 2);
    assert!(!act.empty);
    assert_eq!(act.fractions, vec![vec![1.0, 0.0]]);

    let contrib = path_contribution_by_token(&samples);
    let total: usize = contrib.iter().map(|c| c.total_count).sum();
    assert_eq!(total, kept.iter().map(Vec::len).sum::<usize>());
}
