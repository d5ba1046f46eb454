// SPDX-License-Identifier: MIT OR Apache-2.0

//! Instruction representations across rephrasings: extraction, LDA
//! projection and linear probing.

mod lda;
pub mod linalg;
mod probe;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{forward, Intervention};
use crate::model::Model;
use crate::tasks::TaskSet;

pub use lda::{lda_project, separation_ratio, LdaProjection};
pub use probe::{train_probe, ProbeConfig, ProbeReport};

/// Which residual streams make up a representation vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSelector {
    /// `X^l` for one `l` in `1..=L+1`.
    Single(usize),
    /// `X^1 ‖ X^2 ‖ … ‖ X^{L+1}`.
    Concat,
}

/// Labeled representation vectors, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationSet {
    /// `n × dim`.
    pub x: Array2<f64>,
    /// Class index per row, into `class_names`.
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    /// Index of the rephrasing within its task.
    pub sample_ids: Vec<usize>,
    pub selector: Option<LayerSelector>,
}

impl RepresentationSet {
    /// Wrap a data matrix; sample ids count up within each class.
    pub fn new(x: Array2<f64>, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if labels.len() != x.nrows() {
            return Err(Error::shape("labels", &[x.nrows()], &[labels.len()]));
        }
        if x.nrows() == 0 {
            return Err(Error::Empty("representation set"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::index("class label", bad, format!("0..{}", class_names.len())));
        }
        let mut seen = vec![0usize; class_names.len()];
        let sample_ids = labels
            .iter()
            .map(|&l| {
                seen[l] += 1;
                seen[l] - 1
            })
            .collect();
        Ok(RepresentationSet {
            x,
            labels,
            class_names,
            sample_ids,
            selector: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// Residuals at the last instruction token of every rephrasing.
///
/// Each rephrasing is run on its own, so `t_inst` is its final token.
pub fn extract_reps(model: &Model, tasks: &TaskSet, selector: &LayerSelector) -> Result<RepresentationSet> {
    let rephrasings = tasks.rephrasings.as_ref().ok_or(Error::Empty("rephrasings"))?;
    let cfg = model.config();
    if let LayerSelector::Single(l) = *selector {
        if l == 0 || l > cfg.num_layers + 1 {
            return Err(Error::index("layer", l, format!("1..={}", cfg.num_layers + 1)));
        }
    }
    let class_names: Vec<String> = tasks
        .labels()
        .iter()
        .filter(|l| rephrasings.contains_key(*l))
        .cloned()
        .collect();
    let mut jobs = Vec::new();
    for (c, name) in class_names.iter().enumerate() {
        for (k, r) in rephrasings[name].iter().enumerate() {
            if r.tokens.is_empty() {
                return Err(Error::Empty("rephrasing tokens"));
            }
            jobs.push((c, k, &r.tokens));
        }
    }
    let d = cfg.model_dim;
    let dim = match selector {
        LayerSelector::Single(_) => d,
        LayerSelector::Concat => d * (cfg.num_layers + 1),
    };
    let rows: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|(_, _, tokens)| {
            let trace = forward(model, tokens, &Intervention::none())?;
            let t_inst = tokens.len() - 1;
            Ok(match *selector {
                LayerSelector::Single(l) => trace.resid_at(l, t_inst).to_vec(),
                LayerSelector::Concat => (1..=cfg.num_layers + 1)
                    .flat_map(|l| trace.resid_at(l, t_inst).to_vec())
                    .collect(),
            })
        })
        .collect::<Result<_>>()?;
    let x = Array2::from_shape_vec((rows.len(), dim), rows.concat()).map_err(|e| Error::Geometry(e.to_string()))?;
    Ok(RepresentationSet {
        x,
        labels: jobs.iter().map(|j| j.0).collect(),
        sample_ids: jobs.iter().map(|j| j.1).collect(),
        class_names,
        selector: Some(selector.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ModelConfig;
    use crate::tasks::Rephrasing;
    use crate::toy::gen_toy_model;
    use std::collections::BTreeMap;

    fn fixture() -> (crate::model::ModelBundle, TaskSet) {
        let bundle = gen_toy_model(3, &ModelConfig::toy(2, 2, 8, 60)).unwrap();
        let tok = &bundle.tokenizer;
        let mk = |s: &str| Rephrasing {
            text: s.into(),
            tokens: tok.encode(s).ids,
        };
        let mut map = BTreeMap::new();
        map.insert("a".to_string(), vec![mk("Given an adjective ."), mk("Given an adjective ."), mk("state its antonym .")]);
        map.insert("b".to_string(), vec![mk("Given an animal ."), mk("most typical color ."), mk("it can fly .")]);
        let tasks = TaskSet::new(Vec::new()).with_rephrasings(map).unwrap();
        (bundle, tasks)
    }

    #[test]
    fn counts_labels_and_determinism() {
        let (bundle, tasks) = fixture();
        let reps = extract_reps(&bundle.model, &tasks, &LayerSelector::Single(2)).unwrap();
        assert_eq!(reps.len(), 6);
        assert_eq!(reps.class_counts(), vec![3, 3]);
        assert_eq!(reps.sample_ids, vec![0, 1, 2, 0, 1, 2]);
        assert_eq!(reps.x.row(0), reps.x.row(1));
        assert_ne!(reps.x.row(0), reps.x.row(2));
    }

    #[test]
    fn matches_standalone_forward() {
        let (bundle, tasks) = fixture();
        let reps = extract_reps(&bundle.model, &tasks, &LayerSelector::Single(3)).unwrap();
        let tokens = &tasks.rephrasings.as_ref().unwrap()["b"][1].tokens;
        let trace = forward(&bundle.model, tokens, &Intervention::none()).unwrap();
        assert_eq!(reps.x.row(4), trace.resid_at(3, tokens.len() - 1));

        let cat = extract_reps(&bundle.model, &tasks, &LayerSelector::Concat).unwrap();
        assert_eq!(cat.dim(), 8 * 3);
        assert_eq!(cat.x.row(4).slice(ndarray::s![16..]), reps.x.row(4));
    }

    #[test]
    fn errors() {
        let (bundle, tasks) = fixture();
        assert!(extract_reps(&bundle.model, &tasks, &LayerSelector::Single(0)).is_err());
        assert!(extract_reps(&bundle.model, &tasks, &LayerSelector::Single(4)).is_err());
        let bare = TaskSet::new(Vec::new());
        assert!(extract_reps(&bundle.model, &bare, &LayerSelector::Single(1)).is_err());
    }
}
