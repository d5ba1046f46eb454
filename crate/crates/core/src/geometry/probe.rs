// SPDX-License-Identifier: MIT OR Apache-2.0

//! Multinomial logistic-regression probe trained by full-batch gradient
//! descent on standardized features.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RepresentationSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    /// Fraction of each class used for training.
    pub train_fraction: f64,
    pub seed: u64,
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            train_fraction: 0.8,
            seed: 0,
            learning_rate: 0.1,
            epochs: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub config: ProbeConfig,
    pub class_names: Vec<String>,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// Test accuracy per class, in `class_names` order.
    pub per_class_accuracy: Vec<f64>,
    /// `classes × dim`, acting on standardized features.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
}

impl ProbeReport {
    /// Predicted class for a raw (unstandardized) vector.
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut best = (0, f64::NEG_INFINITY);
        for (c, (w, b)) in self.weights.iter().zip(&self.bias).enumerate() {
            let score = b + w
                .iter()
                .zip(x)
                .zip(self.feature_mean.iter().zip(&self.feature_scale))
                .map(|((w, x), (m, s))| w * (x - m) / s)
                .sum::<f64>();
            if score > best.1 {
                best = (c, score);
            }
        }
        best.0
    }
}

/// Seeded per-class split; training indices and test indices, both sorted.
fn stratified_split(reps: &RepresentationSet, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for c in 0..reps.num_classes() {
        let mut idx: Vec<usize> = (0..reps.len()).filter(|&i| reps.labels[i] == c).collect();
        idx.shuffle(&mut rng);
        let n_train = ((idx.len() as f64) * fraction).round() as usize;
        let n_train = n_train.min(idx.len());
        if n_train < 2 || n_train == idx.len() {
            return Err(Error::Geometry(format!(
                "class '{}' has {} samples; split leaves {} for training and {} for testing",
                reps.class_names[c],
                idx.len(),
                n_train,
                idx.len() - n_train
            )));
        }
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / truth.len() as f64
}

fn argmax_rows(z: &Array2<f64>) -> Vec<usize> {
    z.rows()
        .into_iter()
        .map(|r| {
            let mut best = 0;
            for (i, &v) in r.iter().enumerate() {
                if v > r[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

pub fn train_probe(reps: &RepresentationSet, config: &ProbeConfig) -> Result<ProbeReport> {
    let classes = reps.num_classes();
    if classes < 2 {
        return Err(Error::Geometry(format!("probe needs at least 2 classes, got {classes}")));
    }
    if !(config.train_fraction > 0.0 && config.train_fraction < 1.0) {
        return Err(Error::Geometry(format!("train fraction {} outside (0, 1)", config.train_fraction)));
    }
    let (train, test) = stratified_split(reps, config.train_fraction, config.seed)?;
    let x_train = reps.x.select(Axis(0), &train);
    let mean = x_train.mean_axis(Axis(0)).expect("nonempty");
    let scale: Array1<f64> = x_train
        .std_axis(Axis(0), 0.0)
        .mapv(|s| if s > 0.0 { s } else { 1.0 });
    let standardize = |x: Array2<f64>| (x - &mean) / &scale;
    let x_train = standardize(x_train);
    let x_test = standardize(reps.x.select(Axis(0), &test));
    let y_train: Vec<usize> = train.iter().map(|&i| reps.labels[i]).collect();
    let y_test: Vec<usize> = test.iter().map(|&i| reps.labels[i]).collect();

    let n = train.len() as f64;
    let mut onehot = Array2::<f64>::zeros((train.len(), classes));
    for (i, &y) in y_train.iter().enumerate() {
        onehot[[i, y]] = 1.0;
    }
    let mut w = Array2::<f64>::zeros((classes, reps.dim()));
    let mut b = Array1::<f64>::zeros(classes);
    for _ in 0..config.epochs {
        let mut p = x_train.dot(&w.t()) + &b;
        softmax_rows(&mut p);
        let err = p - &onehot;
        let grad_w = err.t().dot(&x_train) / n;
        let grad_b = err.sum_axis(Axis(0)) / n;
        w.scaled_add(-config.learning_rate, &grad_w);
        b.scaled_add(-config.learning_rate, &grad_b);
    }

    let pred_train = argmax_rows(&(x_train.dot(&w.t()) + &b));
    let pred_test = argmax_rows(&(x_test.dot(&w.t()) + &b));
    let per_class_accuracy = (0..classes)
        .map(|c| {
            let (p, t): (Vec<usize>, Vec<usize>) =
                pred_test.iter().zip(&y_test).filter(|(_, &t)| t == c).map(|(p, t)| (*p, *t)).unzip();
            accuracy(&p, &t)
        })
        .collect();
    Ok(ProbeReport {
        config: config.clone(),
        class_names: reps.class_names.clone(),
        train_accuracy: accuracy(&pred_train, &y_train),
        test_accuracy: accuracy(&pred_test, &y_test),
        per_class_accuracy,
        weights: w.rows().into_iter().map(|r| r.to_vec()).collect(),
        bias: b.to_vec(),
        feature_mean: mean.to_vec(),
        feature_scale: scale.to_vec(),
        train_indices: train,
        test_indices: test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn clusters(seed: u64, per_class: usize, classes: usize, dim: usize, sep: f64) -> RepresentationSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..classes * per_class).map(|i| i / per_class).collect();
        let x = Array2::from_shape_fn((labels.len(), dim), |(i, j)| {
            let center = if j == labels[i] % dim { sep } else { 0.0 };
            center + rng.sample::<f64, _>(StandardNormal)
        });
        RepresentationSet::new(x, labels, (0..classes).map(|c| format!("c{c}")).collect()).unwrap()
    }

    #[test]
    fn separable_clusters_reach_full_accuracy() {
        let reps = clusters(1, 30, 3, 5, 12.0);
        let report = train_probe(&reps, &ProbeConfig::default()).unwrap();
        assert_eq!(report.test_accuracy, 1.0);
        assert_eq!(report.train_accuracy, 1.0);
        assert_eq!(report.test_indices.len(), 18);
        assert!(report.train_indices.iter().all(|i| !report.test_indices.contains(i)));
        let i = report.test_indices[0];
        assert_eq!(report.predict(reps.x.row(i).as_slice().unwrap()), reps.labels[i]);
    }

    #[test]
    fn shuffled_labels_near_chance() {
        let mut reps = clusters(2, 100, 2, 4, 12.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        reps.labels.shuffle(&mut rng);
        let report = train_probe(&reps, &ProbeConfig::default()).unwrap();
        assert!((report.test_accuracy - 0.5).abs() <= 0.15, "{}", report.test_accuracy);
    }

    #[test]
    fn train_accuracy_beats_constant_and_is_deterministic() {
        let reps = clusters(3, 20, 4, 3, 1.0);
        let cfg = ProbeConfig {
            seed: 11,
            ..ProbeConfig::default()
        };
        let a = train_probe(&reps, &cfg).unwrap();
        let b = train_probe(&reps, &cfg).unwrap();
        assert_eq!(a, b);
        let counts = {
            let mut c = vec![0usize; 4];
            for &i in &a.train_indices {
                c[reps.labels[i]] += 1;
            }
            c
        };
        let best_constant = *counts.iter().max().unwrap() as f64 / a.train_indices.len() as f64;
        assert!(a.train_accuracy >= best_constant);
        assert!(a.per_class_accuracy.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn tiny_class_is_rejected() {
        let x = Array2::zeros((5, 2));
        let reps = RepresentationSet::new(x, vec![0, 0, 0, 0, 1], vec!["a".into(), "b".into()]).unwrap();
        assert!(train_probe(&reps, &ProbeConfig::default()).is_err());
    }
}
