// SPDX-License-Identifier: MIT OR Apache-2.0

//! Superadditivity of two-layer patches.
//!
//! For a layer pair `(i, j)` and one sample, the combined effect
//! `f({i, j})` is compared with the sum of single-layer effects
//! `f({i}) + f({j})`. The delta `f_i + f_j − f_combined` is negative when the
//! pair is superadditive; the primary test is a one-sample t-test of the
//! deltas against 0, the secondary one tests the holds-indicator against 0.5.

mod special;
mod ttest;

use serde::{Deserialize, Serialize};

pub use special::{beta_reg, ln_beta, ln_gamma, student_t_cdf};
pub use ttest::{one_sample_t_test, Alternative, TTest};

use crate::error::{Error, Result};
use crate::patching::{PatchResult, TaskGrid};

/// Which patch effect feeds the tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EffectMetric {
    #[default]
    Rank,
    Logit,
}

impl EffectMetric {
    pub fn of(self, r: &PatchResult) -> f64 {
        match self {
            EffectMetric::Rank => r.rank_effect,
            EffectMetric::Logit => r.logit_effect,
        }
    }
}

impl std::str::FromStr for EffectMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rank" => Ok(EffectMetric::Rank),
            "logit" => Ok(EffectMetric::Logit),
            other => Err(Error::Stats(format!("unknown metric {other:?}"))),
        }
    }
}

/// One sample's superadditivity comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuperaddSample {
    pub f_combined: f64,
    pub f_i: f64,
    pub f_j: f64,
    /// `f_i + f_j − f_combined`.
    pub delta: f64,
    /// `f_combined >= f_i + f_j`, equivalently `delta <= 0`.
    pub holds: bool,
}

impl SuperaddSample {
    pub fn new(f_combined: f64, f_i: f64, f_j: f64) -> Self {
        // IEEE subtraction preserves the sign of the exact difference, so
        // deriving `holds` from `delta` keeps both views consistent.
        let delta = (f_i + f_j) - f_combined;
        SuperaddSample {
            f_combined,
            f_i,
            f_j,
            delta,
            holds: delta <= 0.0,
        }
    }
}

/// Top-`k` cells by mean rank effect, descending; ties by `(i, j)`.
pub fn select_top_combinations(grid: &TaskGrid, k: usize) -> Vec<(usize, usize)> {
    let mut cells: Vec<_> = grid.cells.iter().collect();
    cells.sort_by(|a, b| {
        b.mean_rank_effect
            .total_cmp(&a.mean_rank_effect)
            .then((a.layer_i, a.layer_j).cmp(&(b.layer_i, b.layer_j)))
    });
    cells.into_iter().take(k).map(|c| (c.layer_i, c.layer_j)).collect()
}

/// Per-sample superadditivity comparisons for one pair, from the grid's raw
/// scores. A diagonal pair `(i, i)` compares `f({i})` with `2 f({i})`.
pub fn superadd_samples(grid: &TaskGrid, pair: (usize, usize), metric: EffectMetric) -> Result<Vec<SuperaddSample>> {
    let (i, j) = if pair.0 <= pair.1 { pair } else { (pair.1, pair.0) };
    let mut out = Vec::new();
    for (sample, scores) in grid.sample_scores() {
        let get = |key: (usize, usize)| {
            scores.get(&key).map(|r| metric.of(r)).ok_or_else(|| {
                Error::Stats(format!(
                    "task {}: sample {sample} lacks a score for layers {key:?}",
                    grid.task
                ))
            })
        };
        out.push(SuperaddSample::new(get((i, j))?, get((i, i))?, get((j, j))?));
    }
    Ok(out)
}

/// Test results for one layer pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuperaddRow {
    pub layer_i: usize,
    pub layer_j: usize,
    pub t_statistic: f64,
    pub p_value: f64,
    pub mean_delta: f64,
    pub fraction_holding: f64,
    pub n: usize,
    pub degenerate: bool,
    /// Indicator test of `holds` against 0.5 (alternative: holds more often).
    pub bool_test: TTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperaddReport {
    pub alternative: Alternative,
    pub rows: Vec<SuperaddRow>,
}

/// Run both tests for each pair. Each pair needs at least two samples.
pub fn superadd_test(
    pairs: &[((usize, usize), Vec<SuperaddSample>)],
    alternative: Alternative,
) -> Result<SuperaddReport> {
    let mut rows = Vec::with_capacity(pairs.len());
    for ((i, j), samples) in pairs {
        let deltas: Vec<f64> = samples.iter().map(|s| s.delta).collect();
        let delta_test = one_sample_t_test(&deltas, 0.0, alternative)?;
        let holds: Vec<f64> = samples.iter().map(|s| if s.holds { 1.0 } else { 0.0 }).collect();
        let bool_test = one_sample_t_test(&holds, 0.5, Alternative::Greater)?;
        rows.push(SuperaddRow {
            layer_i: *i,
            layer_j: *j,
            t_statistic: delta_test.t_statistic,
            p_value: delta_test.p_value,
            mean_delta: delta_test.mean,
            fraction_holding: bool_test.mean,
            n: samples.len(),
            degenerate: delta_test.degenerate,
            bool_test,
        });
    }
    Ok(SuperaddReport { alternative, rows })
}

/// Select the top-`k` pairs of a task grid and test each.
pub fn superadd_for_task(
    grid: &TaskGrid,
    k: usize,
    metric: EffectMetric,
    alternative: Alternative,
) -> Result<SuperaddReport> {
    let pairs = select_top_combinations(grid, k)
        .into_iter()
        .map(|p| Ok((p, superadd_samples(grid, p, metric)?)))
        .collect::<Result<Vec<_>>>()?;
    superadd_test(&pairs, alternative)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patching::{GridCell, SampleScore};
    use proptest::prelude::*;

    fn cell(i: usize, j: usize, rank: f64) -> GridCell {
        GridCell {
            layer_i: i,
            layer_j: j,
            mean_rank_effect: rank,
            mean_logit_effect: 0.0,
            n_samples: 1,
        }
    }

    fn result(rank: f64, logit: f64) -> PatchResult {
        PatchResult {
            rank_effect: rank,
            logit_effect: logit,
            rank_target: 1,
            rank_patched: 1,
            logit_target: 0.0,
            logit_patched: logit,
        }
    }

    #[test]
    fn top_k_returns_all_when_small() {
        let grid = TaskGrid {
            task: "t".into(),
            num_layers: 2,
            cells: vec![cell(1, 1, 0.1), cell(1, 2, 0.3), cell(2, 2, 0.2)],
            samples: vec![],
        };
        assert_eq!(select_top_combinations(&grid, 10), vec![(1, 2), (2, 2), (1, 1)]);
    }

    #[test]
    fn top_k_ties_are_lexicographic() {
        let grid = TaskGrid {
            task: "t".into(),
            num_layers: 3,
            cells: vec![
                cell(1, 1, 0.5),
                cell(1, 2, 0.5),
                cell(1, 3, 0.9),
                cell(2, 2, -0.1),
                cell(2, 3, 0.5),
                cell(3, 3, 0.0),
            ],
            samples: vec![],
        };
        assert_eq!(select_top_combinations(&grid, 4), vec![(1, 3), (1, 1), (1, 2), (2, 3)]);
    }

    #[test]
    fn samples_from_grid_scores() {
        let mut samples = Vec::new();
        for (s, (a, b, c)) in [(0.1, 0.2, 0.5), (0.0, 0.1, 0.05)].into_iter().enumerate() {
            for ((i, j), v) in [((1, 1), a), ((2, 2), b), ((1, 2), c)] {
                samples.push(SampleScore {
                    task: "t".into(),
                    sample: s,
                    layer_i: i,
                    layer_j: j,
                    result: result(v, 10.0 * v),
                });
            }
        }
        let grid = TaskGrid {
            task: "t".into(),
            num_layers: 2,
            cells: vec![],
            samples,
        };
        let got = superadd_samples(&grid, (2, 1), EffectMetric::Rank).unwrap();
        assert_eq!(got.len(), 2);
        assert!((got[0].delta - (0.1 + 0.2 - 0.5)).abs() < 1e-15);
        assert!(got[0].holds);
        assert!(!got[1].holds);
        let diag = superadd_samples(&grid, (1, 1), EffectMetric::Logit).unwrap();
        assert_eq!(diag[0].delta, 1.0);
        assert!(superadd_samples(&grid, (1, 3), EffectMetric::Rank).is_err());
    }

    #[test]
    fn all_minus_one_deltas() {
        let samples: Vec<_> = (0..100).map(|_| SuperaddSample::new(1.0, 0.0, 0.0)).collect();
        let rep = superadd_test(&[((1, 2), samples)], Alternative::Less).unwrap();
        let row = rep.rows[0];
        assert_eq!(row.t_statistic, f64::NEG_INFINITY);
        assert_eq!(row.p_value, 0.0);
        assert_eq!(row.fraction_holding, 1.0);
        assert_eq!(row.mean_delta, -1.0);
        assert!(row.degenerate);
        assert_eq!(row.bool_test.t_statistic, f64::INFINITY);
    }

    #[test]
    fn positive_deltas_give_large_p() {
        let mut rng_state = 12345u64;
        let samples: Vec<_> = (0..50)
            .map(|_| {
                rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let u = (rng_state >> 11) as f64 / (1u64 << 53) as f64;
                SuperaddSample::new(0.0, 0.5 + 0.2 * (u - 0.5), 0.0)
            })
            .collect();
        let rep = superadd_test(&[((1, 1), samples)], Alternative::Less).unwrap();
        assert!(rep.rows[0].t_statistic > 0.0);
        assert!(rep.rows[0].p_value > 0.99);
    }

    #[test]
    fn single_sample_rejected() {
        let s = vec![SuperaddSample::new(1.0, 0.0, 0.0)];
        assert!(superadd_test(&[((1, 1), s)], Alternative::Less).is_err());
    }

    proptest! {
        #[test]
        fn holds_iff_nonpositive_delta(fc in -1.0f64..1.0, fi in -1.0f64..1.0, fj in -1.0f64..1.0) {
            let s = SuperaddSample::new(fc, fi, fj);
            prop_assert_eq!(s.holds, s.delta <= 0.0);
            prop_assert_eq!(s.holds, fc >= fi + fj);
        }

        #[test]
        fn scale_covariance(
            effects in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 3..30),
            exp in -4i32..8,
        ) {
            let c = 2f64.powi(exp);
            let base: Vec<_> = effects.iter().map(|&(a, b, d)| SuperaddSample::new(a, b, d)).collect();
            let scaled: Vec<_> = effects.iter().map(|&(a, b, d)| SuperaddSample::new(c * a, c * b, c * d)).collect();
            let r0 = superadd_test(&[((1, 2), base.clone())], Alternative::Less).unwrap().rows[0];
            let r1 = superadd_test(&[((1, 2), scaled.clone())], Alternative::Less).unwrap().rows[0];
            for (a, b) in base.iter().zip(&scaled) {
                prop_assert_eq!(a.holds, b.holds);
            }
            prop_assert_eq!(r0.fraction_holding, r1.fraction_holding);
            prop_assert_eq!(r0.t_statistic.signum(), r1.t_statistic.signum());
            let frac = base.iter().filter(|s| s.delta <= 0.0).count() as f64 / base.len() as f64;
            prop_assert!((r0.fraction_holding - frac).abs() < 1e-15);
        }
    }
}
