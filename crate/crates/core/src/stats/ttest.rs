// SPDX-License-Identifier: MIT OR Apache-2.0

//! One-sample Student-t test.

use serde::{Deserialize, Serialize};

use super::special::student_t_cdf;
use crate::error::{Error, Result};

/// Alternative hypothesis relative to the null mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alternative {
    /// Population mean below the null.
    #[default]
    Less,
    Greater,
    TwoSided,
}

impl std::str::FromStr for Alternative {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "less" => Ok(Alternative::Less),
            "greater" => Ok(Alternative::Greater),
            "two-sided" => Ok(Alternative::TwoSided),
            other => Err(Error::Stats(format!("unknown alternative {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t_statistic: f64,
    pub p_value: f64,
    pub df: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub n: usize,
    /// Zero sample variance: `t` is ±∞ (or NaN when the mean equals the null).
    pub degenerate: bool,
}

fn p_from_t(t: f64, df: f64, alt: Alternative) -> f64 {
    match alt {
        Alternative::Less => student_t_cdf(t, df),
        Alternative::Greater => student_t_cdf(-t, df),
        Alternative::TwoSided => (2.0 * student_t_cdf(-t.abs(), df)).min(1.0),
    }
}

/// Test `mean(samples) = null_mean` against `alt`.
///
/// With zero variance the statistic is `±∞` by the sign of `mean − null_mean`
/// and `p` is the corresponding limit (0 or 1); equal means give NaN.
pub fn one_sample_t_test(samples: &[f64], null_mean: f64, alt: Alternative) -> Result<TTest> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::Stats(format!("t-test needs at least 2 samples, got {n}")));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Stats("t-test samples must be finite".into()));
    }
    let nf = n as f64;
    // Constant samples are detected exactly; summation rounding would
    // otherwise leave a tiny spurious variance.
    let constant = samples.iter().all(|&v| v == samples[0]);
    let mean = if constant { samples[0] } else { samples.iter().sum::<f64>() / nf };
    let ss: f64 = samples.iter().map(|v| (v - mean) * (v - mean)).sum();
    let std_dev = if constant { 0.0 } else { (ss / (nf - 1.0)).sqrt() };
    let df = (n - 1) as f64;
    let diff = mean - null_mean;

    let (t_statistic, degenerate) = if std_dev == 0.0 {
        let t = if diff < 0.0 {
            f64::NEG_INFINITY
        } else if diff > 0.0 {
            f64::INFINITY
        } else {
            f64::NAN
        };
        (t, true)
    } else {
        (diff / (std_dev / nf.sqrt()), false)
    };
    Ok(TTest {
        t_statistic,
        p_value: p_from_t(t_statistic, df, alt),
        df: n - 1,
        mean,
        std_dev,
        n,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_example() {
        // mean 0.5, sd = sqrt(0.5/3) over n = 4.
        let x = [0.0, 1.0, 0.5, 0.5];
        let r = one_sample_t_test(&x, 0.0, Alternative::Greater).unwrap();
        let se = (0.5f64 / 3.0).sqrt() / 2.0;
        assert!((r.t_statistic - 0.5 / se).abs() < 1e-12);
        assert_eq!(r.df, 3);
        let two = one_sample_t_test(&x, 0.0, Alternative::TwoSided).unwrap();
        assert!((two.p_value - 2.0 * r.p_value).abs() < 1e-15);
        let less = one_sample_t_test(&x, 0.0, Alternative::Less).unwrap();
        assert!((less.p_value + r.p_value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_cases() {
        let neg = one_sample_t_test(&[-1.0; 100], 0.0, Alternative::Less).unwrap();
        assert_eq!(neg.t_statistic, f64::NEG_INFINITY);
        assert_eq!(neg.p_value, 0.0);
        assert!(neg.degenerate);
        let tenth = one_sample_t_test(&[0.1; 100], 0.0, Alternative::Less).unwrap();
        assert_eq!(tenth.t_statistic, f64::INFINITY);
        assert_eq!(tenth.mean, 0.1);
        let pos = one_sample_t_test(&[2.0; 5], 0.0, Alternative::Less).unwrap();
        assert_eq!(pos.t_statistic, f64::INFINITY);
        assert_eq!(pos.p_value, 1.0);
        let flat = one_sample_t_test(&[0.0; 5], 0.0, Alternative::Less).unwrap();
        assert!(flat.t_statistic.is_nan() && flat.degenerate);
    }

    #[test]
    fn too_few_samples() {
        assert!(one_sample_t_test(&[1.0], 0.0, Alternative::Less).is_err());
        assert!(one_sample_t_test(&[1.0, f64::NAN], 0.0, Alternative::Less).is_err());
    }
}
