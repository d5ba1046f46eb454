// SPDX-License-Identifier: MIT OR Apache-2.0

//! Closed-form Student-t CDF for integer degrees of freedom (finite
//! trigonometric series), and a one-sample t-test built on it. Test oracle.

#![allow(dead_code)]

use std::f64::consts::PI;

/// `P(T <= t)` for `T ~ t(df)`, `df >= 1`.
pub fn t_cdf(t: f64, df: usize) -> f64 {
    if t == f64::INFINITY {
        return 1.0;
    }
    if t == f64::NEG_INFINITY {
        return 0.0;
    }
    let theta = (t / (df as f64).sqrt()).atan();
    let (s, c) = theta.sin_cos();
    let c2 = c * c;
    // a = P(|T| <= |t|) with the sign of t.
    let a = if df % 2 == 1 {
        let mut sum = 0.0;
        if df > 1 {
            let mut term = c;
            sum = term;
            let mut k = 1;
            while 2 * k + 1 < df {
                term *= c2 * (2 * k) as f64 / (2 * k + 1) as f64;
                sum += term;
                k += 1;
            }
        }
        2.0 / PI * (theta + s * sum)
    } else {
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1;
        while 2 * k < df {
            term *= c2 * (2 * k - 1) as f64 / (2 * k) as f64;
            sum += term;
            k += 1;
        }
        s * sum
    };
    0.5 * (1.0 + a)
}

pub struct OracleTest {
    pub t: f64,
    pub p_less: f64,
    pub p_greater: f64,
    pub p_two_sided: f64,
}

/// Kahan-summed mean and two-pass variance.
pub fn oracle_t_test(x: &[f64], null_mean: f64) -> OracleTest {
    let n = x.len() as f64;
    let kahan = |it: &mut dyn Iterator<Item = f64>| {
        let (mut s, mut comp) = (0.0f64, 0.0f64);
        for v in it {
            let y = v - comp;
            let t = s + y;
            comp = (t - s) - y;
            s = t;
        }
        s
    };
    let all_equal = x.iter().all(|&v| v == x[0]);
    let mean = if all_equal { x[0] } else { kahan(&mut x.iter().copied()) / n };
    let ss = kahan(&mut x.iter().map(|v| (v - mean) * (v - mean)));
    let sd = if all_equal { 0.0 } else { (ss / (n - 1.0)).sqrt() };
    let diff = mean - null_mean;
    let t = if sd == 0.0 {
        if diff < 0.0 {
            f64::NEG_INFINITY
        } else if diff > 0.0 {
            f64::INFINITY
        } else {
            f64::NAN
        }
    } else {
        diff / (sd / n.sqrt())
    };
    let df = x.len() - 1;
    OracleTest {
        t,
        p_less: t_cdf(t, df),
        p_greater: t_cdf(-t, df),
        p_two_sided: (2.0 * t_cdf(-t.abs(), df)).min(1.0),
    }
}
