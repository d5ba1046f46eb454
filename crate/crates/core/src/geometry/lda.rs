// SPDX-License-Identifier: MIT OR Apache-2.0

//! Multi-class Fisher LDA.
//!
//! Directions maximize between-class over within-class scatter: eigenvectors
//! of `(S_w + λI)⁻¹ S_b`, solved as the symmetric problem
//! `L⁻¹ S_b L⁻ᵀ` after Cholesky factorization `S_w + λI = L Lᵀ`, with
//! `λ = 1e-6 · tr(S_w) / dim`.

use ndarray::{Array1, Array2, Axis};

use super::linalg::{cholesky, jacobi_eigen, solve_lower, solve_lower_transpose};
use super::RepresentationSet;
use crate::error::{Error, Result};

const RIDGE: f64 = 1e-6;
const DEGENERATE: f64 = 1e-20;
const JACOBI_TOL: f64 = 1e-10;
const JACOBI_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct LdaProjection {
    /// Unit-norm directions as rows, `out_dim × dim`.
    pub directions: Array2<f64>,
    /// Generalized eigenvalues (Fisher ratios), descending.
    pub eigenvalues: Vec<f64>,
    /// Global mean subtracted before projecting.
    pub mean: Array1<f64>,
    /// `n × out_dim` coordinates in sample order.
    pub coords: Array2<f64>,
}

/// Within- and between-class scatter plus class and global means.
pub(crate) fn scatter(x: &Array2<f64>, labels: &[usize], num_classes: usize) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
    let dim = x.ncols();
    let mean = x.mean_axis(Axis(0)).expect("nonempty");
    let mut sums = Array2::<f64>::zeros((num_classes, dim));
    let mut counts = vec![0usize; num_classes];
    for (row, &c) in x.rows().into_iter().zip(labels) {
        let mut s = sums.row_mut(c);
        s += &row;
        counts[c] += 1;
    }
    let mut s_w = Array2::<f64>::zeros((dim, dim));
    let mut s_b = Array2::<f64>::zeros((dim, dim));
    let means: Vec<Array1<f64>> = (0..num_classes)
        .map(|c| sums.row(c).mapv(|v| v / counts[c].max(1) as f64))
        .collect();
    for (row, &c) in x.rows().into_iter().zip(labels) {
        let diff = &row - &means[c];
        outer_add(&mut s_w, &diff, 1.0);
    }
    for (c, m) in means.iter().enumerate() {
        let diff = m - &mean;
        outer_add(&mut s_b, &diff, counts[c] as f64);
    }
    (s_w, s_b, mean)
}

fn outer_add(acc: &mut Array2<f64>, v: &Array1<f64>, weight: f64) {
    let n = v.len();
    for i in 0..n {
        let vi = v[i] * weight;
        for j in 0..n {
            acc[[i, j]] += vi * v[j];
        }
    }
}

/// Project representations onto the top `out_dim` Fisher directions.
pub fn lda_project(reps: &RepresentationSet, out_dim: usize) -> Result<LdaProjection> {
    let num_classes = reps.num_classes();
    if num_classes < 2 {
        return Err(Error::Geometry(format!("LDA needs at least 2 classes, got {num_classes}")));
    }
    if out_dim == 0 || out_dim >= num_classes {
        return Err(Error::Geometry(format!(
            "out_dim {out_dim} must be in 1..={} for {num_classes} classes",
            num_classes - 1
        )));
    }
    let dim = reps.dim();
    if out_dim > dim {
        return Err(Error::Geometry(format!("out_dim {out_dim} exceeds dimension {dim}")));
    }
    let (s_w, s_b, mean) = scatter(&reps.x, &reps.labels, num_classes);
    let tr_w = s_w.diag().sum();
    let tr_b = s_b.diag().sum();
    // Class means that differ only by summation rounding count as equal.
    let energy: f64 = reps.x.iter().map(|v| v * v).sum();
    if tr_b <= DEGENERATE * energy {
        return Err(Error::Geometry("class means coincide; no discriminant direction".into()));
    }
    // Zero within-class scatter (every class a single repeated point) falls
    // back to the between-class trace for the ridge scale.
    let lambda = RIDGE * if tr_w > 0.0 { tr_w } else { tr_b } / dim as f64;
    let mut reg = s_w;
    for i in 0..dim {
        reg[[i, i]] += lambda;
    }
    let l = cholesky(&reg)?;
    let tmp = solve_lower(&l, &s_b);
    let sym = solve_lower(&l, &tmp.t().to_owned());
    let (values, vectors) = jacobi_eigen(&sym, JACOBI_TOL, JACOBI_SWEEPS);

    let mut directions = Array2::<f64>::zeros((out_dim, dim));
    for k in 0..out_dim {
        let v = vectors.column(k).insert_axis(Axis(1)).to_owned();
        let mut w = solve_lower_transpose(&l, &v).column(0).to_owned();
        let norm = w.dot(&w).sqrt();
        w /= norm;
        if let Some(&first) = w.iter().find(|x| x.abs() > 1e-12) {
            if first < 0.0 {
                w.mapv_inplace(|x| -x);
            }
        }
        directions.row_mut(k).assign(&w);
    }
    let centered = &reps.x - &mean;
    let coords = centered.dot(&directions.t());
    Ok(LdaProjection {
        directions,
        eigenvalues: values.iter().take(out_dim).copied().collect(),
        mean,
        coords,
    })
}

/// Between-class over within-class variance of projected coordinates
/// (ratio of traces).
pub fn separation_ratio(coords: &Array2<f64>, labels: &[usize], num_classes: usize) -> f64 {
    let (s_w, s_b, _) = scatter(coords, labels, num_classes);
    s_b.diag().sum() / s_w.diag().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn set(x: Array2<f64>, labels: Vec<usize>, classes: usize) -> RepresentationSet {
        RepresentationSet::new(x, labels, (0..classes).map(|c| format!("c{c}")).collect()).unwrap()
    }

    #[test]
    fn two_repeated_points() {
        let x = array![[1.0, 2.0], [1.0, 2.0], [1.0, 2.0], [4.0, -1.0], [4.0, -1.0], [4.0, -1.0]];
        let proj = lda_project(&set(x, vec![0, 0, 0, 1, 1, 1], 2), 1).unwrap();
        let c = proj.coords.column(0);
        assert_eq!(c[0], c[1]);
        assert_eq!(c[3], c[5]);
        assert!((c[0] - c[3]).abs() > 1.0);
        assert!((proj.directions.row(0).dot(&proj.directions.row(0)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_gaussian_clouds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sigma = 0.1;
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for c in 0..2 {
            for _ in 0..100 {
                let center = if c == 0 { 0.0 } else { 10.0 };
                rows.push(center + sigma * rng.sample::<f64, _>(StandardNormal));
                for _ in 0..2 {
                    rows.push(sigma * rng.sample::<f64, _>(StandardNormal));
                }
                labels.push(c);
            }
        }
        let x = Array2::from_shape_vec((200, 3), rows).unwrap();
        let proj = lda_project(&set(x, labels.clone(), 2), 1).unwrap();
        let coords = proj.coords.column(0);
        let mean_of = |c: usize| {
            let v: Vec<f64> = coords.iter().zip(&labels).filter(|(_, &l)| l == c).map(|(v, _)| *v).collect();
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64;
            (m, var.sqrt())
        };
        let (m0, s0) = mean_of(0);
        let (m1, s1) = mean_of(1);
        assert!((m0 - m1).abs() >= 50.0 * s0.max(s1));
    }

    #[test]
    fn rank_bound_and_degenerate() {
        let x = array![[0.0], [1.0], [2.0], [3.0]];
        assert!(lda_project(&set(x.clone(), vec![0, 0, 1, 1], 2), 2).is_err());
        let same = array![[0.1, 0.3], [0.1, 0.3], [0.1, 0.3], [0.1, 0.3], [0.1, 0.3]];
        assert!(lda_project(&set(same, vec![0, 0, 1, 1, 1], 2), 1).is_err());
    }

    #[test]
    fn rotation_invariant_up_to_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (n, dim) = (60, 4);
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let x = Array2::from_shape_fn((n, dim), |(i, j)| {
            (labels[i] * (j + 1)) as f64 + rng.sample::<f64, _>(StandardNormal)
        });
        // Random orthogonal matrix from the eigenvectors of a random symmetric one.
        let a = Array2::from_shape_fn((dim, dim), |_| rng.sample::<f64, _>(StandardNormal));
        let (_, q) = jacobi_eigen(&(&a + &a.t()), 1e-14, 100);
        let p0 = lda_project(&set(x.clone(), labels.clone(), 3), 2).unwrap();
        let p1 = lda_project(&set(x.dot(&q.t()), labels, 3), 2).unwrap();
        for k in 0..2 {
            let a = p0.coords.column(k);
            let b = p1.coords.column(k);
            let same = a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() < 1e-6);
            let flip = a.iter().zip(b.iter()).all(|(x, y)| (x + y).abs() < 1e-6);
            assert!(same || flip, "direction {k} not invariant");
        }
    }
}
