//! Reference implementations shared by the oracle and acceptance tests.
//! Written from the definitions, deliberately without touching the library's
//! numerics.

#![allow(dead_code, clippy::needless_range_loop)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

/// Eigenpairs of a symmetric matrix by cyclic Jacobi rotations, sorted by
/// descending eigenvalue. Eigenvectors are the columns of the returned matrix.
pub fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>().max(1e-300);
        if off <= 1e-32 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order
        .iter()
        .map(|&i| v.iter().map(|row| row[i]).collect())
        .collect();
    (values, vectors)
}

/// Best rank-`n` approximation of `y` as the projection onto the top `n`
/// eigenvectors of `y yᵀ`.
pub fn rank_n_by_eigen(y: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let (rows, cols) = y.shape();
    let gram: Vec<Vec<f64>> = (0..rows)
        .map(|i| {
            (0..rows)
                .map(|j| (0..cols).map(|k| y[(i, k)] * y[(j, k)]).sum())
                .collect()
        })
        .collect();
    let (_, vecs) = jacobi_eigen(gram);
    let mut out = DMatrix::zeros(rows, cols);
    for e in vecs.iter().take(n) {
        for k in 0..cols {
            let coef: f64 = (0..rows).map(|i| e[i] * y[(i, k)]).sum();
            for i in 0..rows {
                out[(i, k)] += e[i] * coef;
            }
        }
    }
    out
}

fn orthonormal_columns<R: Rng>(rng: &mut R, rows: usize, k: usize) -> Vec<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    while cols.len() < k {
        let mut v: Vec<f64> = (0..rows).map(|_| rng.sample(StandardNormal)).collect();
        for _ in 0..2 {
            for c in &cols {
                let d: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(c).for_each(|(a, b)| *a -= d * b);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            cols.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    cols
}

/// Random `rows × cols` window whose singular values drop by at least a
/// third from one to the next, so the rank-n truncation is well defined.
pub fn separated_window<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    let k = rows.min(cols);
    let u = orthonormal_columns(rng, rows, k);
    let v = orthonormal_columns(rng, cols, k);
    let mut s = 10.0 * rng.random_range(0.5..2.0);
    let mut y = DMatrix::zeros(rows, cols);
    for j in 0..k {
        for r in 0..rows {
            for c in 0..cols {
                y[(r, c)] += s * u[j][r] * v[j][c];
            }
        }
        s *= rng.random_range(0.2..0.66);
    }
    // Temperature-like offset keeps the dominant mode positive.
    y.add_scalar(rng.random_range(0.0..1.0))
}

/// Fuzzy entropy by enumerating every ordered pair of delay vectors.
pub fn fuzzy_entropy_by_pairs(x: &[f64], m: usize, r_factor: f64) -> f64 {
    let len = x.len();
    let mean = x.iter().sum::<f64>() / len as f64;
    let sd = (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / len as f64).sqrt();
    let r = r_factor * sd;
    let count = len - m;
    let phi = |dim: usize| {
        let vec_of = |j: usize| -> Vec<f64> {
            let seg = &x[j..j + dim];
            let u = seg.iter().sum::<f64>() / dim as f64;
            seg.iter().map(|s| (s - u).abs()).collect()
        };
        let mut total = 0.0;
        let mut pairs = 0usize;
        for j in 0..count {
            for q in 0..count {
                if j == q {
                    continue;
                }
                let (a, b) = (vec_of(j), vec_of(q));
                let d = a.iter().zip(&b).map(|(p, s)| (p - s).abs()).fold(0.0, f64::max);
                total += (-(2f64.ln()) * (d / r).powi(2)).exp();
                pairs += 1;
            }
        }
        total / pairs as f64
    };
    phi(m).ln() - phi(m + 1).ln()
}
