//! Brute-force reference implementations of weighted least squares and the
//! cluster sandwich. They share no code with [`crate::estimator`]: plain
//! nested vectors, normal equations, Gaussian elimination and explicit loops.
//! Meant for small instances only.

#![allow(clippy::needless_range_loop)]

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::estimator::CrVariant;

type Matrix = Vec<Vec<f64>>;

fn check_shapes(x: &[Vec<f64>], n: usize, w: &[f64]) -> Result<usize> {
    if x.is_empty() || x.len() != n || w.len() != n {
        return Err(Error::invalid("oracle: inconsistent dimensions"));
    }
    let k = x[0].len();
    if k == 0 || x.iter().any(|r| r.len() != k) {
        return Err(Error::invalid("oracle: ragged design"));
    }
    Ok(k)
}

/// X'WX as a dense k x k matrix.
fn cross_product(x: &[Vec<f64>], w: &[f64], k: usize) -> Matrix {
    let mut a = vec![vec![0.0; k]; k];
    for (row, &wi) in x.iter().zip(w) {
        for j in 0..k {
            for l in 0..k {
                a[j][l] += row[j] * wi * row[l];
            }
        }
    }
    a
}

/// Solves `a z = b` for every column of `b` by elimination with partial
/// pivoting. `a` and `b` are consumed.
fn gauss_solve(mut a: Matrix, mut b: Matrix) -> Result<Matrix> {
    let k = a.len();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    for col in 0..k {
        let mut pivot = col;
        for r in col + 1..k {
            if a[r][col].abs() > a[pivot][col].abs() {
                pivot = r;
            }
        }
        if a[pivot][col].abs() <= 1e-13 * scale || scale == 0.0 {
            return Err(Error::Numerical(format!(
                "oracle: singular system at column {col}"
            )));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for r in col + 1..k {
            let f = a[r][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for c in col..k {
                a[r][c] -= f * a[col][c];
            }
            for c in 0..b[r].len() {
                b[r][c] -= f * b[col][c];
            }
        }
    }
    let m = b[0].len();
    let mut z = vec![vec![0.0; m]; k];
    for c in 0..m {
        for r in (0..k).rev() {
            let mut s = b[r][c];
            for j in r + 1..k {
                s -= a[r][j] * z[j][c];
            }
            z[r][c] = s / a[r][r];
        }
    }
    Ok(z)
}

/// Weighted least squares through the normal equations (X'WX) b = X'Wy.
pub fn oracle_ols(x: &[Vec<f64>], y: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    let k = check_shapes(x, y.len(), w)?;
    let a = cross_product(x, w, k);
    let mut b = vec![vec![0.0]; k];
    for ((row, &wi), &yi) in x.iter().zip(w).zip(y) {
        for j in 0..k {
            b[j][0] += row[j] * wi * yi;
        }
    }
    Ok(gauss_solve(a, b)?.into_iter().map(|r| r[0]).collect())
}

/// Cluster sandwich `c * B M B` with `B = (X'WX)^-1` and
/// `M = sum_g s_g s_g'`, `s_g = sum_{i in g} x_i w_i e_i`.
pub fn oracle_sandwich(
    x: &[Vec<f64>],
    e: &[f64],
    w: &[f64],
    clusters: &[usize],
    variant: CrVariant,
) -> Result<Matrix> {
    let k = check_shapes(x, e.len(), w)?;
    let n = e.len();
    if clusters.len() != n {
        return Err(Error::invalid("oracle: cluster ids do not match rows"));
    }
    let labels: BTreeSet<usize> = clusters.iter().copied().collect();
    let g = labels.len();
    if g < 2 || n <= k {
        return Err(Error::invalid(
            "oracle: need two clusters and more rows than columns",
        ));
    }

    let identity: Matrix = (0..k)
        .map(|j| (0..k).map(|l| if j == l { 1.0 } else { 0.0 }).collect())
        .collect();
    let bread = gauss_solve(cross_product(x, w, k), identity)?;

    let mut meat = vec![vec![0.0; k]; k];
    for &label in &labels {
        let mut s = vec![0.0; k];
        for i in 0..n {
            if clusters[i] == label {
                for j in 0..k {
                    s[j] += x[i][j] * w[i] * e[i];
                }
            }
        }
        for j in 0..k {
            for l in 0..k {
                meat[j][l] += s[j] * s[l];
            }
        }
    }

    let c = match variant {
        CrVariant::Cr0 => 1.0,
        CrVariant::Cr1 => {
            (g as f64 / (g as f64 - 1.0)) * ((n as f64 - 1.0) / (n as f64 - k as f64))
        }
    };
    let mut out = vec![vec![0.0; k]; k];
    for j in 0..k {
        for l in 0..k {
            let mut v = 0.0;
            for p in 0..k {
                for q in 0..k {
                    v += bread[j][p] * meat[p][q] * bread[q][l];
                }
            }
            out[j][l] = c * v;
        }
    }
    Ok(out)
}
