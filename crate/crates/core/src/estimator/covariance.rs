use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::wls::bread;
use crate::error::{Error, Result};

/// Small-sample scaling applied to the cluster sandwich.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrVariant {
    /// No correction.
    Cr0,
    /// `G/(G-1) * (N-1)/(N-k)`.
    #[default]
    Cr1,
}

impl CrVariant {
    pub fn factor(self, n_clusters: usize, n_obs: usize, n_params: usize) -> f64 {
        match self {
            CrVariant::Cr0 => 1.0,
            CrVariant::Cr1 => {
                let g = n_clusters as f64;
                let n = n_obs as f64;
                let k = n_params as f64;
                g / (g - 1.0) * (n - 1.0) / (n - k)
            }
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            CrVariant::Cr0 => "cr0",
            CrVariant::Cr1 => "cr1",
        }
    }
}

impl fmt::Display for CrVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CrVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cr0" => Ok(CrVariant::Cr0),
            "cr1" => Ok(CrVariant::Cr1),
            other => Err(Error::invalid(format!("unknown CR variant `{other}`"))),
        }
    }
}

/// Cluster-robust covariance
/// `c * B [sum_g X_g' W_g e_g e_g' W_g X_g] B` with `B = (X'WX)^{-1}`.
pub fn cluster_cov(
    x: &DMatrix<f64>,
    residuals: &[f64],
    w: &[f64],
    clusters: &[usize],
    variant: CrVariant,
) -> Result<DMatrix<f64>> {
    let (n, k) = x.shape();
    if residuals.len() != n || w.len() != n || clusters.len() != n {
        return Err(Error::invalid("covariance inputs have mismatched lengths"));
    }
    if n <= k {
        return Err(Error::invalid(format!(
            "need more observations ({n}) than parameters ({k})"
        )));
    }
    let mut scores: BTreeMap<usize, DVector<f64>> = BTreeMap::new();
    for i in 0..n {
        let s = scores
            .entry(clusters[i])
            .or_insert_with(|| DVector::zeros(k));
        let we = w[i] * residuals[i];
        for j in 0..k {
            s[j] += x[(i, j)] * we;
        }
    }
    let g = scores.len();
    if g < 2 {
        return Err(Error::invalid(
            "cluster-robust covariance needs at least two clusters",
        ));
    }
    let mut meat = DMatrix::zeros(k, k);
    for s in scores.values() {
        meat.ger(1.0, s, s, 1.0);
    }
    let b = bread(x, w)?;
    let v = &b * meat * &b * variant.factor(g, n, k);
    Ok((&v + v.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (DMatrix<f64>, Vec<f64>, Vec<f64>) {
        let x = DMatrix::from_fn(8, 2, |i, j| if j == 0 { 1.0 } else { i as f64 * 0.5 });
        let e = vec![0.3, -0.1, 0.4, -0.6, 0.2, 0.05, -0.15, -0.1];
        let w = vec![1.0, 2.0, 1.0, 3.0, 1.0, 2.0, 1.0, 1.0];
        (x, e, w)
    }

    #[test]
    fn zero_residuals_give_zero_matrix() {
        let (x, _, w) = fixture();
        let v = cluster_cov(&x, &[0.0; 8], &w, &[0, 0, 0, 0, 1, 1, 1, 1], CrVariant::Cr1).unwrap();
        assert!(v.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn singleton_clusters_match_hc0_form() {
        let (x, e, w) = fixture();
        let ids: Vec<usize> = (0..8).collect();
        let v = cluster_cov(&x, &e, &w, &ids, CrVariant::Cr0).unwrap();
        // HC0 sandwich with weights: B (sum_i w_i^2 e_i^2 x_i x_i') B
        let b = bread(&x, &w).unwrap();
        let mut meat = DMatrix::zeros(2, 2);
        for i in 0..8 {
            let xi = x.row(i).transpose();
            meat += &xi * xi.transpose() * (w[i] * e[i]).powi(2);
        }
        let hc0 = &b * meat * &b;
        assert!((&v - &hc0).amax() < 1e-12);
        let v1 = cluster_cov(&x, &e, &w, &ids, CrVariant::Cr1).unwrap();
        let c = 8.0 / 7.0 * 7.0 / 6.0;
        assert!((&v1 - &hc0 * c).amax() < 1e-12);
    }

    #[test]
    fn needs_two_clusters_and_spare_rows() {
        let (x, e, w) = fixture();
        assert!(cluster_cov(&x, &e, &w, &[0; 8], CrVariant::Cr1).is_err());
        let x3 = x.rows(0, 2).into_owned();
        assert!(cluster_cov(&x3, &e[..2], &w[..2], &[0, 1], CrVariant::Cr1).is_err());
    }

    #[test]
    fn parse_variant() {
        assert_eq!("CR1".parse::<CrVariant>().unwrap(), CrVariant::Cr1);
        assert_eq!("cr0".parse::<CrVariant>().unwrap(), CrVariant::Cr0);
        assert!("cr2".parse::<CrVariant>().is_err());
    }
}
