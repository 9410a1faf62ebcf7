use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::covariance::{cluster_cov, CrVariant};
use super::design::{design, Specification};
use super::panel::{Panel, PanelWindow};
use super::wls::{bread, wls_fit};
use crate::error::Result;

/// Two-sided p-value of `estimate / se` against the standard normal.
/// `None` when the standard error is zero or undefined.
pub fn p_value(estimate: f64, se: f64) -> Option<f64> {
    if !(se > 0.0 && se.is_finite()) {
        return None;
    }
    let z = (estimate / se).abs();
    Some(erfc(z / std::f64::consts::SQRT_2))
}

/// Significance markers: `*` p < 0.05, `**` p < 0.01, `***` p < 0.001.
pub fn stars(p: Option<f64>) -> &'static str {
    match p {
        Some(p) if p < 0.001 => "***",
        Some(p) if p < 0.01 => "**",
        Some(p) if p < 0.05 => "*",
        _ => "",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub p: Option<f64>,
    pub stars: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DidResult {
    pub specification: Specification,
    /// All coefficients in design-matrix order.
    pub coefficients: Vec<Coefficient>,
    /// Positions of the treatment interactions in `coefficients`.
    pub interactions: Vec<usize>,
    pub covariance: DMatrix<f64>,
    pub residuals: Vec<f64>,
    pub n_obs: usize,
    pub n_clusters: usize,
    pub window: PanelWindow,
    pub cr_variant: CrVariant,
}

impl DidResult {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    pub fn interaction_terms(&self) -> impl Iterator<Item = &Coefficient> + '_ {
        self.interactions
            .iter()
            .map(move |&j| &self.coefficients[j])
    }
}

/// Zeroes rows and columns whose cluster variance is rounding noise, taken
/// as below `1e-12` of the homoskedastic variance `s^2 (X'WX)^-1_jj`.
/// With two clusters the sandwich is exactly singular in some directions and
/// the QR solve leaves values around `1e-20` there, which would otherwise
/// turn into arbitrary significance stars.
fn zero_degenerate_variances(
    cov: &mut DMatrix<f64>,
    x: &DMatrix<f64>,
    residuals: &[f64],
    w: &[f64],
) -> Result<()> {
    let (n, k) = x.shape();
    let s2 = residuals.iter().zip(w).map(|(e, w)| w * e * e).sum::<f64>() / (n - k) as f64;
    let b = bread(x, w)?;
    for j in 0..k {
        if cov[(j, j)] <= 1e-12 * s2 * b[(j, j)] {
            cov.row_mut(j).fill(0.0);
            cov.column_mut(j).fill(0.0);
        }
    }
    Ok(())
}

/// Design, weighted fit and cluster-robust covariance for one panel.
pub fn estimate(panel: &Panel, spec: Specification, cr: CrVariant) -> Result<DidResult> {
    let design = design(panel, spec)?;
    let y = panel.outcomes();
    let w = panel.weights();
    let fit = wls_fit(&design.x, &y, &w)?;
    let residuals: Vec<f64> = fit.residuals.iter().copied().collect();
    let mut covariance = cluster_cov(&design.x, &residuals, &w, &panel.cluster_ids(), cr)?;
    zero_degenerate_variances(&mut covariance, &design.x, &residuals, &w)?;
    let coefficients = design
        .columns
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let estimate = fit.coefficients[j];
            let se = covariance[(j, j)].max(0.0).sqrt();
            let p = p_value(estimate, se);
            Coefficient {
                name: name.clone(),
                estimate,
                se,
                p,
                stars: stars(p).to_string(),
            }
        })
        .collect();
    Ok(DidResult {
        specification: spec,
        coefficients,
        interactions: design.interactions,
        covariance,
        residuals,
        n_obs: panel.n_obs(),
        n_clusters: panel.n_clusters(),
        window: panel.window,
        cr_variant: cr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn star_thresholds() {
        assert_eq!(stars(Some(0.0009)), "***");
        assert_eq!(stars(Some(0.001)), "**");
        assert_eq!(stars(Some(0.0099)), "**");
        assert_eq!(stars(Some(0.01)), "*");
        assert_eq!(stars(Some(0.0499)), "*");
        assert_eq!(stars(Some(0.05)), "");
        assert_eq!(stars(None), "");
    }

    #[test]
    fn normal_p_values() {
        let p = p_value(1.959963984540054, 1.0).unwrap();
        assert!((p - 0.05).abs() < 1e-10, "{p}");
        assert!((p_value(-2.5758293035489, 1.0).unwrap() - 0.01).abs() < 1e-10);
        assert_eq!(p_value(0.0, 1.0), Some(1.0));
        assert_eq!(p_value(1.0, 0.0), None);
    }

    #[test]
    fn rounding_noise_variances_are_zeroed() {
        let x = DMatrix::from_fn(6, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let e = [0.1, -0.2, 0.05, 0.1, -0.1, 0.05];
        let w = [1.0; 6];
        let mut cov = DMatrix::from_row_slice(2, 2, &[1e-22, 1e-23, 1e-23, 0.01]);
        zero_degenerate_variances(&mut cov, &x, &e, &w).unwrap();
        assert_eq!(cov, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 0.01]));
    }
}
