use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative size below which a diagonal entry of R marks a column as a
/// linear combination of the columns before it.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct WlsFit {
    pub coefficients: DVector<f64>,
    /// Unweighted residuals `y - X beta`.
    pub residuals: DVector<f64>,
}

/// Indices of columns that are (numerically) linear combinations of
/// earlier columns, found from the diagonal of an unpivoted QR.
pub fn check_rank(x: &DMatrix<f64>) -> std::result::Result<(), Vec<usize>> {
    let (n, k) = x.shape();
    if n < k {
        return Err((n..k).collect());
    }
    let r = x.clone().qr().r();
    let scale = (0..k).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    let deficient: Vec<usize> = (0..k)
        .filter(|&j| r[(j, j)].abs() <= RANK_TOL * scale.max(f64::MIN_POSITIVE))
        .collect();
    if deficient.is_empty() {
        Ok(())
    } else {
        Err(deficient)
    }
}

fn validate(x: &DMatrix<f64>, y: &[f64], w: &[f64]) -> Result<()> {
    if y.len() != x.nrows() || w.len() != x.nrows() {
        return Err(Error::invalid("design, outcome and weight lengths differ"));
    }
    if x.iter().chain(y).chain(w).any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "non-finite input to weighted least squares".into(),
        ));
    }
    if w.iter().any(|&v| v <= 0.0) {
        return Err(Error::invalid("weights must be positive"));
    }
    Ok(())
}

/// `sqrt(w_i)`-scaled copy of `x`.
pub(crate) fn scale_rows(x: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut xs = x.clone();
    for (i, wi) in w.iter().enumerate() {
        let s = wi.sqrt();
        xs.row_mut(i).scale_mut(s);
    }
    xs
}

/// Minimises `sum_i w_i (y_i - x_i' beta)^2` through a Householder QR of
/// the row-scaled system.
pub fn wls_fit(x: &DMatrix<f64>, y: &[f64], w: &[f64]) -> Result<WlsFit> {
    validate(x, y, w)?;
    let k = x.ncols();
    let xs = scale_rows(x, w);
    let mut ys = DVector::from_iterator(y.len(), y.iter().zip(w).map(|(yi, wi)| yi * wi.sqrt()));
    if let Err(cols) = check_rank(&xs) {
        return Err(Error::RankDeficient {
            columns: cols.iter().map(|j| format!("column {j}")).collect(),
        });
    }
    let qr = xs.qr();
    qr.q_tr_mul(&mut ys);
    let r = qr.r();
    let qty = ys.rows(0, k).into_owned();
    let coefficients = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Numerical("singular triangular factor".into()))?;
    let fitted = x * &coefficients;
    let residuals =
        DVector::from_iterator(y.len(), y.iter().zip(fitted.iter()).map(|(a, b)| a - b));
    Ok(WlsFit {
        coefficients,
        residuals,
    })
}

/// `(X'WX)^{-1}` from the triangular factor of the scaled design.
pub(crate) fn bread(x: &DMatrix<f64>, w: &[f64]) -> Result<DMatrix<f64>> {
    let k = x.ncols();
    let r = scale_rows(x, w).qr().r();
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::Numerical("singular triangular factor".into()))?;
    Ok(&r_inv * r_inv.transpose())
}
