//! Thin wrappers over nalgebra factorizations with crate error mapping.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub(crate) fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::SingularDesign("matrix is not positive definite".into()))
}

/// Solve `m x = b` for symmetric positive definite `m`.
pub(crate) fn spd_solve(m: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.solve(b))
        .ok_or_else(|| Error::SingularDesign("normal equations are singular".into()))
}

/// Extreme eigenvalues `(min, max)` of a symmetric matrix.
pub(crate) fn eigen_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 0 {
        return (f64::INFINITY, f64::NEG_INFINITY);
    }
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// Least-squares coefficients of `y` on the columns of `x` (no intercept).
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if x.nrows() <= x.ncols() {
        return Err(Error::SingularDesign(format!(
            "least squares needs more rows than columns ({} x {})",
            x.nrows(),
            x.ncols()
        )));
    }
    let gram = x.tr_mul(x);
    let (min, max) = eigen_extremes(&gram);
    if !(min > 0.0) || max / min > 1e12 {
        return Err(Error::SingularDesign(format!(
            "design is rank deficient (eigenvalues {min:e} .. {max:e})"
        )));
    }
    spd_solve(&gram, &x.tr_mul(y))
}
