//! Estimators of the precision-matrix diagonal `d_jj`, the factor that links
//! regression coefficients to semi-standard partial covariances.
//!
//! Two regimes:
//! * `n > p`: diagonal of the inverse sample covariance (or the OLS residual
//!   variant, which differs by the factor `(n - p + 1) / n`).
//! * `n <= p`: inverse residual variance of a square-root Lasso regression of
//!   each column on all others.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{eigen_extremes, spd_inverse, spd_solve};

/// Cap on the condition number of `X^T X / n` for the sample-precision route.
pub const DEFAULT_CONDITION_CAP: f64 = 1e12;
/// Residual variances below this are treated as an exact fit.
pub const MIN_RESIDUAL_VARIANCE: f64 = 1e-12;

pub const SQRT_LASSO_MAX_SWEEPS: usize = 100_000;
/// Stop once no coordinate moves the residual by more than this fraction of its starting norm.
pub const SQRT_LASSO_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrecisionMethod {
    SamplePrecision,
    OlsResidual,
    SqrtLasso,
}

/// Which estimator to run; `Auto` picks by regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecisionChoice {
    #[default]
    Auto,
    Sample,
    Ols,
    #[serde(rename = "sqrtlasso")]
    SqrtLasso,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionDiag {
    pub d: Vec<f64>,
    pub method: PrecisionMethod,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lambda_d: Option<f64>,
}

impl PrecisionDiag {
    /// All-ones diagonal; turns every SPAC fit into its plain coefficient-space counterpart.
    pub fn ones(p: usize) -> Self {
        PrecisionDiag {
            d: vec![1.0; p],
            method: PrecisionMethod::SamplePrecision,
            lambda_d: None,
        }
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }
}

fn require_low_dim(data: &Dataset) -> Result<()> {
    if data.n() <= data.p() {
        return Err(Error::Dimension(format!(
            "sample precision needs n > p, got n={}, p={}",
            data.n(),
            data.p()
        )));
    }
    Ok(())
}

/// `d_jj = ((X^T X / n)^{-1})_jj`.
pub fn sample_precision_diag(data: &Dataset) -> Result<PrecisionDiag> {
    sample_precision_diag_with_cap(data, DEFAULT_CONDITION_CAP)
}

pub fn sample_precision_diag_with_cap(data: &Dataset, condition_cap: f64) -> Result<PrecisionDiag> {
    require_low_dim(data)?;
    let n = data.n() as f64;
    let cov = data.x().tr_mul(data.x()) / n;
    let (min, max) = eigen_extremes(&cov);
    if !(min > 0.0) || max / min > condition_cap {
        return Err(Error::SingularDesign(format!(
            "sample covariance condition number exceeds {condition_cap:e} (eigenvalues {min:e} .. {max:e})"
        )));
    }
    let inv = spd_inverse(&cov)?;
    Ok(PrecisionDiag {
        d: inv.diagonal().iter().copied().collect(),
        method: PrecisionMethod::SamplePrecision,
        lambda_d: None,
    })
}

/// Residual sums of squares `e_j^T e_j` from regressing each column on all others.
pub fn ols_residual_sums(data: &Dataset) -> Result<Vec<f64>> {
    require_low_dim(data)?;
    let x = data.x();
    let p = data.p();
    (0..p)
        .map(|j| {
            let target = x.column(j).into_owned();
            if p == 1 {
                return Ok(target.norm_squared());
            }
            let others: Vec<usize> = (0..p).filter(|&k| k != j).collect();
            let rest = x.select_columns(others.iter());
            let gram = rest.tr_mul(&rest);
            let (min, max) = eigen_extremes(&gram);
            if !(min > 0.0) || max / min > DEFAULT_CONDITION_CAP {
                return Err(Error::SingularDesign(format!(
                    "columns other than {j} are rank deficient"
                )));
            }
            let coef = spd_solve(&gram, &rest.tr_mul(&target))?;
            let resid = target - rest * coef;
            Ok(resid.norm_squared())
        })
        .collect()
}

/// `d_jj = (n - p + 1) / (e_j^T e_j)`.
pub fn ols_residual_precision_diag(data: &Dataset) -> Result<PrecisionDiag> {
    let dof = (data.n() - data.p() + 1) as f64;
    let d = ols_residual_sums(data)?
        .into_iter()
        .enumerate()
        .map(|(j, ss)| {
            if ss <= MIN_RESIDUAL_VARIANCE * data.n() as f64 {
                Err(Error::SingularDesign(format!("column {j} is collinear with the others")))
            } else {
                Ok(dof / ss)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PrecisionDiag {
        d,
        method: PrecisionMethod::OlsResidual,
        lambda_d: None,
    })
}

/// `sqrt(2 log p / n)`.
pub fn default_lambda_d(n: usize, p: usize) -> f64 {
    (2.0 * (p as f64).ln() / n as f64).sqrt()
}

/// Objective of one column of the square-root Lasso program:
/// `||X b|| / sqrt(n) + lambda_d * ||b||_1`.
pub fn sqrt_lasso_objective(data: &Dataset, b: &[f64], lambda_d: f64) -> f64 {
    let u = data.x() * DVector::from_column_slice(b);
    u.norm() / (data.n() as f64).sqrt() + lambda_d * b.iter().map(|v| v.abs()).sum::<f64>()
}

/// Square-root Lasso for column `j` with `b_j` fixed at 1.
pub fn sqrt_lasso_column(data: &Dataset, j: usize, lambda_d: f64) -> Result<Vec<f64>> {
    let gram = data.x().tr_mul(data.x());
    SqrtLassoSolver::new(&gram, data.n()).solve(j, lambda_d)
}

/// `d_jj = ( ||(I - 11^T/n) X b_j||^2 / n )^{-1}` with `b_j` from the square-root Lasso.
pub fn sqrt_lasso_precision_diag(data: &Dataset, lambda_d: f64) -> Result<PrecisionDiag> {
    if !(lambda_d > 0.0) {
        return Err(Error::Dimension(format!("lambda_d must be positive, got {lambda_d}")));
    }
    let gram = data.x().tr_mul(data.x());
    let solver = SqrtLassoSolver::new(&gram, data.n());
    let n = data.n() as f64;
    let d = (0..data.p())
        .into_par_iter()
        .map(|j| {
            let b = solver.solve(j, lambda_d)?;
            let mut u = data.x() * DVector::from_vec(b);
            let mean = u.mean();
            u.add_scalar_mut(-mean);
            let var = u.norm_squared() / n;
            if !(var >= MIN_RESIDUAL_VARIANCE) {
                return Err(Error::DegenerateResidual(j));
            }
            Ok(var.recip())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PrecisionDiag {
        d,
        method: PrecisionMethod::SqrtLasso,
        lambda_d: Some(lambda_d),
    })
}

/// Regime-appropriate estimator.
pub fn estimate(data: &Dataset, choice: PrecisionChoice, lambda_d: Option<f64>) -> Result<PrecisionDiag> {
    let lambda_d = || lambda_d.unwrap_or_else(|| default_lambda_d(data.n(), data.p().max(2)));
    match choice {
        PrecisionChoice::Auto if data.n() > data.p() => sample_precision_diag(data),
        PrecisionChoice::Auto => sqrt_lasso_precision_diag(data, lambda_d()),
        PrecisionChoice::Sample => sample_precision_diag(data),
        PrecisionChoice::Ols => ols_residual_precision_diag(data),
        PrecisionChoice::SqrtLasso => sqrt_lasso_precision_diag(data, lambda_d()),
    }
}

/// Cyclic coordinate descent on the column-wise square-root Lasso, working on
/// the Gram matrix so that a coordinate visit is O(1) and an update is O(p).
///
/// With the other coordinates fixed, the residual sum of squares in `b_k` is
/// `g (b_k - b_ols)^2 + Q`, and `sqrt(g t^2 + Q) / sqrt(n) + lambda |b_k|`
/// has a closed-form minimizer.
struct SqrtLassoSolver<'a> {
    gram: &'a DMatrix<f64>,
    n: f64,
}

impl<'a> SqrtLassoSolver<'a> {
    fn new(gram: &'a DMatrix<f64>, n: usize) -> Self {
        SqrtLassoSolver { gram, n: n as f64 }
    }

    /// Minimizer over `b` of `sqrt(g b^2 + 2 s b + rest) / sqrt(n) + lambda |b|`.
    fn coordinate(&self, g: f64, s: f64, rest: f64, lambda: f64) -> f64 {
        let ln2 = lambda * lambda * self.n;
        if g <= ln2 || s.abs() <= lambda * (self.n * rest.max(0.0)).sqrt() {
            return 0.0;
        }
        let b_ols = -s / g;
        let floor = (rest - s * s / g).max(0.0);
        let shift = (ln2 * floor / (g * (g - ln2))).sqrt();
        b_ols - shift.copysign(b_ols)
    }

    fn solve(&self, j: usize, lambda_d: f64) -> Result<Vec<f64>> {
        let p = self.gram.ncols();
        let g = self.gram;
        let mut b = vec![0.0; p];
        b[j] = 1.0;
        // c = G b = X^T u, rss = ||u||^2
        let mut c: Vec<f64> = g.column(j).iter().copied().collect();
        let mut rss = g[(j, j)];
        let scale = rss.sqrt();
        let mut polish_at = 1e-4;

        for sweep in 0..SQRT_LASSO_MAX_SWEEPS {
            let mut max_delta = 0.0f64;
            for k in 0..p {
                let gkk = g[(k, k)];
                if k == j || gkk <= 0.0 {
                    continue;
                }
                let old = b[k];
                let s = c[k] - gkk * old;
                let rest = rss - 2.0 * old * c[k] + gkk * old * old;
                let new = self.coordinate(gkk, s, rest, lambda_d);
                let delta = new - old;
                if delta != 0.0 {
                    rss += 2.0 * delta * c[k] + delta * delta * gkk;
                    for (ci, gi) in c.iter_mut().zip(g.column(k).iter()) {
                        *ci += gi * delta;
                    }
                    b[k] = new;
                    max_delta = max_delta.max(delta.abs() * gkk.sqrt() / scale);
                }
            }
            if sweep % 16 == 15 || max_delta < polish_at {
                // refresh to remove drift from the incremental updates
                let bv = DVector::from_column_slice(&b);
                let gb = g * &bv;
                rss = bv.dot(&gb);
                c = gb.iter().copied().collect();
            }
            if rss / self.n < MIN_RESIDUAL_VARIANCE {
                return Err(Error::DegenerateResidual(j));
            }
            if max_delta < SQRT_LASSO_TOL {
                return Ok(b);
            }
            if max_delta < polish_at {
                if let Some(exact) = self.polish(j, &b, lambda_d) {
                    return Ok(exact);
                }
                polish_at *= 1e-2;
            }
        }
        Err(Error::NoConvergence {
            iterations: SQRT_LASSO_MAX_SWEEPS,
            fit: None,
        })
    }

    /// Newton iterations on the current support with signs held fixed, where
    /// the objective is smooth. Returns the point only if it keeps the signs
    /// and satisfies the optimality conditions on every inactive coordinate.
    fn polish(&self, j: usize, start: &[f64], lambda: f64) -> Option<Vec<f64>> {
        let g = self.gram;
        let sqrt_n = self.n.sqrt();
        let support: Vec<usize> = (0..start.len()).filter(|&k| k != j && start[k] != 0.0).collect();
        let signs: Vec<f64> = support.iter().map(|&k| start[k].signum()).collect();
        let mut b = start.to_vec();
        let m = support.len();
        let moments = |b: &[f64]| {
            let bv = DVector::from_column_slice(b);
            let c = g * &bv;
            let rss = bv.dot(&c);
            (c, rss)
        };

        let mut converged = m == 0;
        for _ in 0..50 {
            if converged {
                break;
            }
            let (c, rss) = moments(&b);
            if !(rss > 0.0) {
                return None;
            }
            let r = rss.sqrt();
            let c_s = DVector::from_iterator(m, support.iter().map(|&k| c[k]));
            let grad = DVector::from_iterator(m, (0..m).map(|a| c_s[a] / (sqrt_n * r) + lambda * signs[a]));
            let g_ss = DMatrix::from_fn(m, m, |a, e| g[(support[a], support[e])]);
            let hess = (g_ss / r - &c_s * c_s.transpose() / (r * r * r)) / sqrt_n;
            let step = hess.cholesky()?.solve(&grad);
            for (a, &k) in support.iter().enumerate() {
                b[k] -= step[a];
            }
            converged = step.amax() < 1e-14 * (1.0 + support.iter().map(|&k| b[k].abs()).fold(0.0, f64::max));
        }
        if !converged || support.iter().zip(&signs).any(|(&k, s)| b[k].signum() != *s) {
            return None;
        }
        let (c, rss) = moments(&b);
        let bound = lambda * sqrt_n * rss.sqrt() * (1.0 + 1e-10);
        let inactive_ok = (0..b.len()).all(|k| k == j || b[k] != 0.0 || c[k].abs() <= bound);
        inactive_ok.then_some(b)
    }
}
