//! Structured correlation matrices and irrepresentable-condition audits.
//!
//! With `d_jj = (C^{-1})_jj`, `V = diag(sqrt(1 / d_jj))` and the first `q`
//! covariates relevant, the original condition inspects
//! `|C_21 C_11^{-1} s|` and the transformed one
//! `|V(2) C_21 C_11^{-1} V(1)^{-1} s|`, where `s` is the sign vector of the
//! relevant coefficients.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{eigen_extremes, spd_inverse};

const PD_THRESHOLD: f64 = 1e-10;
const UNIT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CovarianceKind {
    BlockExchangeable { alpha: (f64, f64, f64), q: usize, p: usize },
    BlockAr1 { alpha: (f64, f64, f64), q: usize, p: usize },
    Explicit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceModel {
    pub kind: CovarianceKind,
    realized: DMatrix<f64>,
}

impl CovarianceModel {
    /// Wraps a user-supplied correlation matrix after checking symmetry, unit
    /// diagonal and positive definiteness.
    pub fn explicit(matrix: DMatrix<f64>) -> Result<Self> {
        Self::build(CovarianceKind::Explicit, matrix)
    }

    fn build(kind: CovarianceKind, m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "covariance must be square and nonempty, got {} x {}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("covariance has non-finite entries".into()));
        }
        let p = m.nrows();
        for i in 0..p {
            if (m[(i, i)] - 1.0).abs() > UNIT_TOL {
                return Err(Error::InvalidConfig(format!(
                    "diagonal entry {i} is {}, expected 1",
                    m[(i, i)]
                )));
            }
            for j in 0..i {
                if (m[(i, j)] - m[(j, i)]).abs() > UNIT_TOL {
                    return Err(Error::InvalidConfig(format!("matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        let (min, _) = eigen_extremes(&m);
        if !(min > PD_THRESHOLD) {
            return Err(Error::NotPositiveDefinite(min));
        }
        Ok(CovarianceModel { kind, realized: m })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.realized
    }

    pub fn p(&self) -> usize {
        self.realized.nrows()
    }

    /// Diagonal of the precision matrix `C^{-1}`.
    pub fn precision_diag(&self) -> Result<Vec<f64>> {
        let inv = spd_inverse(&self.realized)?;
        Ok(inv.diagonal().iter().copied().collect())
    }
}

fn check_blocks(q: usize, p: usize) -> Result<()> {
    if q == 0 || q >= p {
        return Err(Error::Dimension(format!("need 1 <= q < p, got q = {q}, p = {p}")));
    }
    Ok(())
}

/// Two-block exchangeable structure: `alpha.0` within the first `q`
/// covariates, `alpha.1` across blocks, `alpha.2` within the remaining ones.
pub fn block_exchangeable_cov(q: usize, p: usize, alpha: (f64, f64, f64)) -> Result<CovarianceModel> {
    check_blocks(q, p)?;
    let (a1, a2, a3) = alpha;
    let m = DMatrix::from_fn(p, p, |i, j| match (i == j, i < q, j < q) {
        (true, _, _) => 1.0,
        (false, true, true) => a1,
        (false, false, false) => a3,
        _ => a2,
    });
    CovarianceModel::build(CovarianceKind::BlockExchangeable { alpha, q, p }, m)
}

/// Two-block AR(1) structure: `alpha.0^{|i-j|}` and `alpha.2^{|i-j|}` within
/// blocks, `alpha.1^{|i-j|}` across them (global indices).
pub fn block_ar1_cov(q: usize, p: usize, alpha: (f64, f64, f64)) -> Result<CovarianceModel> {
    check_blocks(q, p)?;
    let (a1, a2, a3) = alpha;
    for a in [a1, a2, a3] {
        if !(a > -1.0 && a < 1.0) {
            return Err(Error::InvalidConfig(format!("AR(1) parameters must lie in (-1, 1), got {a}")));
        }
    }
    let m = DMatrix::from_fn(p, p, |i, j| {
        let base = match (i < q, j < q) {
            (true, true) => a1,
            (false, false) => a3,
            _ => a2,
        };
        base.powi(i.abs_diff(j) as i32)
    });
    CovarianceModel::build(CovarianceKind::BlockAr1 { alpha, q, p }, m)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub q: usize,
    pub original_vector: Vec<f64>,
    pub transformed_vector: Vec<f64>,
    pub original_weak: bool,
    pub original_strong_margin: f64,
    pub transformed_weak: bool,
    pub transformed_strong_margin: f64,
}

fn margin(v: &[f64]) -> f64 {
    1.0 - v.iter().copied().fold(0.0, f64::max)
}

/// `C_21 C_11^{-1}` as a `(p - q) x q` matrix.
fn cross_regression(c: &DMatrix<f64>, q: usize) -> Result<DMatrix<f64>> {
    let p = c.nrows();
    let c11 = c.view((0, 0), (q, q)).into_owned();
    let c21 = c.view((q, 0), (p - q, q));
    // C_21 C_11^{-1} = (C_11^{-1} C_12)^T
    let chol = c11
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite(eigen_extremes(&c.view((0, 0), (q, q)).into_owned()).0))?;
    Ok(chol.solve(&c21.transpose()).transpose())
}

pub fn check_irrepresentable(cov: &CovarianceModel, q: usize, signs: &[f64]) -> Result<ConditionReport> {
    let c = cov.matrix();
    let p = cov.p();
    check_blocks(q, p)?;
    if signs.len() != q {
        return Err(Error::Dimension(format!("{} signs for {q} relevant covariates", signs.len())));
    }
    if signs.iter().any(|s| s.abs() != 1.0) {
        return Err(Error::InvalidConfig("signs must be -1 or +1".into()));
    }
    let d = cov.precision_diag()?;
    let w = cross_regression(c, q)?;
    let s = DVector::from_column_slice(signs);

    let original = &w * &s;
    // V(1)^{-1} s scales each sign by sqrt(d_ii); V(2) scales row j by sqrt(1 / d_jj).
    let scaled = DVector::from_iterator(q, (0..q).map(|i| s[i] * d[i].sqrt()));
    let transformed = &w * &scaled;

    let original_vector: Vec<f64> = original.iter().map(|v| v.abs()).collect();
    let transformed_vector: Vec<f64> = transformed
        .iter()
        .enumerate()
        .map(|(k, v)| (v / d[q + k].sqrt()).abs())
        .collect();
    Ok(ConditionReport {
        q,
        original_weak: original_vector.iter().all(|v| *v <= 1.0 + UNIT_TOL),
        original_strong_margin: margin(&original_vector),
        transformed_weak: transformed_vector.iter().all(|v| *v <= 1.0 + UNIT_TOL),
        transformed_strong_margin: margin(&transformed_vector),
        original_vector,
        transformed_vector,
    })
}

/// Sufficient condition for block-exchangeable correlation:
/// `|a2| <= (1 - eta) sqrt((1 - a1) / (1 - a3)) a1 L`.
pub fn exchangeable_sufficient_check(alpha: (f64, f64, f64), l_lower: f64, eta: f64) -> bool {
    let (a1, a2, a3) = alpha;
    a2.abs() <= (1.0 - eta) * ((1.0 - a1) / (1.0 - a3)).sqrt() * a1 * l_lower
}

/// Left-hand side of the block-AR(1) sufficient condition.
pub fn ar1_sufficient_lhs(alpha: (f64, f64, f64)) -> Result<f64> {
    let (a1, a2, a3) = alpha;
    if a2 == a3 {
        return Err(Error::DegenerateDenominator(format!("alpha2 = alpha3 = {a2}")));
    }
    let lead = (a2 / (a2 - a3).abs()).max(1.0);
    let root = ((1.0 - a3 * a3) / (1.0 - a1 * a1)).sqrt();
    Ok(lead * root * a2 * (1.0 - a1 * a2) / ((1.0 + a1) * (1.0 - a2)))
}

pub fn ar1_sufficient_check(alpha: (f64, f64, f64), eta: f64) -> Result<bool> {
    Ok(ar1_sufficient_lhs(alpha)? <= 1.0 - eta)
}

struct IndexTerms {
    v_norm2: f64,
    lambda_min: f64,
    lambda_max: f64,
    sin2_phi: f64,
}

fn index_terms(c: &DMatrix<f64>, i: usize) -> IndexTerms {
    let p = c.nrows();
    let keep: Vec<usize> = (0..p).filter(|&k| k != i).collect();
    let sub = c.select_rows(&keep).select_columns(&keep);
    let v = DVector::from_iterator(keep.len(), keep.iter().map(|&k| c[(k, i)]));
    let (lambda_min, lambda_max) = eigen_extremes(&sub);
    let v_norm = v.norm();
    // largest angle = smallest cosine over nonzero columns
    let min_cos = if v_norm == 0.0 {
        1.0
    } else {
        sub.column_iter()
            .filter_map(|col| {
                let n = col.norm();
                (n > 0.0).then(|| (col.dot(&v) / (n * v_norm)).clamp(-1.0, 1.0))
            })
            .fold(1.0, f64::min)
    };
    IndexTerms {
        v_norm2: v_norm * v_norm,
        lambda_min,
        lambda_max,
        sin2_phi: 1.0 - min_cos * min_cos,
    }
}

/// Eigenvalue/angle sufficient condition for nonnegative correlation
/// matrices; true when every relevant/irrelevant pair `(i, j)` satisfies
/// `0 <= num_j / den_i < g^2` with `g = (1 - eta) / ||C_21 C_11^{-1}||_inf`.
pub fn general_sufficient_check(cov: &CovarianceModel, q: usize, eta: f64) -> Result<bool> {
    let c = cov.matrix();
    let p = cov.p();
    check_blocks(q, p)?;
    for i in 0..p {
        for j in 0..p {
            if c[(i, j)] < 0.0 {
                return Err(Error::NegativeEntry(i, j));
            }
        }
    }
    let w = cross_regression(c, q)?;
    let inf_norm = w
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let g2 = if inf_norm == 0.0 {
        f64::INFINITY
    } else {
        ((1.0 - eta) / inf_norm).powi(2)
    };

    let terms: Vec<IndexTerms> = (0..p).into_par_iter().map(|i| index_terms(c, i)).collect();
    let dens: Vec<f64> = terms[..q]
        .iter()
        .map(|t| 1.0 - t.v_norm2 / t.lambda_max - t.v_norm2 * t.sin2_phi / t.lambda_min)
        .collect();
    let nums: Vec<f64> = terms[q..].iter().map(|t| 1.0 - t.v_norm2 / t.lambda_max).collect();
    Ok(dens.iter().all(|den| {
        nums.iter().all(|num| {
            let ratio = num / den;
            ratio.is_finite() && ratio >= 0.0 && ratio < g2
        })
    }))
}

/// Random correlation matrix with inflated relevant/irrelevant correlation:
/// `A ~ U(0, 1)` (`p x p`), `A1 ~ U(low, high)` added to the last `p - q`
/// rows, `G = A2 A2^T + I`, rescaled to unit diagonal.
pub fn random_c1_covariance(p: usize, q: usize, shift_range: (f64, f64), seed: u64) -> Result<CovarianceModel> {
    check_blocks(q, p)?;
    let (low, high) = shift_range;
    if !(low < high) || !low.is_finite() || !high.is_finite() {
        return Err(Error::InvalidConfig(format!("shift range needs low < high, got ({low}, {high})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a2 = DMatrix::from_fn(p, p, |_, _| 0.0);
    for i in 0..p {
        for j in 0..p {
            a2[(i, j)] = rng.random::<f64>();
        }
    }
    for i in q..p {
        for j in 0..p {
            a2[(i, j)] += rng.random_range(low..high);
        }
    }
    let mut g = &a2 * a2.transpose();
    for i in 0..p {
        g[(i, i)] += 1.0;
    }
    let scale: Vec<f64> = (0..p).map(|i| g[(i, i)].sqrt()).collect();
    let c = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { g[(i, j)] / (scale[i] * scale[j]) });
    CovarianceModel::explicit(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn equal_alphas_merge_blocks() {
        let c = block_exchangeable_cov(3, 7, (0.4, 0.4, 0.4)).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                assert_eq!(c.matrix()[(i, j)], if i == j { 1.0 } else { 0.4 });
            }
        }
        let ar = block_ar1_cov(3, 7, (0.6, 0.6, 0.6)).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                assert_abs_diff_eq!(ar.matrix()[(i, j)], 0.6f64.powi(i.abs_diff(j) as i32), epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn zero_alphas_give_identity() {
        let c = block_exchangeable_cov(2, 5, (0.0, 0.0, 0.0)).unwrap();
        assert_eq!(c.matrix(), &DMatrix::identity(5, 5));
    }

    #[test]
    fn ar1_cross_block_index() {
        let c = block_ar1_cov(2, 4, (0.5, 0.6, 0.7)).unwrap();
        assert_abs_diff_eq!(c.matrix()[(0, 2)], 0.36, epsilon = 1e-15);
        let diag = block_ar1_cov(2, 4, (0.5, 0.0, 0.7)).unwrap();
        assert_eq!(diag.matrix()[(1, 3)], 0.0);
        assert_eq!(diag.matrix()[(0, 2)], 0.0);
    }

    #[test]
    fn setting_one_structure_is_positive_definite() {
        assert!(block_exchangeable_cov(10, 150, (0.5, 0.7, 0.9)).is_ok());
    }

    #[test]
    fn indefinite_structure_rejected() {
        let err = block_exchangeable_cov(5, 10, (0.1, 0.9, 0.1)).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite(v) if v < 0.0));
        assert!(block_exchangeable_cov(0, 3, (0.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn block_diagonal_has_unit_margins() {
        let c = block_exchangeable_cov(3, 8, (0.3, 0.0, 0.5)).unwrap();
        let r = check_irrepresentable(&c, 3, &[1.0, -1.0, 1.0]).unwrap();
        assert!(r.original_vector.iter().chain(&r.transformed_vector).all(|v| *v == 0.0));
        assert_eq!(r.original_strong_margin, 1.0);
        assert_eq!(r.transformed_strong_margin, 1.0);
    }

    #[test]
    fn setting_one_original_fails_transformed_holds() {
        let c = block_exchangeable_cov(10, 150, (0.5, 0.7, 0.9)).unwrap();
        let r = check_irrepresentable(&c, 10, &[1.0; 10]).unwrap();
        assert!(!r.original_weak);
        assert!(r.transformed_strong_margin > 0.0);
        assert!(r.transformed_weak);
    }

    #[test]
    fn exchangeable_closed_form() {
        let (q, p) = (6, 20);
        let alpha = (0.3, 0.45, 0.6);
        let signs = [1.0, 1.0, -1.0, 1.0, 1.0, -1.0];
        let c = block_exchangeable_cov(q, p, alpha).unwrap();
        let r = check_irrepresentable(&c, q, &signs).unwrap();
        let m: f64 = signs.iter().sum();
        let expect = (alpha.1 * m).abs() / (1.0 - alpha.0 + alpha.0 * q as f64);
        for v in r.original_vector {
            assert_abs_diff_eq!(v, expect, epsilon = 1e-10);
        }
    }

    #[test]
    fn precision_diag_matches_schur_complement() {
        let c = random_c1_covariance(12, 3, (1.0, 2.0), 5).unwrap();
        let d = c.precision_diag().unwrap();
        let m = c.matrix();
        for j in 0..12 {
            let keep: Vec<usize> = (0..12).filter(|&k| k != j).collect();
            let rest = m.select_rows(&keep).select_columns(&keep);
            let cross = DVector::from_iterator(11, keep.iter().map(|&k| m[(k, j)]));
            let cond_var = 1.0 - cross.dot(&rest.lu().solve(&cross).unwrap());
            assert_abs_diff_eq!(d[j], 1.0 / cond_var, epsilon = 1e-10 * d[j].max(1.0));
        }
    }

    #[test]
    fn exchangeable_check_examples() {
        assert!(exchangeable_sufficient_check((0.5, 0.0, 0.9), 1.0, 0.5));
        assert!(exchangeable_sufficient_check((0.5, 0.7, 0.9), 1.0, 0.01));
        assert!(!exchangeable_sufficient_check((0.1, 0.7, 0.2), 1.0, 0.01));
    }

    #[test]
    fn ar1_check_examples() {
        assert!(ar1_sufficient_check((0.3, 1e-9, 0.9), 0.05).unwrap());
        // hand evaluation: lead = max(0.5/0.4, 1) = 1.25, root = sqrt(0.19/0.91),
        // tail = 0.5 * 0.85 / (1.3 * 0.5)
        let hand = 1.25 * (0.19f64 / 0.91).sqrt() * 0.5 * 0.85 / (1.3 * 0.5);
        assert_abs_diff_eq!(ar1_sufficient_lhs((0.3, 0.5, 0.9)).unwrap(), hand, epsilon = 1e-14);
        assert_eq!(ar1_sufficient_check((0.3, 0.5, 0.9), 0.05).unwrap(), hand <= 0.95);
        assert!(matches!(
            ar1_sufficient_check((0.3, 0.5, 0.5), 0.05),
            Err(Error::DegenerateDenominator(_))
        ));
    }

    #[test]
    fn general_check_identity() {
        let c = CovarianceModel::explicit(DMatrix::identity(6, 6)).unwrap();
        assert!(general_sufficient_check(&c, 2, 0.1).unwrap());
    }

    #[test]
    fn general_check_hand_built() {
        // two weakly tied relevant covariates, three strongly tied irrelevant ones
        #[rustfmt::skip]
        let m = DMatrix::from_row_slice(5, 5, &[
            1.00, 0.10, 0.05, 0.05, 0.05,
            0.10, 1.00, 0.05, 0.05, 0.05,
            0.05, 0.05, 1.00, 0.60, 0.60,
            0.05, 0.05, 0.60, 1.00, 0.60,
            0.05, 0.05, 0.60, 0.60, 1.00,
        ]);
        let c = CovarianceModel::explicit(m).unwrap();
        assert!(general_sufficient_check(&c, 2, 0.1).unwrap());
        let r = check_irrepresentable(&c, 2, &[1.0, 1.0]).unwrap();
        assert!(r.transformed_strong_margin > 0.0);
    }

    #[test]
    fn general_check_rejects_negative_entries() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, -0.2, 0.0, -0.2, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let c = CovarianceModel::explicit(m).unwrap();
        assert!(matches!(general_sufficient_check(&c, 1, 0.1), Err(Error::NegativeEntry(0, 1))));
    }

    #[test]
    fn random_generator_is_deterministic_correlation() {
        let a = random_c1_covariance(30, 5, (1.0, 2.0), 9).unwrap();
        let b = random_c1_covariance(30, 5, (1.0, 2.0), 9).unwrap();
        assert_eq!(a.matrix(), b.matrix());
        assert!(a.matrix().diagonal().iter().all(|v| *v == 1.0));
        assert_ne!(a.matrix(), random_c1_covariance(30, 5, (1.0, 2.0), 10).unwrap().matrix());
    }

    #[test]
    fn explicit_validation() {
        let bad_diag = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        assert!(matches!(CovarianceModel::explicit(bad_diag), Err(Error::InvalidConfig(_))));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.3, 1.0]);
        assert!(matches!(CovarianceModel::explicit(asym), Err(Error::InvalidConfig(_))));
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(CovarianceModel::explicit(singular), Err(Error::NotPositiveDefinite(_))));
    }
}
