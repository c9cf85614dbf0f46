//! Independent oracles shared by the integration tests. Nothing here calls the
//! library's penalty or solver code.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use spac::precision::PrecisionDiag;
use spac::{standardize, Dataset};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gaussian design with the given coefficients on the leading columns and unit noise.
pub fn random_problem(n: usize, p: usize, seed: u64, signal: &[f64]) -> Dataset {
    let mut rng = rng(seed);
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut y = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    for (j, b) in signal.iter().enumerate() {
        y.axpy(*b, &x.column(j), 1.0);
    }
    standardize(&x, &y).unwrap()
}

pub fn random_d(p: usize, seed: u64) -> PrecisionDiag {
    let mut rng = rng(seed);
    PrecisionDiag {
        d: (0..p).map(|_| rng.random_range(1.0..4.0)).collect(),
        ..PrecisionDiag::ones(p)
    }
}

pub fn lasso_pen(t: f64, lambda: f64) -> f64 {
    lambda * t.abs()
}

pub fn scad_pen(t: f64, lambda: f64, a: f64) -> f64 {
    let t = t.abs();
    if t <= lambda {
        lambda * t
    } else if t <= a * lambda {
        -(t * t - 2.0 * a * lambda * t + lambda * lambda) / (2.0 * (a - 1.0))
    } else {
        (a + 1.0) * lambda * lambda / 2.0
    }
}

/// Global minimizer of a one-dimensional function on `[lo, hi]` by a dense
/// grid followed by repeated local refinement around the best point.
pub fn grid_argmin(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let mut best = lo;
    let mut best_val = f(lo);
    let steps = 20_000;
    let h = (hi - lo) / steps as f64;
    for k in 0..=steps {
        let t = lo + h * k as f64;
        let v = f(t);
        if v < best_val {
            best_val = v;
            best = t;
        }
    }
    let mut width = h;
    for _ in 0..12 {
        let (a, b) = (best - width, best + width);
        for k in 0..=200 {
            let t = a + (b - a) * k as f64 / 200.0;
            let v = f(t);
            if v < best_val {
                best_val = v;
                best = t;
            }
        }
        width /= 50.0;
    }
    best
}

/// `0.5 ||y - sum_j X_j sqrt(d_j) g_j||^2 + lambda sum_j d_j w_j |g_j|`, written out directly.
pub fn weighted_lasso_objective(data: &Dataset, d: &[f64], w: &[f64], lambda: f64, g: &[f64]) -> f64 {
    let (n, p) = (data.n(), data.p());
    let mut rss = 0.0;
    for i in 0..n {
        let mut fit = 0.0;
        for j in 0..p {
            fit += data.x()[(i, j)] * d[j].sqrt() * g[j];
        }
        rss += (data.y()[i] - fit).powi(2);
    }
    let pen: f64 = (0..p).map(|j| d[j] * w[j] * g[j].abs()).sum();
    0.5 * rss + lambda * pen
}

/// Nested grid search for the minimum of a convex function on a box in R^3.
pub fn nested_grid_min3(f: impl Fn(&[f64; 3]) -> f64, center: [f64; 3], radius: f64) -> ([f64; 3], f64) {
    let mut c = center;
    let mut r = radius;
    let m = 24;
    let mut best = (c, f(&c));
    for _ in 0..40 {
        for a in 0..=m {
            for b in 0..=m {
                for e in 0..=m {
                    let t = [
                        c[0] - r + 2.0 * r * a as f64 / m as f64,
                        c[1] - r + 2.0 * r * b as f64 / m as f64,
                        c[2] - r + 2.0 * r * e as f64 / m as f64,
                    ];
                    let v = f(&t);
                    if v < best.1 {
                        best = (t, v);
                    }
                }
            }
        }
        c = best.0;
        r *= 0.35;
    }
    best
}

/// Largest violation of the subgradient conditions of the weighted Lasso
/// objective, relative to `lambda`. Also reports whether every active
/// coordinate has the sign of its gradient term.
pub fn kkt_violation(data: &Dataset, d: &[f64], w: &[f64], lambda: f64, g: &[f64]) -> (f64, bool) {
    let p = data.p();
    let mut r = data.y().clone();
    for j in 0..p {
        r.axpy(-d[j].sqrt() * g[j], &data.x().column(j), 1.0);
    }
    let mut worst = 0.0f64;
    let mut signs_ok = true;
    for j in 0..p {
        let grad = data.x().column(j).dot(&r) * d[j].sqrt();
        let bound = lambda * d[j] * w[j];
        if w[j].is_infinite() {
            if g[j] != 0.0 {
                worst = f64::INFINITY;
            }
            continue;
        }
        if g[j] == 0.0 {
            worst = worst.max((grad.abs() - bound).max(0.0));
        } else {
            worst = worst.max((grad - bound * g[j].signum()).abs());
            signs_ok &= grad.signum() == g[j].signum() || bound == 0.0;
        }
    }
    (worst / lambda, signs_ok)
}

/// `n / e_j^T e_j`, with `e_j` the residual of column `j` regressed on the
/// others, computed through an LU solve of the normal equations.
pub fn residual_precision(x: &DMatrix<f64>, j: usize) -> f64 {
    let (n, p) = x.shape();
    let keep: Vec<usize> = (0..p).filter(|&k| k != j).collect();
    let others = x.select_columns(&keep);
    let xj = x.column(j).into_owned();
    let coef = others.tr_mul(&others).lu().solve(&others.tr_mul(&xj)).unwrap();
    let e = xj - others * coef;
    n as f64 / e.norm_squared()
}

pub fn report(id: u32, name: &str, pass: bool, detail: &str) -> bool {
    println!(
        "criterion {id:>2} {:<38} {}  {detail}",
        name,
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}
