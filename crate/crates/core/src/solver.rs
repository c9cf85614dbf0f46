//! Coordinate descent for the reweighted partial-covariance objective
//!
//! ```text
//! L(g) = 0.5 * ||y - sum_j X_j sqrt(d_j) g_j||^2 + sum_j d_j * P(g_j)
//! ```
//!
//! and for its plain counterpart (`d = 1`, coefficients penalized directly).
//!
//! Column `j` of the rescaled design has squared norm `n d_j`, and its penalty
//! carries the same factor `d_j`, so each coordinate subproblem reduces to
//! `0.5 * (z_j - g)^2 + P(g) / n`. The solver folds the `1 / n` into an
//! effective tuning parameter `lambda / n` and applies the closed-form
//! univariate maps from [`crate::penalty`] verbatim. For SCAD this means the
//! penalty actually optimized is `n * p_SCAD(g; lambda / n)`; for the Lasso and
//! adaptive Lasso the two readings coincide.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::ols;
use crate::penalty::{PenaltyFamily, PenaltySpec, DEFAULT_MU, DEFAULT_SCAD_A};
use crate::precision::PrecisionDiag;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitControls {
    /// Stop when `max_j |g_j - g_j_old| / max(|g_j_old|, 1)` over a sweep drops below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitControls {
    fn default() -> Self {
        FitControls {
            tol: 1e-3,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitSpace {
    /// Partial covariances `g` were penalized; `beta_j = g_j sqrt(d_j)`.
    Spac,
    /// Coefficients were penalized directly (`d = 1`).
    Beta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacFit {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub lambda: f64,
    pub penalty: PenaltySpec,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    pub space: FitSpace,
    /// Objective after each full sweep.
    #[serde(skip)]
    pub trace: Vec<f64>,
}

impl SpacFit {
    pub fn support(&self) -> Vec<usize> {
        self.beta
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn df(&self) -> usize {
        self.beta.iter().filter(|b| **b != 0.0).count()
    }
}

fn check_inputs(data: &Dataset, d: &PrecisionDiag, penalty: &PenaltySpec, gamma: &[f64]) -> Result<()> {
    let p = data.p();
    if d.len() != p || gamma.len() != p {
        return Err(Error::Dimension(format!(
            "design has {p} columns, precision diagonal {} and coefficients {}",
            d.len(),
            gamma.len()
        )));
    }
    if d.d.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Dimension("precision diagonal must be positive and finite".into()));
    }
    if gamma.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("initial coefficients are not finite".into()));
    }
    penalty.validate(Some(p))
}

/// `beta_j = gamma_j * sqrt(d_j)`.
pub fn beta_from_gamma(gamma: &[f64], d: &PrecisionDiag) -> Vec<f64> {
    gamma.iter().zip(&d.d).map(|(g, dj)| g * dj.sqrt()).collect()
}

fn residual(data: &Dataset, scale: &[f64], gamma: &[f64]) -> DVector<f64> {
    let mut r = data.y().clone();
    for (j, (&g, &s)) in gamma.iter().zip(scale).enumerate() {
        if g != 0.0 {
            r.axpy(-g * s, &data.x().column(j), 1.0);
        }
    }
    r
}

fn penalty_sum(data: &Dataset, d: &PrecisionDiag, penalty: &PenaltySpec, gamma: &[f64]) -> f64 {
    let n = data.n() as f64;
    let lam_eff = penalty.lambda / n;
    gamma
        .iter()
        .zip(&d.d)
        .enumerate()
        .map(|(j, (&g, &dj))| dj * n * penalty.value_at(lam_eff, g, j))
        .sum()
}

/// Penalized loss at `gamma`: `0.5 ||y - sum_j X_j sqrt(d_j) g_j||^2 + sum_j d_j n P_{lambda/n}(g_j)`.
pub fn objective(data: &Dataset, d: &PrecisionDiag, penalty: &PenaltySpec, gamma: &[f64]) -> Result<f64> {
    check_inputs(data, d, penalty, gamma)?;
    let scale: Vec<f64> = d.d.iter().map(|v| v.sqrt()).collect();
    let r = residual(data, &scale, gamma);
    Ok(0.5 * r.norm_squared() + penalty_sum(data, d, penalty, gamma))
}

/// Unpenalized solution for coordinate `j` given the full residual `r`:
/// `X_j^T r / (n sqrt(d_j)) + gamma_prev_j`.
pub fn partial_residual_z(data: &Dataset, r: &DVector<f64>, gamma_prev_j: f64, j: usize, d: &PrecisionDiag) -> f64 {
    data.x().column(j).dot(r) / (data.n() as f64 * d.d[j].sqrt()) + gamma_prev_j
}

/// Cyclic coordinate descent from `init`.
pub fn coordinate_descent_fit(
    data: &Dataset,
    d: &PrecisionDiag,
    penalty: &PenaltySpec,
    init: &[f64],
    controls: &FitControls,
) -> Result<SpacFit> {
    descend(data, d, penalty, init, controls, FitSpace::Spac)
}

fn descend(
    data: &Dataset,
    d: &PrecisionDiag,
    penalty: &PenaltySpec,
    init: &[f64],
    controls: &FitControls,
    space: FitSpace,
) -> Result<SpacFit> {
    check_inputs(data, d, penalty, init)?;
    let x = data.x();
    let p = data.p();
    let n = data.n() as f64;
    let scale: Vec<f64> = d.d.iter().map(|v| v.sqrt()).collect();
    let lam_eff = penalty.lambda / n;

    let mut gamma = init.to_vec();
    let mut r = residual(data, &scale, &gamma);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < controls.max_iter {
        iterations += 1;
        let mut max_change = 0.0f64;
        for j in 0..p {
            let col = x.column(j);
            let old = gamma[j];
            let z = col.dot(&r) / (n * scale[j]) + old;
            let new = penalty.threshold_at(lam_eff, z, j);
            if new != old {
                r.axpy(-scale[j] * (new - old), &col, 1.0);
                gamma[j] = new;
                max_change = max_change.max((new - old).abs() / old.abs().max(1.0));
            }
        }
        let obj = 0.5 * r.norm_squared() + penalty_sum(data, d, penalty, &gamma);
        if !obj.is_finite() || gamma.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteIterate(iterations));
        }
        trace.push(obj);
        if max_change < controls.tol {
            converged = true;
            break;
        }
    }

    let r = residual(data, &scale, &gamma);
    let objective = 0.5 * r.norm_squared() + penalty_sum(data, d, penalty, &gamma);
    let fit = SpacFit {
        beta: beta_from_gamma(&gamma, d),
        gamma,
        lambda: penalty.lambda,
        penalty: penalty.clone(),
        iterations,
        converged,
        objective,
        space,
        trace,
    };
    if converged {
        Ok(fit)
    } else {
        Err(Error::NoConvergence {
            iterations,
            fit: Some(Box::new(fit)),
        })
    }
}

/// Coefficient-space fit: same machinery with `d = 1`.
pub fn baseline_fit(data: &Dataset, penalty: &PenaltySpec, controls: &FitControls) -> Result<SpacFit> {
    let ones = PrecisionDiag::ones(data.p());
    descend(data, &ones, penalty, &vec![0.0; data.p()], controls, FitSpace::Beta)
}

/// Smallest `lambda` at which the zero vector satisfies the optimality conditions.
pub fn lambda_max(data: &Dataset, d: &PrecisionDiag, penalty: &PenaltySpec) -> Result<f64> {
    check_inputs(data, d, penalty, &vec![0.0; data.p()])?;
    if data.y().iter().all(|v| *v == 0.0) {
        return Err(Error::AllZeroResponse);
    }
    let xty = data.x().tr_mul(data.y());
    let mut best: Option<f64> = None;
    for j in 0..data.p() {
        let w = match penalty.family {
            PenaltyFamily::AdaptiveLasso => penalty.weight(j),
            _ => 1.0,
        };
        if !(w.is_finite() && w > 0.0) {
            continue;
        }
        let v = xty[j].abs() / (d.d[j].sqrt() * w);
        best = Some(best.map_or(v, |b: f64| b.max(v)));
    }
    match best {
        None => Err(Error::NoPenalizableCoordinate),
        Some(v) if v > 0.0 => Ok(v),
        Some(_) => Err(Error::AllZeroResponse),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathGrid {
    pub count: usize,
    /// Depth of the grid below `lambda_max`, in powers of ten, when `n > p`.
    pub decades: f64,
    /// Depth when `n <= p`. Deeper paths there end in near-interpolating fits
    /// whose vanishing RSS dominates the BIC.
    pub decades_high_dim: f64,
}

impl PathGrid {
    pub fn decades_for(&self, n: usize, p: usize) -> f64 {
        if n > p {
            self.decades
        } else {
            self.decades_high_dim
        }
    }
}

impl Default for PathGrid {
    fn default() -> Self {
        PathGrid {
            count: 100,
            decades: 3.0,
            decades_high_dim: 20f64.log10(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathFit {
    pub lambdas: Vec<f64>,
    pub fits: Vec<SpacFit>,
    pub bic: Vec<f64>,
}

/// `n log(RSS / n) + df log n`, with RSS measured on the coefficient scale.
pub fn bic(data: &Dataset, fit: &SpacFit) -> f64 {
    let n = data.n() as f64;
    let fitted = data.x() * DVector::from_column_slice(&fit.beta);
    let rss = (data.y() - fitted).norm_squared();
    n * (rss / n).ln() + fit.df() as f64 * n.ln()
}

/// Warm-started path over a log-spaced grid from `lambda_max` downwards.
pub fn lambda_path(
    data: &Dataset,
    d: &PrecisionDiag,
    penalty: &PenaltySpec,
    grid: &PathGrid,
    controls: &FitControls,
) -> Result<PathFit> {
    run_path(data, d, penalty, grid, controls, FitSpace::Spac)
}

/// Coefficient-space path (`d = 1`).
pub fn baseline_path(data: &Dataset, penalty: &PenaltySpec, grid: &PathGrid, controls: &FitControls) -> Result<PathFit> {
    run_path(data, &PrecisionDiag::ones(data.p()), penalty, grid, controls, FitSpace::Beta)
}

fn run_path(
    data: &Dataset,
    d: &PrecisionDiag,
    penalty: &PenaltySpec,
    grid: &PathGrid,
    controls: &FitControls,
    space: FitSpace,
) -> Result<PathFit> {
    let decades = grid.decades_for(data.n(), data.p());
    if grid.count < 2 || !(decades > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "path grid needs count >= 2 and decades > 0, got {} and {decades}",
            grid.count
        )));
    }
    let lmax = lambda_max(data, d, penalty)?;
    let step = decades / (grid.count - 1) as f64;
    let mut path = PathFit {
        lambdas: Vec::with_capacity(grid.count),
        fits: Vec::with_capacity(grid.count),
        bic: Vec::with_capacity(grid.count),
    };
    let mut warm = vec![0.0; data.p()];
    for k in 0..grid.count {
        let lambda = lmax * 10f64.powf(-step * k as f64);
        let fit = match descend(data, d, &penalty.with_lambda(lambda), &warm, controls, space) {
            Ok(fit) => fit,
            Err(Error::NoConvergence { fit: Some(fit), .. }) => *fit,
            Err(e) => return Err(e),
        };
        warm.clone_from(&fit.gamma);
        path.bic.push(bic(data, &fit));
        path.lambdas.push(lambda);
        path.fits.push(fit);
    }
    Ok(path)
}

/// Converged fit with the smallest BIC; ties go to the larger `lambda`.
pub fn bic_select(path: &PathFit) -> Result<SpacFit> {
    let mut best: Option<(usize, f64)> = None;
    for (k, (fit, &score)) in path.fits.iter().zip(&path.bic).enumerate() {
        if !fit.converged || score.is_nan() {
            continue;
        }
        if best.is_none_or(|(_, b)| score < b) {
            best = Some((k, score));
        }
    }
    best.map(|(k, _)| path.fits[k].clone()).ok_or(Error::NoConvergedFit)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitMode {
    /// OLS on all columns; requires `n > p`.
    LowDim,
    /// OLS refit on the support chosen by a BIC-tuned SPAC-Lasso.
    HighDim,
}

impl InitMode {
    pub fn for_shape(n: usize, p: usize) -> Self {
        if n > p {
            InitMode::LowDim
        } else {
            InitMode::HighDim
        }
    }
}

/// OLS on the listed columns, zeros elsewhere.
fn support_ols(data: &Dataset, support: &[usize]) -> Result<Vec<f64>> {
    let mut beta = vec![0.0; data.p()];
    if support.is_empty() {
        return Ok(beta);
    }
    let sub: DMatrix<f64> = data.x().select_columns(support.iter());
    let coef = ols(&sub, data.y())?;
    for (&j, c) in support.iter().zip(coef.iter()) {
        beta[j] = *c;
    }
    Ok(beta)
}

/// Initial estimate `gamma_0` for the SPAC adaptive Lasso.
pub fn alasso_initializer(
    data: &Dataset,
    d: &PrecisionDiag,
    mode: InitMode,
    grid: &PathGrid,
    controls: &FitControls,
) -> Result<Vec<f64>> {
    let beta0 = match mode {
        InitMode::LowDim => {
            if data.n() <= data.p() {
                return Err(Error::SingularDesign(format!(
                    "OLS initializer needs n > p, got n={}, p={}",
                    data.n(),
                    data.p()
                )));
            }
            support_ols(data, &(0..data.p()).collect::<Vec<_>>())?
        }
        InitMode::HighDim => {
            let path = lambda_path(data, d, &PenaltySpec::lasso(0.0), grid, controls)?;
            let lasso = bic_select(&path)?;
            support_ols(data, &lasso.support())?
        }
    };
    Ok(gamma_from_beta(&beta0, d))
}

fn gamma_from_beta(beta: &[f64], d: &PrecisionDiag) -> Vec<f64> {
    beta.iter().zip(&d.d).map(|(b, dj)| b / dj.sqrt()).collect()
}

/// Estimators compared throughout: three penalties, each on coefficients and on
/// partial covariances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    Lasso,
    SpacLasso,
    ALasso,
    SpacALasso,
    Scad,
    SpacScad,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Lasso,
        Method::SpacLasso,
        Method::ALasso,
        Method::SpacALasso,
        Method::Scad,
        Method::SpacScad,
    ];

    pub fn is_spac(self) -> bool {
        matches!(self, Method::SpacLasso | Method::SpacALasso | Method::SpacScad)
    }

    pub fn family(self) -> PenaltyFamily {
        match self {
            Method::Lasso | Method::SpacLasso => PenaltyFamily::Lasso,
            Method::ALasso | Method::SpacALasso => PenaltyFamily::AdaptiveLasso,
            Method::Scad | Method::SpacScad => PenaltyFamily::Scad,
        }
    }

    pub fn from_parts(family: PenaltyFamily, spac: bool) -> Self {
        match (family, spac) {
            (PenaltyFamily::Lasso, false) => Method::Lasso,
            (PenaltyFamily::Lasso, true) => Method::SpacLasso,
            (PenaltyFamily::AdaptiveLasso, false) => Method::ALasso,
            (PenaltyFamily::AdaptiveLasso, true) => Method::SpacALasso,
            (PenaltyFamily::Scad, false) => Method::Scad,
            (PenaltyFamily::Scad, true) => Method::SpacScad,
        }
    }

    /// The coefficient-space method a SPAC method is compared against.
    pub fn baseline(self) -> Method {
        Method::from_parts(self.family(), false)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Lasso => "Lasso",
            Method::SpacLasso => "SPAC-Lasso",
            Method::ALasso => "ALasso",
            Method::SpacALasso => "SPAC-ALasso",
            Method::Scad => "SCAD",
            Method::SpacScad => "SPAC-SCAD",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        Ok(match key.as_str() {
            "lasso" => Method::Lasso,
            "spaclasso" => Method::SpacLasso,
            "alasso" | "adaptivelasso" => Method::ALasso,
            "spacalasso" => Method::SpacALasso,
            "scad" => Method::Scad,
            "spacscad" => Method::SpacScad,
            _ => return Err(Error::InvalidConfig(format!("unknown method {s:?}"))),
        })
    }
}

/// Everything besides the data needed to produce a BIC-tuned fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningOptions {
    pub a: f64,
    pub mu: f64,
    pub grid: PathGrid,
    pub controls: FitControls,
}

impl Default for TuningOptions {
    fn default() -> Self {
        TuningOptions {
            a: DEFAULT_SCAD_A,
            mu: DEFAULT_MU,
            grid: PathGrid::default(),
            controls: FitControls::default(),
        }
    }
}

/// Fit with an all-zero answer, used when every coordinate is pinned by an infinite weight.
fn pinned_fit(data: &Dataset, penalty: PenaltySpec, space: FitSpace) -> SpacFit {
    let p = data.p();
    SpacFit {
        gamma: vec![0.0; p],
        beta: vec![0.0; p],
        lambda: penalty.lambda,
        objective: 0.5 * data.y().norm_squared(),
        penalty,
        iterations: 0,
        converged: true,
        space,
        trace: Vec::new(),
    }
}

/// BIC-tuned fits of several methods on one dataset. `d` is used by the SPAC
/// methods only. Lasso fits are shared with the adaptive-Lasso initializers.
pub fn fit_methods(
    data: &Dataset,
    d: &PrecisionDiag,
    methods: &[Method],
    opts: &TuningOptions,
) -> Vec<(Method, Result<SpacFit>)> {
    let mut lasso: Option<Result<SpacFit>> = None;
    let mut spac_lasso: Option<Result<SpacFit>> = None;
    let ones = PrecisionDiag::ones(data.p());

    let tuned = |penalty: PenaltySpec, spac: bool| -> Result<SpacFit> {
        let (dd, space) = if spac { (d, FitSpace::Spac) } else { (&ones, FitSpace::Beta) };
        match run_path(data, dd, &penalty, &opts.grid, &opts.controls, space) {
            Ok(path) => bic_select(&path),
            Err(Error::NoPenalizableCoordinate) => Ok(pinned_fit(data, penalty.with_lambda(0.0), space)),
            Err(e) => Err(e),
        }
    };
    let clone_result = |r: &Result<SpacFit>| -> Result<SpacFit> {
        match r {
            Ok(f) => Ok(f.clone()),
            Err(e) => Err(e.duplicate()),
        }
    };

    let mut out = Vec::with_capacity(methods.len());
    for &method in methods {
        let result = match method {
            Method::Lasso => clone_result(lasso.get_or_insert_with(|| tuned(PenaltySpec::lasso(0.0), false))),
            Method::SpacLasso => {
                clone_result(spac_lasso.get_or_insert_with(|| tuned(PenaltySpec::lasso(0.0), true)))
            }
            Method::Scad => tuned(PenaltySpec::scad(0.0, opts.a), false),
            Method::SpacScad => tuned(PenaltySpec::scad(0.0, opts.a), true),
            Method::ALasso => {
                clone_result(lasso.get_or_insert_with(|| tuned(PenaltySpec::lasso(0.0), false))).and_then(|init| {
                    tuned(PenaltySpec::adaptive_from_initial(0.0, opts.mu, &init.beta), false)
                })
            }
            Method::SpacALasso => {
                let init = match InitMode::for_shape(data.n(), data.p()) {
                    InitMode::LowDim => alasso_initializer(data, d, InitMode::LowDim, &opts.grid, &opts.controls),
                    InitMode::HighDim => clone_result(
                        spac_lasso.get_or_insert_with(|| tuned(PenaltySpec::lasso(0.0), true)),
                    )
                    .and_then(|fit| support_ols(data, &fit.support()))
                    .map(|beta0| gamma_from_beta(&beta0, d)),
                };
                init.and_then(|g0| tuned(PenaltySpec::adaptive_from_initial(0.0, opts.mu, &g0), true))
            }
        };
        out.push((method, result));
    }
    out
}

/// BIC-tuned fit of a single method.
pub fn fit_method(data: &Dataset, d: &PrecisionDiag, method: Method, opts: &TuningOptions) -> Result<SpacFit> {
    fit_methods(data, d, &[method], opts).pop().expect("one method requested").1
}
