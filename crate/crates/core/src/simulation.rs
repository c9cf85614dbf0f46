//! Monte-Carlo harness: generate correlated designs, fit every method with
//! BIC tuning and score false negative / false positive rates.
//!
//! Replication `r` of beta value `b` draws from a ChaCha8 stream selected by
//! `(b, r)` under the master seed, so results do not depend on how the work is
//! scheduled across threads.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditions::{block_ar1_cov, block_exchangeable_cov, random_c1_covariance, CovarianceModel};
use crate::data::{standardize, Dataset};
use crate::error::{Error, Result};
use crate::precision::{self, PrecisionChoice};
use crate::solver::{fit_methods, Method, TuningOptions};

/// Estimates with magnitude below this count as zero when scoring.
pub const ZERO_THRESHOLD: f64 = 1e-10;
/// A method/beta cell aborts the run once more than this fraction of replications fail.
pub const MAX_FAILURE_RATE: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct SimTruth {
    pub beta: Vec<f64>,
    pub q: usize,
    pub sigma2: f64,
    pub cov: CovarianceModel,
    pub binary_columns: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SettingId {
    S1,
    S2,
    S3,
    S4,
    Custom,
}

impl FromStr for SettingId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().trim_start_matches('S') {
            "1" => Ok(SettingId::S1),
            "2" => Ok(SettingId::S2),
            "3" => Ok(SettingId::S3),
            "4" => Ok(SettingId::S4),
            _ => Err(Error::UnknownSetting(s.to_string())),
        }
    }
}

impl fmt::Display for SettingId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SettingId::S1 => "S1",
            SettingId::S2 => "S2",
            SettingId::S3 => "S3",
            SettingId::S4 => "S4",
            SettingId::Custom => "custom",
        })
    }
}

/// Either one value shared by all relevant coefficients or a list of values
/// assigned to equal-sized consecutive groups of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaValue {
    Scalar(f64),
    Groups(Vec<f64>),
}

impl BetaValue {
    pub fn label(&self) -> String {
        match self {
            BetaValue::Scalar(v) => v.to_string(),
            BetaValue::Groups(vs) => vs.iter().map(f64::to_string).collect::<Vec<_>>().join("/"),
        }
    }

    /// Full coefficient vector: the first `q` entries nonzero, the rest zero.
    pub fn expand(&self, q: usize, p: usize) -> Result<Vec<f64>> {
        let mut beta = vec![0.0; p];
        match self {
            BetaValue::Scalar(v) => beta[..q].fill(*v),
            BetaValue::Groups(vs) => {
                if vs.is_empty() || !q.is_multiple_of(vs.len()) {
                    return Err(Error::InvalidConfig(format!(
                        "{} beta groups do not evenly split q = {q}",
                        vs.len()
                    )));
                }
                let size = q / vs.len();
                for (k, v) in vs.iter().enumerate() {
                    beta[k * size..(k + 1) * size].fill(*v);
                }
            }
        }
        if beta[..q].iter().any(|b| *b == 0.0 || !b.is_finite()) {
            return Err(Error::InvalidConfig("relevant coefficients must be finite and nonzero".into()));
        }
        Ok(beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CovarianceStructure {
    Exchangeable,
    Ar1,
    /// Randomly generated matrix with cross-block shift drawn from `U(low, high)`.
    Random { low: f64, high: f64 },
}

fn default_sigma2() -> f64 {
    1.0
}

fn default_replications() -> usize {
    100
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_structure() -> CovarianceStructure {
    CovarianceStructure::Exchangeable
}

fn default_setting() -> SettingId {
    SettingId::Custom
}

/// Everything that determines a simulation run.
///
/// A TOML file with the same field names can be loaded with
/// [`SettingConfig::from_toml_str`]; see the README for the schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettingConfig {
    #[serde(default = "default_setting")]
    pub setting_id: SettingId,
    pub n: usize,
    pub p: usize,
    pub q: usize,
    #[serde(default = "default_sigma2")]
    pub sigma2: f64,
    pub beta_values: Vec<BetaValue>,
    pub alpha: (f64, f64, f64),
    #[serde(default = "default_structure")]
    pub covariance: CovarianceStructure,
    /// Zero-based columns that are dichotomized at zero.
    #[serde(default)]
    pub binary_columns: Vec<usize>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
}

impl SettingConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: SettingConfig = toml::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n < 2 || self.p == 0 || self.q == 0 || self.replications == 0 {
            return bad("n >= 2 and p, q, replications > 0 are required".into());
        }
        if self.q >= self.p {
            return bad(format!("need q < p, got q = {}, p = {}", self.q, self.p));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return bad(format!("sigma2 must be positive, got {}", self.sigma2));
        }
        if self.beta_values.is_empty() {
            return bad("beta_values is empty".into());
        }
        if self.methods.is_empty() {
            return bad("methods is empty".into());
        }
        if let Some(j) = self.binary_columns.iter().find(|&&j| j >= self.p) {
            return bad(format!("binary column {j} out of range for p = {}", self.p));
        }
        for b in &self.beta_values {
            b.expand(self.q, self.p)?;
        }
        Ok(())
    }

    pub fn covariance_model(&self) -> Result<CovarianceModel> {
        match self.covariance {
            CovarianceStructure::Exchangeable => block_exchangeable_cov(self.q, self.p, self.alpha),
            CovarianceStructure::Ar1 => block_ar1_cov(self.q, self.p, self.alpha),
            CovarianceStructure::Random { low, high } => random_c1_covariance(self.p, self.q, (low, high), self.seed),
        }
    }

    pub fn truth(&self, beta: &BetaValue) -> Result<SimTruth> {
        Ok(SimTruth {
            beta: beta.expand(self.q, self.p)?,
            q: self.q,
            sigma2: self.sigma2,
            cov: self.covariance_model()?,
            binary_columns: self.binary_columns.clone(),
        })
    }
}

/// Constants of the four built-in settings.
pub fn builtin_setting(id: SettingId, alpha: (f64, f64, f64), beta_values: Vec<BetaValue>) -> Result<SettingConfig> {
    let (n, p, q, binary_columns) = match id {
        SettingId::S1 => (80, 150, 10, Vec::new()),
        SettingId::S2 => (100, 200, 10, Vec::new()),
        SettingId::S3 => (100, 200, 9, Vec::new()),
        SettingId::S4 => (100, 150, 10, (0..3).chain(10..60).collect()),
        SettingId::Custom => return Err(Error::UnknownSetting("custom settings need a config file".into())),
    };
    let cfg = SettingConfig {
        setting_id: id,
        n,
        p,
        q,
        sigma2: 1.0,
        beta_values,
        alpha,
        covariance: CovarianceStructure::Exchangeable,
        binary_columns,
        replications: default_replications(),
        seed: 0,
        methods: default_methods(),
    };
    cfg.validate()?;
    Ok(cfg)
}

/// `n` rows drawn from `N(0, C)` through the Cholesky factor of `C`; binary
/// columns are set to `1{x > 0}`; all columns are then standardized.
pub fn generate_design<R: Rng + ?Sized>(
    cov: &CovarianceModel,
    n: usize,
    binary_columns: &[usize],
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let p = cov.p();
    let chol = cov
        .matrix()
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite(f64::NAN))?;
    let l = chol.l();
    let mut z = DMatrix::<f64>::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            z[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let mut x = z * l.transpose();
    for &j in binary_columns {
        if j >= p {
            return Err(Error::Dimension(format!("binary column {j} out of range for p = {p}")));
        }
        x.column_mut(j).apply(|v| *v = if *v > 0.0 { 1.0 } else { 0.0 });
    }
    Ok(standardize(&x, &DVector::zeros(n))?.x().clone())
}

/// `y = X beta + eps` with `eps ~ N(0, sigma2 I)`, centered.
pub fn generate_response<R: Rng + ?Sized>(x: &DMatrix<f64>, truth: &SimTruth, rng: &mut R) -> Result<DVector<f64>> {
    if x.ncols() != truth.beta.len() {
        return Err(Error::Dimension(format!(
            "design has {} columns, beta has {}",
            x.ncols(),
            truth.beta.len()
        )));
    }
    let sd = truth.sigma2.sqrt();
    let mut y = x * DVector::from_column_slice(&truth.beta);
    for v in y.iter_mut() {
        let e: f64 = rng.sample(StandardNormal);
        *v += sd * e;
    }
    let mean = y.mean();
    y.add_scalar_mut(-mean);
    Ok(y)
}

/// `(FNR, FPR)` of an estimate against the truth.
pub fn fnr_fpr(beta_hat: &[f64], beta_true: &[f64]) -> Result<(f64, f64)> {
    if beta_hat.len() != beta_true.len() {
        return Err(Error::Dimension(format!(
            "estimate has {} entries, truth has {}",
            beta_hat.len(),
            beta_true.len()
        )));
    }
    let relevant = beta_true.iter().filter(|b| **b != 0.0).count();
    let irrelevant = beta_true.len() - relevant;
    if relevant == 0 || irrelevant == 0 {
        return Err(Error::DegenerateTruth);
    }
    let (mut missed, mut spurious) = (0usize, 0usize);
    for (h, t) in beta_hat.iter().zip(beta_true) {
        let selected = h.abs() >= ZERO_THRESHOLD;
        match (*t != 0.0, selected) {
            (true, false) => missed += 1,
            (false, true) => spurious += 1,
            _ => {}
        }
    }
    Ok((missed as f64 / relevant as f64, spurious as f64 / irrelevant as f64))
}

/// Runtime knobs that do not change what is being estimated.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the available parallelism.
    pub workers: Option<usize>,
    pub tuning: TuningOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepScore {
    pub beta: String,
    pub replication: usize,
    pub method: Method,
    pub fnr: Option<f64>,
    pub fpr: Option<f64>,
    /// Error kind when the fit failed.
    pub error: Option<String>,
    /// Whether the estimated sign pattern equals the truth's.
    pub sign_match: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub beta: String,
    pub method: Method,
    pub fnr_mean: f64,
    pub fpr_mean: f64,
    /// Absent with fewer than two successful replications.
    pub fnr_sd: Option<f64>,
    pub fpr_sd: Option<f64>,
    pub replications: usize,
    pub failures: usize,
    /// Share of replications with exactly the true sign pattern.
    pub sign_recovery: f64,
}

impl MetricsRow {
    pub fn total_error(&self) -> f64 {
        self.fnr_mean + self.fpr_mean
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioRow {
    pub beta: String,
    pub baseline: Method,
    pub spac: Method,
    /// `(FNR + FPR of baseline) / (FNR + FPR of SPAC)`; absent when the denominator is 0.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsTable {
    pub setting: SettingId,
    pub seed: u64,
    pub rows: Vec<MetricsRow>,
    pub ratios: Vec<RatioRow>,
    #[serde(skip)]
    pub per_rep: Vec<RepScore>,
}

impl MetricsTable {
    pub fn row(&self, beta: &str, method: Method) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.beta == beta && r.method == method)
    }

    pub fn ratio(&self, beta: &str, spac: Method) -> Option<f64> {
        self.ratios
            .iter()
            .find(|r| r.beta == beta && r.spac == spac)
            .and_then(|r| r.ratio)
    }

    /// One line per method and beta value; SPAC rows carry the ratio to their baseline.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
        out.write_record([
            "setting", "beta", "method", "fnr_mean", "fpr_mean", "fnr_sd", "fpr_sd", "replications", "failures",
            "sign_recovery", "ratio",
        ])
        .map_err(csv_err)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            let ratio = if r.method.is_spac() { self.ratio(&r.beta, r.method) } else { None };
            out.write_record([
                self.setting.to_string(),
                r.beta.clone(),
                r.method.to_string(),
                r.fnr_mean.to_string(),
                r.fpr_mean.to_string(),
                opt(r.fnr_sd),
                opt(r.fpr_sd),
                r.replications.to_string(),
                r.failures.to_string(),
                r.sign_recovery.to_string(),
                opt(ratio),
            ])
            .map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_per_rep_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
        out.write_record(["beta", "replication", "method", "fnr", "fpr", "sign_match", "error"])
            .map_err(csv_err)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for s in &self.per_rep {
            out.write_record([
                s.beta.clone(),
                s.replication.to_string(),
                s.method.to_string(),
                opt(s.fnr),
                opt(s.fpr),
                s.sign_match.map(|b| b.to_string()).unwrap_or_default(),
                s.error.clone().unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Generator for replication `rep` of beta value `beta_index`.
pub fn replication_rng(seed: u64, beta_index: usize, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((beta_index as u64) << 32) | rep as u64);
    rng
}

fn sign_of(v: f64) -> i8 {
    if v.abs() < ZERO_THRESHOLD {
        0
    } else if v > 0.0 {
        1
    } else {
        -1
    }
}

fn replicate(
    truth: &SimTruth,
    n: usize,
    methods: &[Method],
    tuning: &TuningOptions,
    mut rng: ChaCha8Rng,
) -> Vec<std::result::Result<(f64, f64, bool), String>> {
    let fail_all = |e: Error| methods.iter().map(|_| Err(e.kind().to_string())).collect();
    let data: Dataset = match generate_design(&truth.cov, n, &truth.binary_columns, &mut rng)
        .and_then(|x| generate_response(&x, truth, &mut rng).and_then(|y| standardize(&x, &y)))
    {
        Ok(d) => d,
        Err(e) => return fail_all(e),
    };
    let d_hat = if methods.iter().any(|m| m.is_spac()) {
        precision::estimate(&data, PrecisionChoice::Auto, None).map_err(|e| e.kind().to_string())
    } else {
        Ok(precision::PrecisionDiag::ones(data.p()))
    };
    let (baseline, spac): (Vec<Method>, Vec<Method>) = methods.iter().partition(|m| !m.is_spac());
    let mut fits = fit_methods(&data, &precision::PrecisionDiag::ones(data.p()), &baseline, tuning);
    if let Ok(d) = &d_hat {
        fits.extend(fit_methods(&data, d, &spac, tuning));
    }
    methods
        .iter()
        .map(|m| {
            if m.is_spac() {
                if let Err(kind) = &d_hat {
                    return Err(kind.clone());
                }
            }
            let (_, fit) = fits.iter().find(|(fm, _)| fm == m).expect("every method was fitted");
            match fit {
                Ok(fit) => {
                    let (fnr, fpr) = fnr_fpr(&fit.beta, &truth.beta).map_err(|e| e.kind().to_string())?;
                    let signs = fit.beta.iter().zip(&truth.beta).all(|(h, t)| sign_of(*h) == sign_of(*t));
                    Ok((fnr, fpr, signs))
                }
                Err(e) => Err(e.kind().to_string()),
            }
        })
        .collect()
}

fn mean_sd(values: &[f64]) -> (f64, Option<f64>) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let sd = (values.len() > 1)
        .then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt());
    (mean, sd)
}

pub fn run_setting(config: &SettingConfig) -> Result<MetricsTable> {
    run_setting_with(config, &RunOptions::default())
}

pub fn run_setting_with(config: &SettingConfig, opts: &RunOptions) -> Result<MetricsTable> {
    config.validate()?;
    let truths: Vec<SimTruth> = config
        .beta_values
        .iter()
        .map(|b| config.truth(b))
        .collect::<Result<_>>()?;
    let tasks: Vec<(usize, usize)> = (0..truths.len())
        .flat_map(|b| (0..config.replications).map(move |r| (b, r)))
        .collect();

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = opts.workers {
        builder = builder.num_threads(w.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<_> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(b, r)| {
                let rng = replication_rng(config.seed, b, r);
                replicate(&truths[b], config.n, &config.methods, &opts.tuning, rng)
            })
            .collect()
    });

    let mut per_rep = Vec::with_capacity(tasks.len() * config.methods.len());
    for (&(b, r), outcome) in tasks.iter().zip(&outcomes) {
        for (m, res) in config.methods.iter().zip(outcome) {
            let label = config.beta_values[b].label();
            per_rep.push(match res {
                Ok((fnr, fpr, signs)) => RepScore {
                    beta: label,
                    replication: r,
                    method: *m,
                    fnr: Some(*fnr),
                    fpr: Some(*fpr),
                    error: None,
                    sign_match: Some(*signs),
                },
                Err(kind) => RepScore {
                    beta: label,
                    replication: r,
                    method: *m,
                    fnr: None,
                    fpr: None,
                    error: Some(kind.clone()),
                    sign_match: None,
                },
            });
        }
    }

    let mut rows = Vec::new();
    for beta in &config.beta_values {
        let label = beta.label();
        for &method in &config.methods {
            let scores: Vec<&RepScore> = per_rep
                .iter()
                .filter(|s| s.beta == label && s.method == method)
                .collect();
            let ok: Vec<&RepScore> = scores.iter().copied().filter(|s| s.error.is_none()).collect();
            let failures = scores.len() - ok.len();
            if failures as f64 > MAX_FAILURE_RATE * scores.len() as f64 || ok.is_empty() {
                return Err(Error::TooManyFailures {
                    method: format!("{method} at beta {label}"),
                    failed: failures,
                    total: scores.len(),
                });
            }
            let fnrs: Vec<f64> = ok.iter().filter_map(|s| s.fnr).collect();
            let fprs: Vec<f64> = ok.iter().filter_map(|s| s.fpr).collect();
            let (fnr_mean, fnr_sd) = mean_sd(&fnrs);
            let (fpr_mean, fpr_sd) = mean_sd(&fprs);
            let hits = ok.iter().filter(|s| s.sign_match == Some(true)).count();
            rows.push(MetricsRow {
                beta: label.clone(),
                method,
                fnr_mean,
                fpr_mean,
                fnr_sd,
                fpr_sd,
                replications: ok.len(),
                failures,
                sign_recovery: hits as f64 / ok.len() as f64,
            });
        }
    }

    let mut ratios = Vec::new();
    for beta in &config.beta_values {
        let label = beta.label();
        for &spac in config.methods.iter().filter(|m| m.is_spac()) {
            let baseline = spac.baseline();
            let find = |m: Method| rows.iter().find(|r: &&MetricsRow| r.beta == label && r.method == m);
            if let (Some(b), Some(s)) = (find(baseline), find(spac)) {
                let den = s.total_error();
                ratios.push(RatioRow {
                    beta: label.clone(),
                    baseline,
                    spac,
                    ratio: (den > 0.0).then(|| b.total_error() / den),
                });
            }
        }
    }

    Ok(MetricsTable {
        setting: config.setting_id,
        seed: config.seed,
        rows,
        ratios,
        per_rep,
    })
}
