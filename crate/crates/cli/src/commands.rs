use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;
use spac::conditions::{
    ar1_sufficient_check, block_ar1_cov, block_exchangeable_cov, check_irrepresentable, exchangeable_sufficient_check,
    general_sufficient_check, random_c1_covariance, ConditionReport, CovarianceModel,
};
use spac::data::{load_csv_design, read_csv};
use spac::penalty::PenaltyFamily;
use spac::precision::estimate;
use spac::simulation::{builtin_setting, run_setting_with, BetaValue, RunOptions, SettingConfig, SettingId};
use spac::solver::{
    alasso_initializer, baseline_fit, baseline_path, bic, bic_select, coordinate_descent_fit, fit_method,
    lambda_path, InitMode, PathFit,
};
use spac::{load_csv, Dataset, Error, FitControls, Method, PathGrid, PenaltySpec, PrecisionDiag, Result, SpacFit,
    TuningOptions};

use crate::args::{CheckArgs, CorollaryArg, CovArg, FitArgs, GencovArgs, PenaltyArg, PrecisionArgs, SimulateArgs};
use crate::manifest::RunManifest;

/// Settings shared by every subcommand.
pub struct Context {
    pub seed: u64,
    pub seed_given: bool,
    pub workers: Option<usize>,
    pub out_csv: Option<PathBuf>,
    pub manifest: RunManifest,
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Error::Io(e.into()))?;
    writeln!(out)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(header).map_err(csv_error)?;
    for row in rows {
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Coefficient {
    name: String,
    /// On the standardized design.
    beta: f64,
    gamma: f64,
    /// On the original scale of the CSV columns.
    beta_original: f64,
}

#[derive(Serialize)]
struct FitReport {
    method: Method,
    selection: &'static str,
    lambda: f64,
    n: usize,
    p: usize,
    intercept: f64,
    coefficients: Vec<Coefficient>,
    support: Vec<usize>,
    df: usize,
    bic: f64,
    objective: f64,
    iterations: usize,
    converged: bool,
    precision: PrecisionDiag,
    penalty: PenaltySpec,
}

fn column_names(data: &Dataset) -> Vec<String> {
    match data.names() {
        Some(names) => names.to_vec(),
        None => (0..data.p()).map(|j| format!("x{j}")).collect(),
    }
}

fn fit_report(data: &Dataset, d: PrecisionDiag, fit: &SpacFit, selection: &'static str, method: Method) -> FitReport {
    let names = column_names(data);
    let mut intercept = data.y_mean();
    let coefficients = (0..data.p())
        .map(|j| {
            let original = fit.beta[j] / data.col_scales()[j];
            intercept -= original * data.col_means()[j];
            Coefficient {
                name: names[j].clone(),
                beta: fit.beta[j],
                gamma: fit.gamma[j],
                beta_original: original,
            }
        })
        .collect();
    FitReport {
        method,
        selection,
        lambda: fit.lambda,
        n: data.n(),
        p: data.p(),
        intercept,
        coefficients,
        support: fit.support(),
        df: fit.df(),
        bic: bic(data, fit),
        objective: fit.objective,
        iterations: fit.iterations,
        converged: fit.converged,
        precision: d,
        penalty: fit.penalty.clone(),
    }
}

fn write_path_csv(path: &Path, fits: &PathFit) -> Result<()> {
    let rows = fits
        .fits
        .iter()
        .zip(&fits.bic)
        .map(|(f, b)| vec![f.lambda.to_string(), f.df().to_string(), b.to_string(), f.converged.to_string()]);
    write_rows(path, &["lambda", "df", "bic", "converged"], rows)
}

pub fn fit(args: &FitArgs, ctx: &mut Context) -> Result<()> {
    ctx.manifest.add_input(&args.file)?;
    let data = load_csv(&args.file, &args.response)?;
    let spac = !args.no_spac;
    let family = match args.penalty {
        PenaltyArg::Lasso => PenaltyFamily::Lasso,
        PenaltyArg::Alasso => PenaltyFamily::AdaptiveLasso,
        PenaltyArg::Scad => PenaltyFamily::Scad,
    };
    let method = Method::from_parts(family, spac);
    let d = if spac {
        estimate(&data, args.precision.into(), args.lambda_d)?
    } else {
        PrecisionDiag::ones(data.p())
    };
    let opts = TuningOptions {
        a: args.a,
        mu: args.mu,
        grid: PathGrid {
            count: args.path_count,
            ..PathGrid::default()
        },
        controls: FitControls {
            tol: args.tol,
            max_iter: args.max_iter,
        },
    };

    let (fit, selection) = match args.lambda {
        None => {
            let fit = fit_method(&data, &d, method, &opts)?;
            if let Some(path) = &args.path_out {
                let penalty = fit.penalty.with_lambda(0.0);
                let full = if spac {
                    lambda_path(&data, &d, &penalty, &opts.grid, &opts.controls)?
                } else {
                    baseline_path(&data, &penalty, &opts.grid, &opts.controls)?
                };
                debug_assert_eq!(bic_select(&full)?.beta, fit.beta);
                write_path_csv(path, &full)?;
            }
            (fit, "bic")
        }
        Some(lambda) => {
            let penalty = match family {
                PenaltyFamily::Lasso => PenaltySpec::lasso(lambda),
                PenaltyFamily::Scad => PenaltySpec::scad(lambda, args.a),
                PenaltyFamily::AdaptiveLasso => {
                    let init = if spac {
                        let mode = InitMode::for_shape(data.n(), data.p());
                        alasso_initializer(&data, &d, mode, &opts.grid, &opts.controls)?
                    } else {
                        fit_method(&data, &d, Method::Lasso, &opts)?.beta
                    };
                    PenaltySpec::adaptive_from_initial(lambda, args.mu, &init)
                }
            };
            let fit = if spac {
                coordinate_descent_fit(&data, &d, &penalty, &vec![0.0; data.p()], &opts.controls)?
            } else {
                baseline_fit(&data, &penalty, &opts.controls)?
            };
            (fit, "fixed")
        }
    };

    let report = fit_report(&data, d, &fit, selection, method);
    if let Some(path) = &ctx.out_csv {
        let rows = report.coefficients.iter().map(|c| {
            vec![c.name.clone(), c.beta.to_string(), c.gamma.to_string(), c.beta_original.to_string()]
        });
        write_rows(path, &["name", "beta", "gamma", "beta_original"], rows)?;
    }
    print_json(&report)
}

fn simulation_config(args: &SimulateArgs, ctx: &mut Context) -> Result<SettingConfig> {
    let path = Path::new(&args.setting);
    let mut betas: Vec<BetaValue> = args.beta_s.iter().map(|&b| BetaValue::Scalar(b)).collect();
    for group in &args.beta_triple {
        let values = group
            .split('/')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::InvalidConfig(format!("bad --beta-triple {group:?}: {e}")))?;
        betas.push(BetaValue::Groups(values));
    }

    let mut cfg = if path.extension().is_some_and(|e| e == "toml") {
        ctx.manifest.add_input(path)?;
        let mut cfg = SettingConfig::from_toml_file(path)?;
        if let Some(alpha) = args.alpha {
            cfg.alpha = alpha;
        }
        if !betas.is_empty() {
            cfg.beta_values = betas;
        }
        if !ctx.seed_given {
            ctx.seed = cfg.seed;
            ctx.manifest.seed = cfg.seed;
        }
        cfg
    } else {
        let id: SettingId = args.setting.parse()?;
        if betas.is_empty() {
            return Err(Error::InvalidConfig(
                "built-in settings need --beta-s or --beta-triple".into(),
            ));
        }
        builtin_setting(id, args.alpha.unwrap_or((0.3, 0.5, 0.8)), betas)?
    };
    cfg.seed = ctx.seed;
    if let Some(r) = args.reps {
        cfg.replications = r;
    }
    if !args.methods.is_empty() {
        cfg.methods = args.methods.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn simulate(args: &SimulateArgs, ctx: &mut Context) -> Result<()> {
    let cfg = simulation_config(args, ctx)?;
    let opts = RunOptions {
        workers: ctx.workers,
        ..RunOptions::default()
    };
    let table = run_setting_with(&cfg, &opts)?;
    if let Some(path) = &ctx.out_csv {
        table.write_csv(create(path)?)?;
    }
    if let Some(path) = &args.per_rep_out {
        table.write_per_rep_csv(create(path)?)?;
    }
    print_json(&table)
}

fn need<T>(v: Option<T>, flag: &str, what: &str) -> Result<T> {
    v.ok_or_else(|| Error::InvalidConfig(format!("{flag} is required for {what}")))
}

fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let table = read_csv(path)?;
    let (r, c) = (table.rows.len(), table.ncols());
    if table.rows.iter().any(|row| row.len() != c) {
        return Err(Error::Dimension("ragged matrix file".into()));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| table.rows[i][j]))
}

#[derive(Serialize)]
struct CheckOutput {
    cov: String,
    p: usize,
    #[serde(flatten)]
    report: ConditionReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    sufficient_condition: Option<SufficientOutcome>,
}

#[derive(Serialize)]
struct SufficientOutcome {
    kind: &'static str,
    eta: f64,
    holds: bool,
}

pub fn check(args: &CheckArgs, ctx: &mut Context) -> Result<()> {
    let cov = match args.cov.as_str() {
        "exchangeable" => block_exchangeable_cov(
            args.q,
            need(args.p, "--p", "structured matrices")?,
            need(args.alpha, "--alpha", "structured matrices")?,
        )?,
        "ar1" => block_ar1_cov(
            args.q,
            need(args.p, "--p", "structured matrices")?,
            need(args.alpha, "--alpha", "structured matrices")?,
        )?,
        file => {
            let path = Path::new(file);
            ctx.manifest.add_input(path)?;
            CovarianceModel::explicit(read_matrix(path)?)?
        }
    };
    let signs = if args.signs.is_empty() {
        vec![1.0; args.q]
    } else {
        args.signs.clone()
    };
    let report = check_irrepresentable(&cov, args.q, &signs)?;
    let sufficient_condition = match args.corollary {
        None => None,
        Some(which) => {
            let (kind, holds) = match which {
                CorollaryArg::Exchangeable => {
                    let alpha = need(args.alpha, "--alpha", "the exchangeable condition")?;
                    ("exchangeable", exchangeable_sufficient_check(alpha, args.l_lower, args.eta))
                }
                CorollaryArg::Ar1 => {
                    let alpha = need(args.alpha, "--alpha", "the AR(1) condition")?;
                    ("ar1", ar1_sufficient_check(alpha, args.eta)?)
                }
                CorollaryArg::General => ("general", general_sufficient_check(&cov, args.q, args.eta)?),
            };
            Some(SufficientOutcome {
                kind,
                eta: args.eta,
                holds,
            })
        }
    };
    if let Some(path) = &ctx.out_csv {
        let rows = report
            .original_vector
            .iter()
            .zip(&report.transformed_vector)
            .enumerate()
            .map(|(i, (o, t))| vec![(args.q + i).to_string(), o.to_string(), t.to_string()]);
        write_rows(path, &["index", "original", "transformed"], rows)?;
    }
    print_json(&CheckOutput {
        cov: args.cov.clone(),
        p: cov.p(),
        report,
        sufficient_condition,
    })
}

#[derive(Serialize)]
struct MatrixOutput {
    kind: &'static str,
    q: usize,
    p: usize,
    matrix: Vec<Vec<f64>>,
}

pub fn gencov(args: &GencovArgs, ctx: &mut Context) -> Result<()> {
    let structured = || need(args.alpha, "--alpha", "structured matrices");
    let (kind, cov) = match args.cov {
        CovArg::Exchangeable => ("exchangeable", block_exchangeable_cov(args.q, args.p, structured()?)?),
        CovArg::Ar1 => ("ar1", block_ar1_cov(args.q, args.p, structured()?)?),
        CovArg::Random => ("random", random_c1_covariance(args.p, args.q, args.shift, ctx.seed)?),
    };
    let m = cov.matrix();
    let matrix: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    if let Some(path) = &ctx.out_csv {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(create(path)?);
        for row in &matrix {
            w.write_record(row.iter().map(f64::to_string)).map_err(csv_error)?;
        }
        w.flush()?;
    }
    print_json(&MatrixOutput {
        kind,
        q: args.q,
        p: args.p,
        matrix,
    })
}

#[derive(Serialize)]
struct PrecisionOutput {
    names: Vec<String>,
    n: usize,
    p: usize,
    #[serde(flatten)]
    diag: PrecisionDiag,
}

pub fn precision(args: &PrecisionArgs, ctx: &mut Context) -> Result<()> {
    ctx.manifest.add_input(&args.file)?;
    let data = match &args.response {
        Some(col) => load_csv(&args.file, col)?,
        None => load_csv_design(&args.file)?,
    };
    let diag = estimate(&data, args.method.into(), args.lambda_d)?;
    let names = column_names(&data);
    if let Some(path) = &ctx.out_csv {
        let rows = names.iter().zip(&diag.d).map(|(n, d)| vec![n.clone(), d.to_string()]);
        write_rows(path, &["name", "d"], rows)?;
    }
    print_json(&PrecisionOutput {
        names,
        n: data.n(),
        p: data.p(),
        diag,
    })
}
