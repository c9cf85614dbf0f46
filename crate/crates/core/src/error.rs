use thiserror::Error;

use crate::solver::SpacFit;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("ZeroVarianceColumn: column {0} is constant")]
    ZeroVarianceColumn(usize),

    #[error("NonFiniteInput: {0}")]
    NonFiniteInput(String),

    #[error("ParseError at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("MissingColumn: {0}")]
    MissingColumn(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("DimensionError: {0}")]
    Dimension(String),

    #[error("SingularDesign: {0}")]
    SingularDesign(String),

    #[error("DegenerateResidual: residual variance of column {0} underflows")]
    DegenerateResidual(usize),

    #[error("NoConvergence after {iterations} iterations")]
    NoConvergence {
        iterations: usize,
        /// Last iterate of the coordinate-descent solver, when there is one.
        fit: Option<Box<SpacFit>>,
    },

    #[error("NonFiniteIterate: objective diverged at iteration {0}")]
    NonFiniteIterate(usize),

    #[error("AllZeroResponse: response is identically zero")]
    AllZeroResponse,

    #[error("NoPenalizableCoordinate: every adaptive weight is infinite")]
    NoPenalizableCoordinate,

    #[error("NoConvergedFit: no path entry converged")]
    NoConvergedFit,

    #[error("InvalidPenalty: {0}")]
    InvalidPenalty(String),

    #[error("NotPositiveDefinite: smallest eigenvalue {0:e}")]
    NotPositiveDefinite(f64),

    #[error("DegenerateDenominator: {0}")]
    DegenerateDenominator(String),

    #[error("NegativeEntry: entry ({0}, {1}) is negative")]
    NegativeEntry(usize, usize),

    #[error("DegenerateTruth: true coefficients must contain zero and nonzero entries")]
    DegenerateTruth,

    #[error("UnknownSetting: {0}")]
    UnknownSetting(String),

    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),

    #[error("TooManyFailures: {failed} of {total} replications failed for {method}")]
    TooManyFailures {
        method: String,
        failed: usize,
        total: usize,
    },
}

impl Error {
    /// Copy of this error for reporting it a second time; partial fits are dropped.
    pub fn duplicate(&self) -> Error {
        match self {
            Error::ZeroVarianceColumn(j) => Error::ZeroVarianceColumn(*j),
            Error::NonFiniteInput(m) => Error::NonFiniteInput(m.clone()),
            Error::Parse { line, message } => Error::Parse {
                line: *line,
                message: message.clone(),
            },
            Error::MissingColumn(m) => Error::MissingColumn(m.clone()),
            Error::Io(e) => Error::Io(std::io::Error::new(e.kind(), e.to_string())),
            Error::Dimension(m) => Error::Dimension(m.clone()),
            Error::SingularDesign(m) => Error::SingularDesign(m.clone()),
            Error::DegenerateResidual(j) => Error::DegenerateResidual(*j),
            Error::NoConvergence { iterations, .. } => Error::NoConvergence {
                iterations: *iterations,
                fit: None,
            },
            Error::NonFiniteIterate(k) => Error::NonFiniteIterate(*k),
            Error::AllZeroResponse => Error::AllZeroResponse,
            Error::NoPenalizableCoordinate => Error::NoPenalizableCoordinate,
            Error::NoConvergedFit => Error::NoConvergedFit,
            Error::InvalidPenalty(m) => Error::InvalidPenalty(m.clone()),
            Error::NotPositiveDefinite(v) => Error::NotPositiveDefinite(*v),
            Error::DegenerateDenominator(m) => Error::DegenerateDenominator(m.clone()),
            Error::NegativeEntry(i, j) => Error::NegativeEntry(*i, *j),
            Error::DegenerateTruth => Error::DegenerateTruth,
            Error::UnknownSetting(m) => Error::UnknownSetting(m.clone()),
            Error::InvalidConfig(m) => Error::InvalidConfig(m.clone()),
            Error::TooManyFailures { method, failed, total } => Error::TooManyFailures {
                method: method.clone(),
                failed: *failed,
                total: *total,
            },
        }
    }

    /// Short variant name, used by the CLI when mapping errors to messages.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ZeroVarianceColumn(_) => "ZeroVarianceColumn",
            Error::NonFiniteInput(_) => "NonFiniteInput",
            Error::Parse { .. } => "ParseError",
            Error::MissingColumn(_) => "MissingColumn",
            Error::Io(_) => "IoError",
            Error::Dimension(_) => "DimensionError",
            Error::SingularDesign(_) => "SingularDesign",
            Error::DegenerateResidual(_) => "DegenerateResidual",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::NonFiniteIterate(_) => "NonFiniteIterate",
            Error::AllZeroResponse => "AllZeroResponse",
            Error::NoPenalizableCoordinate => "NoPenalizableCoordinate",
            Error::NoConvergedFit => "NoConvergedFit",
            Error::InvalidPenalty(_) => "InvalidPenalty",
            Error::NotPositiveDefinite(_) => "NotPositiveDefinite",
            Error::DegenerateDenominator(_) => "DegenerateDenominator",
            Error::NegativeEntry(..) => "NegativeEntry",
            Error::DegenerateTruth => "DegenerateTruth",
            Error::UnknownSetting(_) => "UnknownSetting",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::TooManyFailures { .. } => "TooManyFailures",
        }
    }
}
