//! Regression data in canonical form: every design column has mean zero and
//! squared norm `n`, and the response is centered. No intercept is fitted
//! anywhere downstream.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Standardized design and centered response, with the affine maps that
/// produced them.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    col_means: DVector<f64>,
    col_scales: DVector<f64>,
    y_mean: f64,
    names: Option<Vec<String>>,
}

impl Dataset {
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn col_means(&self) -> &DVector<f64> {
        &self.col_means
    }

    pub fn col_scales(&self) -> &DVector<f64> {
        &self.col_scales
    }

    pub fn y_mean(&self) -> f64 {
        self.y_mean
    }

    /// Predictor names, when the data came from a CSV with a header row.
    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    /// Undo the column standardization, returning the raw design.
    pub fn unscaled_x(&self) -> DMatrix<f64> {
        let mut raw = self.x.clone();
        for (j, mut col) in raw.column_iter_mut().enumerate() {
            let (m, s) = (self.col_means[j], self.col_scales[j]);
            col.iter_mut().for_each(|v| *v = *v * s + m);
        }
        raw
    }

    /// Same design with a different (already centered or raw) response.
    pub fn with_response(&self, raw_y: &DVector<f64>) -> Result<Dataset> {
        if raw_y.len() != self.n() {
            return Err(Error::Dimension(format!(
                "response has {} entries, design has {} rows",
                raw_y.len(),
                self.n()
            )));
        }
        check_finite(raw_y.iter())?;
        let y_mean = raw_y.mean();
        Ok(Dataset {
            y: raw_y.map(|v| v - y_mean),
            y_mean,
            ..self.clone()
        })
    }

    /// Column subset in the given order, already standardized.
    pub fn select_columns(&self, cols: &[usize]) -> Dataset {
        let x = self.x.select_columns(cols.iter());
        Dataset {
            x,
            y: self.y.clone(),
            col_means: DVector::from_iterator(cols.len(), cols.iter().map(|&j| self.col_means[j])),
            col_scales: DVector::from_iterator(cols.len(), cols.iter().map(|&j| self.col_scales[j])),
            y_mean: self.y_mean,
            names: self
                .names
                .as_ref()
                .map(|names| cols.iter().map(|&j| names[j].clone()).collect()),
        }
    }
}

fn check_finite<'a>(values: impl IntoIterator<Item = &'a f64>) -> Result<()> {
    if values.into_iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("input contains NaN or infinite values".into()));
    }
    Ok(())
}

/// Center every column and scale it so that `X_j^T X_j = n`; center `y`.
pub fn standardize(raw_x: &DMatrix<f64>, raw_y: &DVector<f64>) -> Result<Dataset> {
    let (n, p) = raw_x.shape();
    if n < 2 || p < 1 {
        return Err(Error::Dimension(format!("need n >= 2 and p >= 1, got n={n}, p={p}")));
    }
    if raw_y.len() != n {
        return Err(Error::Dimension(format!(
            "response has {} entries, design has {n} rows",
            raw_y.len()
        )));
    }
    check_finite(raw_x.iter())?;
    check_finite(raw_y.iter())?;

    let nf = n as f64;
    let mut x = raw_x.clone();
    let mut col_means = DVector::zeros(p);
    let mut col_scales = DVector::zeros(p);
    for (j, mut col) in x.column_iter_mut().enumerate() {
        let mean = col.sum() / nf;
        col.add_scalar_mut(-mean);
        let ss = col.norm_squared();
        // relative test so that columns like (c, c, c) with rounding noise still count as constant
        let scale_ref = mean.abs().max(1.0);
        if ss <= (1e-13 * scale_ref).powi(2) * nf {
            return Err(Error::ZeroVarianceColumn(j));
        }
        let scale = (ss / nf).sqrt();
        col.scale_mut(1.0 / scale);
        col_means[j] = mean;
        col_scales[j] = scale;
    }

    let y_mean = raw_y.sum() / nf;
    let y = raw_y.map(|v| v - y_mean);
    Ok(Dataset {
        x,
        y,
        col_means,
        col_scales,
        y_mean,
        names: None,
    })
}

/// Which CSV column holds the response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResponseColumn {
    Name(String),
    /// Zero-based column index.
    Index(usize),
}

impl std::str::FromStr for ResponseColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => ResponseColumn::Index(i),
            Err(_) => ResponseColumn::Name(s.to_string()),
        })
    }
}

/// Raw numeric table read from a CSV file.
#[derive(Debug, Clone)]
pub struct CsvTable {
    pub header: Option<Vec<String>>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn ncols(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    fn resolve(&self, which: &ResponseColumn) -> Result<usize> {
        match which {
            ResponseColumn::Name(name) => self
                .header
                .as_ref()
                .and_then(|h| h.iter().position(|c| c == name))
                .ok_or_else(|| Error::MissingColumn(name.clone())),
            ResponseColumn::Index(i) => {
                // a header named like an integer wins over the positional reading
                if let Some(pos) = self
                    .header
                    .as_ref()
                    .and_then(|h| h.iter().position(|c| *c == i.to_string()))
                {
                    return Ok(pos);
                }
                if *i < self.ncols() {
                    Ok(*i)
                } else {
                    Err(Error::MissingColumn(format!("index {i}")))
                }
            }
        }
    }
}

/// Read a rectangular numeric CSV. The first row is treated as a header when
/// any of its cells is not a number.
pub fn read_csv(path: &Path) -> Result<CsvTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_error)?;

    let mut header = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(idx + 1, |p| p.line() as usize);
        let parsed: Vec<std::result::Result<f64, _>> =
            record.iter().map(str::parse::<f64>).collect();
        if idx == 0 && parsed.iter().any(|r| r.is_err()) {
            header = Some(record.iter().map(str::to_string).collect());
            continue;
        }
        let mut row = Vec::with_capacity(parsed.len());
        for (col, cell) in parsed.into_iter().enumerate() {
            match cell {
                Ok(v) => row.push(v),
                Err(_) => {
                    return Err(Error::Parse {
                        line,
                        message: format!("non-numeric cell {:?} in column {}", &record[col], col),
                    })
                }
            }
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {} fields, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no data rows".into(),
        });
    }
    Ok(CsvTable { header, rows })
}

fn csv_error(err: csv::Error) -> Error {
    let line = err.position().map_or(0, |p| p.line() as usize);
    match err.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Parse a CSV file, pull out the response column and standardize the rest.
pub fn load_csv(path: &Path, response: &ResponseColumn) -> Result<Dataset> {
    let table = read_csv(path)?;
    let resp = table.resolve(response)?;
    table_to_dataset(&table, Some(resp))
}

/// Standardize every column of a CSV as a predictor; the response is zero.
pub fn load_csv_design(path: &Path) -> Result<Dataset> {
    let table = read_csv(path)?;
    table_to_dataset(&table, None)
}

fn table_to_dataset(table: &CsvTable, response: Option<usize>) -> Result<Dataset> {
    let n = table.rows.len();
    let predictors: Vec<usize> = (0..table.ncols()).filter(|&c| Some(c) != response).collect();
    let raw_x = DMatrix::from_fn(n, predictors.len(), |i, j| table.rows[i][predictors[j]]);
    let raw_y = match response {
        Some(r) => DVector::from_fn(n, |i, _| table.rows[i][r]),
        None => DVector::zeros(n),
    };
    let mut data = standardize(&raw_x, &raw_y)?;
    data.names = table
        .header
        .as_ref()
        .map(|h| predictors.iter().map(|&c| h[c].clone()).collect());
    Ok(data)
}
