//! Datasets, anchored coefficient vectors, and pairwise statistics.

use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Response vector plus an `n x d` design matrix with column names.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    x: DMatrix<f64>,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(y: Vec<f64>, x: DMatrix<f64>, feature_names: Vec<String>) -> Result<Self> {
        let n = y.len();
        if x.nrows() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: x.nrows(),
            });
        }
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 observations, got {n}"
            )));
        }
        if x.ncols() < 1 {
            return Err(Error::InvalidInput("need at least one covariate".into()));
        }
        if feature_names.len() != x.ncols() {
            return Err(Error::DimensionMismatch {
                expected: x.ncols(),
                got: feature_names.len(),
            });
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("response at row {i}")));
        }
        if let Some(k) = x.iter().position(|v| !v.is_finite()) {
            let (i, j) = (k % n, k / n);
            return Err(Error::NonFinite(format!("covariate at row {i}, column {j}")));
        }
        Ok(Self {
            y,
            x,
            feature_names,
        })
    }

    /// Builds a dataset from row vectors, naming columns `x1..xd`.
    pub fn from_rows(y: Vec<f64>, rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: bad.len(),
            });
        }
        let x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
        Self::new(y, x, default_names(d))
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// Contiguous view of column `j` (the matrix is column-major).
    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.n();
        &self.x.as_slice()[j * n..(j + 1) * n]
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|f| f == name)
    }

    /// Same covariates with a new response.
    pub fn with_response(&self, y: Vec<f64>) -> Result<Self> {
        Self::new(y, self.x.clone(), self.feature_names.clone())
    }

    /// Rows selected by `rows`, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let y = rows.iter().map(|&i| self.y[i]).collect();
        let x = DMatrix::from_fn(rows.len(), self.d(), |r, j| self.x[(rows[r], j)]);
        Self::new(y, x, self.feature_names.clone())
    }

    /// Index vector `X coef`.
    pub fn index(&self, coef: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.n()];
        for (j, &b) in coef.iter().enumerate() {
            if b != 0.0 {
                for (ui, &xij) in u.iter_mut().zip(self.column(j)) {
                    *ui += b * xij;
                }
            }
        }
        u
    }

    /// Reads a CSV with a header row. `response` names the response column;
    /// when `None` the first column is the response. Lines starting with `#`
    /// are skipped.
    pub fn from_csv_path(path: &Path, response: Option<&str>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file, response)
    }

    pub fn from_csv_reader<R: Read>(reader: R, response: Option<&str>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .comment(Some(b'#'))
            .from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        if headers.len() < 2 {
            return Err(Error::InvalidInput(
                "csv needs a response column and at least one covariate".into(),
            ));
        }
        let resp_idx = match response {
            Some(name) => headers.iter().position(|h| h == name).ok_or_else(|| {
                Error::InvalidInput(format!("response column '{name}' not found"))
            })?,
            None => 0,
        };
        let mut y = Vec::new();
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); headers.len() - 1];
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != headers.len() {
                return Err(Error::InvalidInput(format!(
                    "row {} has {} fields, header has {}",
                    row + 1,
                    rec.len(),
                    headers.len()
                )));
            }
            let mut c = 0;
            for (k, field) in rec.iter().enumerate() {
                let field = field.trim();
                let missing = || Error::MissingValue {
                    row: row + 1,
                    column: headers[k].clone(),
                };
                if field.is_empty() || field.eq_ignore_ascii_case("na") {
                    return Err(missing());
                }
                let v: f64 = field.parse().map_err(|_| {
                    Error::InvalidInput(format!(
                        "non-numeric value '{field}' at row {}, column '{}'",
                        row + 1,
                        headers[k]
                    ))
                })?;
                if !v.is_finite() {
                    return Err(missing());
                }
                if k == resp_idx {
                    y.push(v);
                } else {
                    cols[c].push(v);
                    c += 1;
                }
            }
        }
        let n = y.len();
        let names: Vec<String> = headers
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != resp_idx)
            .map(|(_, h)| h.clone())
            .collect();
        let x = DMatrix::from_fn(n, names.len(), |i, j| cols[j][i]);
        Self::new(y, x, names)
    }

    /// Writes the dataset as CSV with the response first.
    pub fn write_csv<W: std::io::Write>(&self, writer: W, response_name: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![response_name.to_string()];
        header.extend(self.feature_names.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec = Vec::with_capacity(self.d() + 1);
            rec.push(self.y[i].to_string());
            for j in 0..self.d() {
                rec.push(self.x[(i, j)].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn default_names(d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("x{j}")).collect()
}

/// Coefficients with one coordinate pinned to exactly 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchoredCoefficients {
    values: Vec<f64>,
    anchor_index: usize,
}

impl AnchoredCoefficients {
    /// `e_anchor`.
    pub fn anchor_only(d: usize, anchor_index: usize) -> Result<Self> {
        make_anchored(&vec![0.0; d], anchor_index)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn anchor_index(&self) -> usize {
        self.anchor_index
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Copies `raw` and overwrites the anchor coordinate with 1.
pub fn make_anchored(raw: &[f64], anchor_index: usize) -> Result<AnchoredCoefficients> {
    if anchor_index >= raw.len() {
        return Err(Error::IndexOutOfRange {
            index: anchor_index,
            len: raw.len(),
        });
    }
    if let Some(j) = raw.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("coefficient {j}")));
    }
    let mut values = raw.to_vec();
    values[anchor_index] = 1.0;
    Ok(AnchoredCoefficients {
        values,
        anchor_index,
    })
}

/// Concordance signs and margins for every pair `i < i'`, in lexicographic
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct PairStats {
    pub concordance_sign: Vec<i8>,
    pub margin: Vec<f64>,
}

/// `sign(y_i - y_i')` for every pair in lexicographic order; exact ties give 0.
pub fn concordance_signs(y: &[f64]) -> Vec<i8> {
    let n = y.len();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for k in i + 1..n {
            out.push(sign_of(y[i] - y[k]));
        }
    }
    out
}

#[inline]
pub(crate) fn sign_of(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

pub(crate) fn check_dims(data: &Dataset, coef: &[f64]) -> Result<()> {
    if coef.len() != data.d() {
        return Err(Error::DimensionMismatch {
            expected: data.d(),
            got: coef.len(),
        });
    }
    Ok(())
}

/// Pairwise concordance signs and margins `(X_i - X_i')^T coef`.
pub fn pair_stats(data: &Dataset, coef: &AnchoredCoefficients) -> Result<PairStats> {
    check_dims(data, coef.values())?;
    Ok(pair_stats_raw(data, coef.values()))
}

pub(crate) fn pair_stats_raw(data: &Dataset, coef: &[f64]) -> PairStats {
    let n = data.n();
    let x = data.x();
    let mut margin = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for k in i + 1..n {
            let m: f64 = coef
                .iter()
                .enumerate()
                .map(|(j, &b)| (x[(i, j)] - x[(k, j)]) * b)
                .sum();
            margin.push(m);
        }
    }
    PairStats {
        concordance_sign: concordance_signs(data.y()),
        margin,
    }
}
