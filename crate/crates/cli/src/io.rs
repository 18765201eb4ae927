//! CSV matrices and point encodings.
//!
//! Files use ',' separators, '.' decimals and LF line endings. Floats are
//! written in shortest round-trip form, so writing a matrix that was read
//! from our own output reproduces it byte for byte.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use fgboost::spaces::SphereSpace;
use fgboost::{GeoError, GeodesicSpace};
use ndarray::Array2;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Option<Vec<String>>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    /// Column count from the header or the first row.
    pub fn ncols(&self) -> Option<usize> {
        self.header
            .as_ref()
            .map(Vec::len)
            .or_else(|| self.rows.first().map(Vec::len))
    }

    pub fn to_array(&self) -> Array2<f64> {
        let p = self.ncols().unwrap_or(0);
        Array2::from_shape_fn((self.rows.len(), p), |(i, j)| self.rows[i][j])
    }
}

/// Parses CSV text of finite numbers. Errors carry the 1-based line number.
pub fn parse_table(text: &str, has_header: bool) -> Result<Table, GeoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let parse_err = |line: u64, reason: String| GeoError::Parse {
        line: line as usize,
        reason,
    };
    let header = if has_header {
        let h = reader
            .headers()
            .map_err(|e| csv_error(e, &parse_err))?
            .iter()
            .map(str::to_string)
            .collect::<Vec<_>>();
        if h.is_empty() || h.len() == 1 && h[0].is_empty() {
            None
        } else {
            Some(h)
        }
    } else {
        None
    };
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(e, &parse_err))?;
        let line = record.position().map_or(0, |p| p.line());
        if let Some(h) = &header {
            if record.len() != h.len() {
                return Err(parse_err(
                    line,
                    format!("expected {} fields, found {}", h.len(), record.len()),
                ));
            }
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(j, field)| {
                let v: f64 = field.parse().map_err(|_| {
                    parse_err(line, format!("field {} is not a number: '{field}'", j + 1))
                })?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(parse_err(line, format!("field {} is not finite", j + 1)))
                }
            })
            .collect::<Result<Vec<f64>, GeoError>>()?;
        rows.push(row);
    }
    Ok(Table { header, rows })
}

fn csv_error(e: csv::Error, parse_err: &impl Fn(u64, String) -> GeoError) -> GeoError {
    let line = e.position().map_or(0, |p| p.line());
    match e.kind() {
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => parse_err(line, format!("expected {expected_len} fields, found {len}")),
        _ => parse_err(line, e.to_string()),
    }
}

pub fn read_table(path: &Path, has_header: bool) -> Result<Table> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_table(&text, has_header).with_context(|| format!("parsing {}", path.display()))
}

pub fn format_table(
    header: &[String],
    rows: impl IntoIterator<Item = impl AsRef<[f64]>>,
) -> String {
    let mut out = String::new();
    if !header.is_empty() {
        out.push_str(&header.join(","));
        out.push('\n');
    }
    for row in rows {
        let cells: Vec<String> = row.as_ref().iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn write_table(
    path: &Path,
    header: &[String],
    rows: impl IntoIterator<Item = impl AsRef<[f64]>>,
) -> Result<()> {
    let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(format_table(header, rows).as_bytes())?;
    Ok(())
}

/// Column names `prefix1..prefixK`.
pub fn column_names(prefix: &str, k: usize) -> Vec<String> {
    (1..=k).map(|j| format!("{prefix}{j}")).collect()
}

/// Decodes one point per row; invalid rows are reported by data row index.
pub fn decode_points<S: GeodesicSpace>(space: &S, rows: &[Vec<f64>]) -> Result<Vec<S::Point>> {
    rows.iter()
        .enumerate()
        .map(|(i, r)| space.decode(r).map_err(|e| row_error(e, i)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(Into::into)
}

/// Decodes rows of simplex proportions through the square-root map.
pub fn decode_simplex(
    space: &SphereSpace,
    rows: &[Vec<f64>],
) -> Result<Vec<fgboost::spaces::SpherePoint>> {
    rows.iter()
        .enumerate()
        .map(|(i, r)| space.from_simplex(r).map_err(|e| row_error(e, i)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(Into::into)
}

fn row_error(e: GeoError, i: usize) -> GeoError {
    match e {
        e @ GeoError::Validation { .. } => e.at_row(i),
        other => GeoError::Validation {
            index: Some(i),
            reason: other.to_string(),
        },
    }
}

pub fn encode_points<'a, S: GeodesicSpace>(
    space: &'a S,
    points: &'a [S::Point],
) -> impl Iterator<Item = &'a [f64]> + 'a {
    points.iter().map(move |p| space.coords(p))
}

pub fn ensure_rows(x_rows: usize, y_rows: usize) -> Result<()> {
    if x_rows != y_rows {
        bail!("predictor file has {x_rows} rows but response file has {y_rows}");
    }
    Ok(())
}
