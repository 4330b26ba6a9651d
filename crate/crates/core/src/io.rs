//! CSV formats.
//!
//! * Point files: header row required, one point per row, `d` numeric
//!   columns and an optional final column named `weight`.
//! * Covariance files: a headerless `d × d` numeric grid.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::gaussian::SymmetricPsdMatrix;
use crate::types::{validate_empirical, EmpiricalDistribution};

/// Rows of a point file plus the optional weight column.
#[derive(Debug, Clone, PartialEq)]
pub struct PointTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub weights: Option<Vec<f64>>,
}

fn parse_number(field: &str, line: usize) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("line {line}: `{field}` is not a number")))
}

pub fn read_points<R: Read>(reader: R) -> Result<PointTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(Error::Parse("missing header row".into()));
    }
    if header.iter().any(|h| h.parse::<f64>().is_ok()) {
        return Err(Error::Parse("header row required (first row is numeric)".into()));
    }
    let weighted = header
        .last()
        .is_some_and(|h| h.eq_ignore_ascii_case("weight"));
    let dim = header.len() - usize::from(weighted);
    if dim == 0 {
        return Err(Error::Parse("no coordinate columns".into()));
    }
    let mut rows = Vec::new();
    let mut weights = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let mut values = record
            .iter()
            .map(|f| parse_number(f, line))
            .collect::<Result<Vec<f64>>>()?;
        if weighted {
            weights.push(values.pop().unwrap_or(f64::NAN));
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::Empty("point file has no data rows"));
    }
    Ok(PointTable {
        columns: header[..dim].to_vec(),
        rows,
        weights: weighted.then_some(weights),
    })
}

pub fn read_points_file(path: impl AsRef<Path>) -> Result<PointTable> {
    read_points(File::open(path)?)
}

impl PointTable {
    /// Validated distribution: explicit weights when present, otherwise
    /// the empirical law of the rows (repeated rows merged).
    pub fn into_distribution(self) -> Result<EmpiricalDistribution> {
        match self.weights {
            Some(w) => validate_empirical(self.rows, w),
            None => EmpiricalDistribution::from_samples(&self.rows),
        }
    }
}

pub fn read_matrix<R: Read>(reader: R) -> Result<SymmetricPsdMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        rows.push(
            record
                .iter()
                .map(|f| parse_number(f, i + 1))
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    SymmetricPsdMatrix::from_rows(&rows)
}

pub fn read_matrix_file(path: impl AsRef<Path>) -> Result<SymmetricPsdMatrix> {
    read_matrix(File::open(path)?)
}

pub fn write_matrix<W: Write>(writer: W, rows: &[Vec<f64>]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for row in rows {
        wtr.write_record(row.iter().map(|v| format!("{v}")))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes a point file with `x1..xd` headers and an optional weight column.
pub fn write_points<W: Write>(writer: W, rows: &[Vec<f64>], weights: Option<&[f64]>) -> Result<()> {
    let dim = rows.first().map_or(0, Vec::len);
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
    if weights.is_some() {
        header.push("weight".into());
    }
    wtr.write_record(&header)?;
    for (j, row) in rows.iter().enumerate() {
        let mut fields: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        if let Some(w) = weights {
            fields.push(format!("{}", w[j]));
        }
        wtr.write_record(&fields)?;
    }
    wtr.flush()?;
    Ok(())
}
