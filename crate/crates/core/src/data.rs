//! Weighted samples of `(x, y)` pairs and their CSV representation.
//!
//! A [`Dataset`] stores its inputs row-major in one flat buffer. Every point
//! carries a nonnegative weight; plain data gets uniform weights `1/n`, which
//! makes the weighted empirical measure coincide with the usual one.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    dim: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
}

impl Dataset {
    /// An empty dataset of input dimension `dim`.
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            x: Vec::new(),
            y: Vec::new(),
            w: Vec::new(),
        }
    }

    /// Builds a dataset with uniform weights `1/n`.
    pub fn from_rows(rows: &[Vec<f64>], targets: &[f64]) -> Result<Self> {
        if rows.len() != targets.len() {
            return Err(Error::Domain(format!(
                "{} input rows but {} targets",
                rows.len(),
                targets.len()
            )));
        }
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Self::empty(dim);
        let w = if rows.is_empty() {
            0.0
        } else {
            1.0 / rows.len() as f64
        };
        for (row, &y) in rows.iter().zip(targets) {
            data.push(row, y, w)?;
        }
        Ok(data)
    }

    /// Replaces the weights. They must be finite and nonnegative.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.len() {
            return Err(Error::Domain(format!(
                "{} weights for {} points",
                weights.len(),
                self.len()
            )));
        }
        if let Some(bad) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::Domain(format!("invalid sample weight {bad}")));
        }
        self.w = weights;
        Ok(self)
    }

    pub fn push(&mut self, x: &[f64], y: f64, weight: f64) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                index: self.len(),
                expected: self.dim,
                found: x.len(),
            });
        }
        if !weight.is_finite() || weight < 0.0 {
            return Err(Error::Domain(format!("invalid sample weight {weight}")));
        }
        self.x.extend_from_slice(x);
        self.y.push(y);
        self.w.push(weight);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.y[i]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.w[i]
    }

    pub fn targets(&self) -> &[f64] {
        &self.y
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    /// Flat row-major input buffer.
    pub fn raw_points(&self) -> &[f64] {
        &self.x
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        // chunks_exact panics on a zero chunk size
        let dim = self.dim.max(1);
        self.x.chunks_exact(dim).take(self.len())
    }

    pub fn total_weight(&self) -> f64 {
        self.w.iter().sum()
    }

    /// The same points with weights rescaled to sum to one.
    /// An empty or zero-mass dataset is returned unchanged.
    pub fn normalized(&self) -> Self {
        let total = self.total_weight();
        let mut out = self.clone();
        if total > 0.0 {
            out.w.iter_mut().for_each(|w| *w /= total);
        }
        out
    }

    /// Same points, weights `1/n`.
    pub fn uniform(&self) -> Self {
        let mut out = self.clone();
        let n = self.len();
        out.w = vec![1.0 / n.max(1) as f64; n];
        out
    }

    /// Sub-tuple of the listed rows, keeping their weights.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut out = Self::empty(self.dim);
        for &i in indices {
            out.x.extend_from_slice(self.point(i));
            out.y.push(self.y[i]);
            out.w.push(self.w[i]);
        }
        out
    }

    /// Per-axis minimum and maximum of the inputs; `None` when empty.
    pub fn bounding_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let mut points = self.points();
        let first = points.next()?;
        let mut lo = first.to_vec();
        let mut hi = first.to_vec();
        for p in points {
            for (j, &v) in p.iter().enumerate() {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        Some((lo, hi))
    }
}

fn parse_value(field: &str, path: &Path, line: u64) -> Result<f64> {
    let trimmed = field.trim();
    if trimmed.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            message: "missing value".into(),
        });
    }
    match trimmed.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("not a finite number: {trimmed:?}"),
        }),
    }
}

fn csv_error(err: csv::Error, path: &Path) -> Error {
    let line = err.position().map_or(0, |p| p.line());
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: err.to_string(),
    }
}

/// Reads rows of `x1,…,xd,y` with a header line. `label` names the file in errors.
pub fn read_labeled_csv<R: Read>(reader: R, label: &Path) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(e, label))?.clone();
    if headers.len() < 2 || headers.get(headers.len() - 1).map(str::trim) != Some("y") {
        return Err(Error::Parse {
            path: label.to_path_buf(),
            line: 1,
            message: "header must be x1,...,xd,y".into(),
        });
    }
    let dim = headers.len() - 1;
    let mut rows = Vec::new();
    let mut ys = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(e, label))?;
        let line = record.position().map_or(0, |p| p.line());
        let mut row = Vec::with_capacity(dim);
        for field in record.iter().take(dim) {
            row.push(parse_value(field, label, line)?);
        }
        ys.push(parse_value(&record[dim], label, line)?);
        rows.push(row);
    }
    let mut data = Dataset::from_rows(&rows, &ys)?;
    if data.is_empty() {
        data = Dataset::empty(dim);
    }
    Ok(data)
}

/// Reads unlabeled inputs `x1,…,xd`. A trailing `y` column, if present, is ignored.
pub fn read_points_csv<R: Read>(reader: R, label: &Path) -> Result<(usize, Vec<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(e, label))?.clone();
    let has_label = headers.len() > 1 && headers.get(headers.len() - 1).map(str::trim) == Some("y");
    let dim = headers.len() - usize::from(has_label);
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(e, label))?;
        let line = record.position().map_or(0, |p| p.line());
        let row = record
            .iter()
            .take(dim)
            .map(|f| parse_value(f, label, line))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((dim, rows))
}

pub fn load_labeled_csv(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_labeled_csv(file, path)
}

pub fn load_points_csv(path: &Path) -> Result<(usize, Vec<Vec<f64>>)> {
    let file = std::fs::File::open(path)?;
    read_points_csv(file, path)
}

/// Writes `x1,…,xd,y` rows. Floats use the shortest round-trip representation.
pub fn write_labeled_csv<W: Write>(writer: W, data: &Dataset) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (1..=data.dim()).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    wtr.write_record(&header)?;
    for (i, p) in data.points().enumerate() {
        let mut rec: Vec<String> = p.iter().map(f64::to_string).collect();
        rec.push(data.target(i).to_string());
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}
