//! Tabular and image files used by the command-line front-end.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, Matrix};

/// Reads a response CSV: a header row with the single column `y`.
pub fn read_response(path: &Path) -> Result<Vec<f64>> {
    let (header, rows) = read_table(path)?;
    if header.len() != 1 || header[0] != "y" {
        return Err(Error::Input(format!(
            "{}: response file needs a single column named y, found {:?}",
            path.display(),
            header
        )));
    }
    Ok(rows.into_iter().map(|r| r[0]).collect())
}

/// Reads a covariate CSV: a header row of `p_0` names, one row per sample.
pub fn read_covariates(path: &Path) -> Result<(Vec<String>, Matrix)> {
    let (header, rows) = read_table(path)?;
    let n = rows.len();
    let p0 = header.len();
    let z = Matrix::from_fn(n, p0, |i, j| rows[i][j]);
    Ok((header, z))
}

fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() || header.iter().any(String::is_empty) {
        return Err(Error::Input(format!("{}: missing or empty header row", path.display())));
    }
    let mut rows = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        let row = record
            .iter()
            .map(|v| {
                v.parse::<f64>().map_err(|_| {
                    Error::Input(format!("{}: row {}: {v:?} is not a number", path.display(), k + 2))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn write_response(path: &Path, y: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["y"])?;
    for v in y {
        w.write_record([v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_covariates(path: &Path, z: &Matrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record((1..=z.ncols()).map(|j| format!("z{j}")))?;
    for row in z.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace(path: &Path, trace: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "objective"])?;
    for (t, v) in trace.iter().enumerate() {
        w.write_record([t.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Binary PGM (P5, 8-bit) of a 2-way tensor, row `i` of the image being
/// row `i` of the matrix. Values are min-max scaled to 0..=255; a constant
/// image maps to 0.
pub fn write_pgm(path: &Path, image: &DenseTensor, label: &str) -> Result<()> {
    let m = image.to_matrix()?;
    let (min, max) = m
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = max - min;
    let mut out = BufWriter::new(File::create(path)?);
    write!(
        out,
        "P5\n# {label}: min-max scaled per image, min={min} max={max}\n{} {}\n255\n",
        m.ncols(),
        m.nrows()
    )?;
    let mut bytes = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let v = if span > 0.0 { (m[(i, j)] - min) / span } else { 0.0 };
            bytes.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}
