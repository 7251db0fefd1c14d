//! CSV formats for path grids, observed series and fitted coefficients.
//!
//! Floats are written in Rust's shortest round-trip form, so a grid read back
//! from disk is bit-identical to the one that was written.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{MqlvError, Result};
use crate::learner::FitResult;
use crate::matrix::PathMatrix;
use crate::vasicek::PathGrid;

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| MqlvError::io(path, e))
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| MqlvError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn parse_err(path: &Path, message: impl Into<String>) -> MqlvError {
    MqlvError::Parse {
        path: path.display().to_string(),
        message: message.into(),
    }
}

fn check_header(path: &Path, rdr: &mut csv::Reader<File>, expected: &[&str]) -> Result<()> {
    let headers = rdr.headers().map_err(|e| parse_err(path, e.to_string()))?;
    if headers.iter().ne(expected.iter().copied()) {
        return Err(parse_err(
            path,
            format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    Ok(())
}

fn field<T: std::str::FromStr>(path: &Path, record: &csv::StringRecord, i: usize, line: u64) -> Result<T> {
    record.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| {
        parse_err(
            path,
            format!(
                "line {line}: bad field {i} in `{}`",
                record.iter().collect::<Vec<_>>().join(",")
            ),
        )
    })
}

/// Long-form `path_id,step,time,value`, one row per path and step.
pub fn write_paths_csv(path: &Path, grid: &PathGrid) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| MqlvError::io(path, e);
    writeln!(out, "path_id,step,time,value").map_err(io)?;
    for k in 0..grid.n_paths() {
        for (t, v) in grid.values.row(k).iter().enumerate() {
            writeln!(out, "{k},{t},{},{v}", grid.time(t)).map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

pub fn read_paths_csv(path: &Path) -> Result<PathGrid> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &["path_id", "step", "time", "value"])?;
    let mut rows: Vec<(usize, usize, f64, f64)> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| parse_err(path, e.to_string()))?;
        let line = i as u64 + 2;
        rows.push((
            field(path, &record, 0, line)?,
            field(path, &record, 1, line)?,
            field(path, &record, 2, line)?,
            field(path, &record, 3, line)?,
        ));
    }
    if rows.is_empty() {
        return Err(parse_err(path, "no data rows"));
    }
    let n_paths = rows.iter().map(|r| r.0).max().unwrap_or(0) + 1;
    let n_cols = rows.iter().map(|r| r.1).max().unwrap_or(0) + 1;
    if rows.len() != n_paths * n_cols {
        return Err(parse_err(
            path,
            format!("{} rows do not form a complete {n_paths} x {n_cols} grid", rows.len()),
        ));
    }
    let mut values = PathMatrix::zeros(n_paths, n_cols);
    let mut seen = vec![false; n_paths * n_cols];
    let mut maturity = 0.0f64;
    for (k, t, time, v) in rows {
        if std::mem::replace(&mut seen[k * n_cols + t], true) {
            return Err(parse_err(path, format!("duplicate row for path {k} step {t}")));
        }
        values.set(k, t, v);
        if t == n_cols - 1 {
            maturity = maturity.max(time);
        }
    }
    PathGrid::new(values, maturity, None)
}

/// Single observed series, `time,value`.
pub fn write_series_csv(path: &Path, dt: f64, series: &[f64]) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| MqlvError::io(path, e);
    writeln!(out, "time,value").map_err(io)?;
    for (i, v) in series.iter().enumerate() {
        writeln!(out, "{},{v}", i as f64 * dt).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Reads the `value` column of a `time,value` file.
pub fn read_series_csv(path: &Path) -> Result<Vec<f64>> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &["time", "value"])?;
    let mut series = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| parse_err(path, e.to_string()))?;
        series.push(field(path, &record, 1, i as u64 + 2)?);
    }
    Ok(series)
}

/// `t,phi_0..phi_{M-1}`; steps with a smaller basis leave trailing cells empty.
pub fn write_phi_csv(path: &Path, fit: &FitResult) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| MqlvError::io(path, e);
    let width = fit.phi.iter().map(Vec::len).max().unwrap_or(0);
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((0..width).map(|j| format!("phi_{j}")))
        .collect();
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    for (t, coeffs) in fit.phi.iter().enumerate() {
        let cells: Vec<String> = (0..width)
            .map(|j| coeffs.get(j).map(|c| c.to_string()).unwrap_or_default())
            .collect();
        writeln!(out, "{t},{}", cells.join(",")).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Long-form `t,row,col,w_value`.
pub fn write_weights_csv(path: &Path, fit: &FitResult) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| MqlvError::io(path, e);
    writeln!(out, "t,row,col,w_value").map_err(io)?;
    for (t, w) in fit.w.iter().enumerate() {
        for row in 0..w.nrows() {
            for col in 0..w.ncols() {
                writeln!(out, "{t},{row},{col},{}", w[(row, col)]).map_err(io)?;
            }
        }
    }
    out.flush().map_err(io)
}
