//! CSV and JSON files.

use std::fs;
use std::path::Path;

use serde::Serialize;
use sqmle_core::ObservationSeries;

use crate::error::{Error, Result};

/// Relative tolerance on the spacing of time stamps read from CSV.
const SPACING_TOL: f64 = 1e-8;

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::format(path, e))
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes `t,x` rows with `t_j = j h`.
pub fn write_series(path: &Path, obs: &ObservationSeries) -> Result<()> {
    let mut w = csv_writer(path)?;
    let fail = |e: csv::Error| Error::format(path, e);
    w.write_record(["t", "x"]).map_err(fail)?;
    for (j, x) in obs.x().iter().enumerate() {
        w.write_record([(j as f64 * obs.h()).to_string(), x.to_string()]).map_err(fail)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a `t,x` file with equally spaced time stamps.
pub fn read_series(path: &Path) -> Result<ObservationSeries> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e))?;
    let headers = r.headers().map_err(|e| Error::format(path, e))?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| Error::format(path, format!("missing column `{name}`")))
    };
    let (ti, xi) = (col("t")?, col("x")?);
    let (mut t, mut x) = (Vec::new(), Vec::new());
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, e))?;
        let num = |i: usize| -> Result<f64> {
            let field = rec.get(i).unwrap_or("").trim();
            field.parse().map_err(|_| Error::format(path, format!("row {}: `{field}` is not a number", line + 2)))
        };
        t.push(num(ti)?);
        x.push(num(xi)?);
    }
    if t.len() < 2 {
        return Err(Error::format(path, "need at least two observations"));
    }
    let n = t.len() - 1;
    let h = (t[n] - t[0]) / n as f64;
    for (j, w) in t.windows(2).enumerate() {
        if ((w[1] - w[0]) - h).abs() > SPACING_TOL * h.abs().max(1.0) {
            return Err(Error::format(path, format!("time stamps are not equally spaced at row {}", j + 3)));
        }
    }
    Ok(ObservationSeries::new(x, h)?)
}
