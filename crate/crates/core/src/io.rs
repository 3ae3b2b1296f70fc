//! CSV and JSON artifacts. Numbers are written in their shortest
//! round-trip decimal form, so identical values give identical bytes.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::potentials::Potential;
use crate::solver2d::{Field2D, Grid};

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Format(format!("{}: {e}", path.display()))
}

/// Columns named by `header`, one record per row.
pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for row in rows {
        if row.len() != header.len() {
            return Err(io_err(path, format!("row of {} values under {} columns", row.len(), header.len())));
        }
        w.write_record(row.iter().map(f64::to_string)).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Header-checked numeric table.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let header: Vec<String> = r.headers().map_err(|e| io_err(path, e))?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let row = rec
            .iter()
            .map(|v| v.trim().parse::<f64>().map_err(|e| io_err(path, format!("`{v}`: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

const FIELD_HEADER: [&str; 7] = ["nx", "ny", "hx", "hy", "x_min", "y_min", "c"];

/// Field layout: the grid header and its values on two lines, then one
/// line of `nx` values per row from bottom to top.
pub fn write_field(path: &Path, u: &Field2D) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(FIELD_HEADER).map_err(|e| io_err(path, e))?;
    let meta = [u.nx as f64, u.ny as f64, u.hx, u.hy, u.x_min, u.y_min, u.c];
    w.write_record(meta.iter().map(f64::to_string)).map_err(|e| io_err(path, e))?;
    for j in 0..u.ny {
        w.write_record(u.row(j).iter().map(f64::to_string)).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_field(path: &Path, potential: Arc<Potential>) -> Result<Field2D> {
    let mut r = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(false)
        .from_path(path)
        .map_err(|e| io_err(path, e))?;
    let mut records = r.records();
    let mut next_record = |what: &str| -> Result<csv::StringRecord> {
        records
            .next()
            .ok_or_else(|| io_err(path, format!("missing {what}")))?
            .map_err(|e| io_err(path, e))
    };
    let header = next_record("header")?;
    if header.iter().ne(FIELD_HEADER) {
        return Err(io_err(path, format!("unexpected header {header:?}")));
    }
    let numbers = |rec: csv::StringRecord| -> Result<Vec<f64>> {
        rec.iter()
            .map(|v| v.trim().parse::<f64>().map_err(|e| io_err(path, format!("`{v}`: {e}"))))
            .collect()
    };
    let meta = numbers(next_record("grid line")?)?;
    if meta.len() != FIELD_HEADER.len() {
        return Err(io_err(path, "grid line needs 7 values"));
    }
    let (nx, ny) = (meta[0] as usize, meta[1] as usize);
    if nx as f64 != meta[0] || ny as f64 != meta[1] || nx < 2 || ny < 2 {
        return Err(io_err(path, "nx and ny must be integers >= 2"));
    }
    let grid = Grid {
        x_min: meta[4],
        x_max: meta[4] + meta[2] * (nx - 1) as f64,
        y_min: meta[5],
        y_max: meta[5] + meta[3] * (ny - 1) as f64,
        nx,
        ny,
    };
    let mut u = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        let row = numbers(next_record(&format!("row {j}"))?)?;
        if row.len() != nx {
            return Err(io_err(path, format!("row {j} has {} values, expected {nx}", row.len())));
        }
        u.extend(row);
    }
    let mut f = Field2D::new(&grid, meta[6], potential, u)?;
    // keep the stored spacing exactly rather than its recomputed quotient
    f.hx = meta[2];
    f.hy = meta[3];
    Ok(f)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}
