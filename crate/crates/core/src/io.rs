//! Flat CSV layout for plans and densities, and artifact writing.
//!
//! ```text
//! n,N,h,a,b
//! 3,2,0.5,0,1
//! <value>
//! <value>
//! ...
//! ```
//!
//! Values are densities in row-major order. A density file uses the same
//! header with `N` the particle count and `n` values.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::ArrayD;

use crate::discretization::Grid1D;
use crate::error::{invalid, LabError, Result};
use crate::plan::{MarginalDensity, TransportPlan};
use crate::tensor::cube_shape;

const HEADER: [&str; 5] = ["n", "N", "h", "a", "b"];

fn write_flat(grid: &Grid1D, count: usize, values: impl Iterator<Item = f64>) -> String {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
    let header = [
        grid.len().to_string(),
        count.to_string(),
        format!("{:e}", grid.spacing()),
        format!("{:e}", grid.left()),
        format!("{:e}", grid.right()),
    ];
    // Writing into a Vec cannot fail.
    w.write_record(HEADER).expect("in-memory csv");
    w.write_record(&header).expect("in-memory csv");
    for v in values {
        w.write_record([format!("{v:e}")]).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv output is utf-8")
}

struct Flat {
    grid: Grid1D,
    count: usize,
    values: Vec<f64>,
}

fn parse_field<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.trim().parse().map_err(|_| LabError::Parse(format!("cannot parse {what} from {s:?}")))
}

fn read_flat(text: &str) -> Result<Flat> {
    let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| LabError::Parse(e.to_string()))?.clone();
    if header.iter().map(str::trim).ne(HEADER) {
        return Err(LabError::Parse(format!("unexpected header {:?}", header)));
    }
    let mut records = r.records();
    let meta = records
        .next()
        .ok_or_else(|| LabError::Parse("missing size row".into()))?
        .map_err(|e| LabError::Parse(e.to_string()))?;
    if meta.len() != HEADER.len() {
        return Err(LabError::Parse("size row needs five fields".into()));
    }
    let n: usize = parse_field(&meta[0], "n")?;
    let count: usize = parse_field(&meta[1], "N")?;
    let h: f64 = parse_field(&meta[2], "h")?;
    let a: f64 = parse_field(&meta[3], "a")?;
    let b: f64 = parse_field(&meta[4], "b")?;
    let grid = Grid1D::new(a, b, n)?;
    if (grid.spacing() - h).abs() > 1e-12 * h.abs().max(1.0) {
        return Err(LabError::Parse(format!("spacing {h} inconsistent with n, a, b")));
    }
    let values = records
        .map(|rec| {
            let rec = rec.map_err(|e| LabError::Parse(e.to_string()))?;
            if rec.len() != 1 {
                return Err(LabError::Parse("value rows hold exactly one number".into()));
            }
            parse_field(&rec[0], "value")
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Flat { grid, count, values })
}

pub fn plan_to_csv(plan: &TransportPlan) -> String {
    write_flat(plan.grid(), plan.n_bodies(), plan.values().iter().copied())
}

pub fn plan_from_csv(text: &str) -> Result<TransportPlan> {
    let flat = read_flat(text)?;
    let shape = cube_shape(flat.grid.len(), flat.count);
    let values = ArrayD::from_shape_vec(shape, flat.values)
        .map_err(|_| LabError::Parse("value count does not match n^N".into()))?;
    let plan = TransportPlan::new(flat.grid.clone(), values, false)?;
    let symmetric = plan.is_symmetric_within(1e-12);
    TransportPlan::new(flat.grid, plan.into_values(), symmetric)
}

pub fn density_to_csv(mu: &MarginalDensity) -> String {
    write_flat(mu.grid(), mu.particle_count(), mu.values().iter().copied())
}

pub fn density_from_csv(text: &str) -> Result<MarginalDensity> {
    let flat = read_flat(text)?;
    MarginalDensity::new(flat.grid, flat.values, flat.count)
}

/// `$OUTPUT_DIR` if set, else the working directory.
pub fn default_output_dir() -> PathBuf {
    std::env::var_os("OUTPUT_DIR").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

/// Writes `contents` to `dir/name`, creating `dir` if needed.
pub fn write_artifact(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    if name.contains(['/', '\\']) {
        return Err(invalid(format!("artifact name {name:?} must not contain path separators")));
    }
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

/// Pretty JSON with a trailing newline; object keys come out sorted.
pub fn to_json_string(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json values always serialize");
    s.push('\n');
    s
}
