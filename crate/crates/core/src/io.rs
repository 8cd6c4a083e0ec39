//! Field persistence: CSV (`r,re,im`) and binary snapshots.
//!
//! Snapshot layout, all little-endian: `M: u64`, `r_max: f64`, `N: u64`, then
//! `M` pairs `(re: f64, im: f64)`.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::radial_grid::{make_grid, RadialField};

const HEADER: usize = 24;

pub fn field_to_csv(u: &RadialField) -> String {
    let mut out = String::from("r,re,im\n");
    for (r, z) in u.grid.nodes.iter().zip(&u.values) {
        out.push_str(&format!("{r:e},{:e},{:e}\n", z.re, z.im));
    }
    out
}

/// Parses a CSV field; the grid is recovered from the node spacing.
pub fn field_from_csv(text: &str, n: u32) -> Result<RadialField> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "r,re,im" => {}
        _ => return Err(Error::FileFormat("missing `r,re,im` header".into())),
    }
    let mut rs = Vec::new();
    let mut vals = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(Error::FileFormat(format!("line {}: expected 3 columns", i + 2)));
        }
        let parse = |s: &str| {
            s.trim().parse::<f64>().map_err(|e| Error::FileFormat(format!("line {}: {e}", i + 2)))
        };
        rs.push(parse(cols[0])?);
        vals.push(Complex64::new(parse(cols[1])?, parse(cols[2])?));
    }
    let m = rs.len();
    if m < 2 {
        return Err(Error::FileFormat("too few rows".into()));
    }
    let h = 2.0 * rs[0];
    let grid = make_grid(m, h * m as f64, n).map_err(|e| Error::FileFormat(e.to_string()))?;
    for (a, b) in grid.nodes.iter().zip(&rs) {
        if (a - b).abs() > 1e-9 * grid.r_max {
            return Err(Error::FileFormat("nodes are not cell-centered and uniform".into()));
        }
    }
    Ok(RadialField { grid: Arc::new(grid), values: vals })
}

pub fn snapshot_bytes(u: &RadialField) -> Vec<u8> {
    let g = &u.grid;
    let mut out = Vec::with_capacity(HEADER + 16 * g.m);
    out.extend_from_slice(&(g.m as u64).to_le_bytes());
    out.extend_from_slice(&g.r_max.to_le_bytes());
    out.extend_from_slice(&(g.n as u64).to_le_bytes());
    for z in &u.values {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

pub fn snapshot_from_bytes(bytes: &[u8]) -> Result<RadialField> {
    if bytes.len() < HEADER {
        return Err(Error::FileFormat("snapshot shorter than its header".into()));
    }
    let word = |k: usize| -> [u8; 8] { bytes[8 * k..8 * k + 8].try_into().unwrap() };
    let m = u64::from_le_bytes(word(0)) as usize;
    let r_max = f64::from_le_bytes(word(1));
    let n = u64::from_le_bytes(word(2));
    if bytes.len() != HEADER + 16 * m {
        return Err(Error::FileFormat(format!("expected {} bytes for M = {m}, got {}", HEADER + 16 * m, bytes.len())));
    }
    let n = u32::try_from(n).map_err(|_| Error::FileFormat("dimension out of range".into()))?;
    let grid = make_grid(m, r_max, n).map_err(|e| Error::FileFormat(e.to_string()))?;
    let values = (0..m)
        .map(|j| {
            let re = f64::from_le_bytes(word(3 + 2 * j));
            let im = f64::from_le_bytes(word(4 + 2 * j));
            Complex64::new(re, im)
        })
        .collect();
    Ok(RadialField { grid: Arc::new(grid), values })
}

pub fn write_snapshot(path: &Path, u: &RadialField) -> Result<()> {
    fs::write(path, snapshot_bytes(u)).map_err(|e| Error::FileFormat(format!("{}: {e}", path.display())))
}

pub fn read_snapshot(path: &Path) -> Result<RadialField> {
    let bytes = fs::read(path).map_err(|e| Error::FileFormat(format!("{}: {e}", path.display())))?;
    snapshot_from_bytes(&bytes)
}

/// Reads a binary snapshot, or a CSV field when the extension is `.csv`
/// (the dimension then comes from a `# N=<n>` first line).
pub fn read_field(path: &Path) -> Result<RadialField> {
    if path.extension().is_some_and(|e| e == "csv") {
        let text = fs::read_to_string(path).map_err(|e| Error::FileFormat(format!("{}: {e}", path.display())))?;
        let (first, rest) = text.split_once('\n').unwrap_or((&text, ""));
        let n = first
            .strip_prefix("# N=")
            .and_then(|s| s.trim().parse::<u32>().ok())
            .ok_or_else(|| Error::FileFormat("CSV field needs a `# N=<n>` first line".into()))?;
        field_from_csv(rest, n)
    } else {
        read_snapshot(path)
    }
}

/// CSV with the `# N=<n>` line understood by [`read_field`].
pub fn field_to_csv_with_dimension(u: &RadialField) -> String {
    format!("# N={}\n{}", u.grid.n, field_to_csv(u))
}
