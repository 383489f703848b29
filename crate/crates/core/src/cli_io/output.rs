//! Plain-text tables and the JSON report on disk.

use super::report::DiagnosticsReport;
use super::CliError;
use crate::freeboundary_fit::FreeBoundary;
use crate::solver::JetSolution;
use serde_json::Value;
use std::fmt::Write as _;
use std::path::Path;

pub const FIELDS_FILE: &str = "fields.txt";
pub const BOUNDARY_FILE: &str = "boundary.txt";
pub const REPORT_FILE: &str = "report.json";
pub const ASYMPTOTICS_FILE: &str = "asymptotics.txt";

/// Keys removed from the report in reproducible mode.
const TIMING_KEYS: &[&str] = &["seconds", "timing"];

/// Scientific notation with `digits` significant digits.
pub fn sci(v: f64, digits: usize) -> String {
    format!("{:.*e}", digits - 1, v)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

pub fn fields_table(sol: &JetSolution, digits: usize) -> String {
    let g = &sol.grid;
    let mut out = String::from("# x y psi rho u v mach\n");
    for n in 0..g.len() {
        let (i, j) = g.coords(n);
        let row = [g.x(i), g.y(j), sol.psi[n], sol.rho[n], sol.u[n], sol.v[n], sol.mach[n]];
        let cols: Vec<String> = row.iter().map(|&v| sci(v, digits)).collect();
        writeln!(out, "{}", cols.join(" ")).unwrap();
    }
    out
}

/// The free boundary from the orifice downstream: the y-graph by decreasing
/// height, then the tail beyond its last abscissa.
pub fn boundary_table(fb: &FreeBoundary, digits: usize) -> String {
    let mut out = String::from("# y x\n");
    let mut x_last = f64::NEG_INFINITY;
    for &(y, x) in fb.graph.iter().rev() {
        writeln!(out, "{} {}", sci(y, digits), sci(x, digits)).unwrap();
        x_last = x_last.max(x);
    }
    for &(x, y) in fb.tail.iter().filter(|p| p.0 > x_last) {
        writeln!(out, "{} {}", sci(y, digits), sci(x, digits)).unwrap();
    }
    out
}

fn strip(v: &mut Value) {
    match v {
        Value::Object(map) => {
            for k in TIMING_KEYS {
                map.remove(*k);
            }
            map.values_mut().for_each(strip);
        }
        Value::Array(items) => items.iter_mut().for_each(strip),
        _ => {}
    }
}

pub fn report_json(report: &DiagnosticsReport, reproducible: bool) -> String {
    let mut v = serde_json::to_value(report).expect("report serializes");
    if reproducible {
        strip(&mut v);
    }
    let mut s = serde_json::to_string_pretty(&v).expect("report serializes");
    s.push('\n');
    s
}

/// Rows of a whitespace-separated table, skipping comment lines.
pub fn read_table(path: &Path, columns: usize) -> Result<Vec<Vec<f64>>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Verify(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let row = line.split_whitespace().map(str::parse::<f64>).collect::<Result<Vec<_>, _>>();
        match row {
            Ok(r) if r.len() == columns => rows.push(r),
            _ => return Err(CliError::Verify(format!("{} line {}: expected {columns} numbers", path.display(), k + 1))),
        }
    }
    Ok(rows)
}
