//! Plot-ready files for a bow-tie region sweep.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use csma_core::stability::{bowtie_optimal_critical, bowtie_standard_critical, homogeneous_fixed_point};

use crate::error::{CliError, CliResult};

/// Parsed sweep: first two columns are loads, `label` is the status or
/// verdict column.
struct Sweep {
    points: Vec<(f64, f64, String)>,
}

fn parse_sweep(text: &str) -> CliResult<Sweep> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| CliError::Schema("empty sweep file (no header)".into()))?
        .split(',')
        .map(str::trim)
        .collect();
    if header.len() < 3 || !header[0].starts_with("rho_") || !header[1].starts_with("rho_") {
        return Err(CliError::Schema("sweep header must start with two rho_ columns".into()));
    }
    let label = header
        .iter()
        .position(|h| *h == "status" || *h == "verdict")
        .ok_or_else(|| CliError::Schema("sweep has neither a status nor a verdict column".into()))?;
    let mut points = Vec::new();
    for (n, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != header.len() {
            return Err(CliError::Schema(format!("row {} has {} cells, expected {}", n + 2, cells.len(), header.len())));
        }
        let num = |c: &str| c.parse::<f64>().map_err(|_| CliError::Schema(format!("row {}: bad number {c:?}", n + 2)));
        let label = cells[label];
        if label.is_empty() || !label.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(CliError::Schema(format!("row {}: bad label {label:?}", n + 2)));
        }
        points.push((num(cells[0])?, num(cells[1])?, label.to_string()));
    }
    Ok(Sweep { points })
}

/// Writes the boundary polylines `optimal_boundary.dat` and
/// `standard_boundary.dat` over the sweep's `rho_1` values in `[0, 1]`, and
/// one `points_<label>.dat` per status or verdict. Returns the file names.
pub fn export_region_plot(input: &Path, output: &Path) -> CliResult<Vec<String>> {
    let text = std::fs::read_to_string(input).map_err(|e| CliError::io(input, e))?;
    let sweep = parse_sweep(&text)?;

    let mut xs: Vec<f64> = sweep.points.iter().map(|p| p.0).filter(|x| (0.0..=1.0).contains(x)).collect();
    if let (Some(lo), Some(hi)) = (xs.iter().copied().reduce(f64::min), xs.iter().copied().reduce(f64::max)) {
        for extra in [homogeneous_fixed_point(1e-12), 0.5, 2.0 / 3.0] {
            if extra >= lo && extra <= hi {
                xs.push(extra);
            }
        }
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let mut files: BTreeMap<String, String> = BTreeMap::new();
    let mut optimal = String::from("# rho_1 rho_3\n");
    let mut standard = optimal.clone();
    for &x in &xs {
        let _ = writeln!(optimal, "{x} {}", bowtie_optimal_critical(x));
        let _ = writeln!(standard, "{x} {}", bowtie_standard_critical(x));
    }
    files.insert("optimal_boundary.dat".into(), optimal);
    files.insert("standard_boundary.dat".into(), standard);
    for (a, b, label) in &sweep.points {
        let f = files.entry(format!("points_{label}.dat")).or_insert_with(|| String::from("# rho_a rho_b\n"));
        let _ = writeln!(f, "{a} {b}");
    }

    std::fs::create_dir_all(output).map_err(|e| CliError::io(output, e))?;
    for (name, body) in &files {
        let p = output.join(name);
        std::fs::write(&p, body).map_err(|e| CliError::io(&p, e))?;
    }
    Ok(files.into_keys().collect())
}
