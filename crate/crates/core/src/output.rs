//! Run artifacts: profile tables, structured-grid fields, and the run
//! summary.
//!
//! Every writer is deterministic — identical runs produce byte-identical
//! files — so the summary records no wall-clock time and floats print in
//! Rust's shortest round-trip form.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scenario::{RunReport, VerifyReport};
use crate::stepper::FieldState;

/// Output family selector for `write_outputs`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    /// Comma-delimited profile tables (and x-slices in 3D).
    Csv,
    /// Legacy structured-points field files (2D/3D only).
    Vtk,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Format> {
        match s.trim() {
            "csv" => Ok(Format::Csv),
            "vtk" => Ok(Format::Vtk),
            other => Err(Error::config(format!(
                "unknown output format `{other}`, expected csv or vtk"
            ))),
        }
    }
}

/// Parses a comma-separated format list such as `csv,vtk`.
pub fn parse_formats(list: &str) -> Result<Vec<Format>> {
    let mut formats = Vec::new();
    for part in list.split(',') {
        let f = part.parse()?;
        if !formats.contains(&f) {
            formats.push(f);
        }
    }
    Ok(formats)
}

/// Fractions of the x extent at which 3D runs export y-z slices.
const SLICE_FRACTIONS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// Writes every artifact of a completed run into `dir` (created if
/// needed) and returns the paths in the order written: per-output-time
/// profiles (with slices and field files), then `summary.toml`.
pub fn write_outputs(
    report: &RunReport,
    verify: Option<&VerifyReport>,
    dir: &Path,
    formats: &[Format],
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)
        .map_err(|e| output_error(dir, &e))?;
    let csv = formats.contains(&Format::Csv);
    let vtk = formats.contains(&Format::Vtk) && report.dimensions >= 2;
    let mut written = Vec::new();
    for (i, profile) in report.profiles.iter().enumerate() {
        if csv {
            let path = dir.join(format!("profile_{i:03}.csv"));
            write_file(&path, &profile_csv(report, profile))?;
            written.push(path);
            if report.dimensions == 3 {
                for (k, &frac) in SLICE_FRACTIONS.iter().enumerate() {
                    let path =
                        dir.join(format!("profile_{i:03}_slice_x{:03}.csv", k * 25));
                    write_file(&path, &slice_csv(report, profile, frac))?;
                    written.push(path);
                }
            }
        }
        if vtk {
            let path = dir.join(format!("field_{i:03}.vtk"));
            write_file(&path, &field_vtk(report, profile, report.output_times[i]))?;
            written.push(path);
        }
    }
    let path = dir.join("summary.toml");
    write_file(&path, &summary_toml(report, verify)?)?;
    written.push(path);
    Ok(written)
}

fn output_error(path: &Path, e: &std::io::Error) -> Error {
    Error::Output { path: path.display().to_string(), message: e.to_string() }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| output_error(path, &e))
}

fn csv_header(dimensions: usize) -> &'static str {
    match dimensions {
        1 => "z,theta,head,saturation,u\n",
        2 => "x,z,theta,head,saturation,u\n",
        _ => "x,y,z,theta,head,saturation,u\n",
    }
}

fn push_row(out: &mut String, dimensions: usize, point: &[f64; 3], f: &FieldState, i: usize) {
    match dimensions {
        1 => write!(out, "{}", point[2]),
        2 => write!(out, "{},{}", point[0], point[2]),
        _ => write!(out, "{},{},{}", point[0], point[1], point[2]),
    }
    .unwrap();
    writeln!(out, ",{},{},{},{}", f.theta[i], f.h[i], f.s[i], f.u[i]).unwrap();
}

fn profile_csv(report: &RunReport, profile: &FieldState) -> String {
    let mut out = String::from(csv_header(report.dimensions));
    for (i, point) in report.cloud.points.iter().enumerate() {
        push_row(&mut out, report.dimensions, point, profile, i);
    }
    out
}

/// The y-z plane nearest to `frac` of the x extent.
fn slice_csv(report: &RunReport, profile: &FieldState, frac: f64) -> String {
    let [nx, ny, nz] = report.cloud.counts;
    let ix = (frac * (nx - 1) as f64).round() as usize;
    let mut out = String::from(csv_header(3));
    for iz in 0..nz {
        for iy in 0..ny {
            let i = report.cloud.index(ix, iy, iz);
            push_row(&mut out, 3, &report.cloud.points[i], profile, i);
        }
    }
    out
}

/// Legacy ASCII structured-points file with one scalar block per field,
/// values in x-fastest node order.
fn field_vtk(report: &RunReport, profile: &FieldState, time: f64) -> String {
    let [nx, ny, nz] = report.cloud.counts;
    let sp = |d: usize| if report.cloud.counts[d] > 1 { report.cloud.spacing[d] } else { 1.0 };
    let mut out = String::new();
    writeln!(out, "# vtk DataFile Version 3.0").unwrap();
    writeln!(out, "{} t={}", report.scenario, time).unwrap();
    writeln!(out, "ASCII").unwrap();
    writeln!(out, "DATASET STRUCTURED_POINTS").unwrap();
    writeln!(out, "DIMENSIONS {nx} {ny} {nz}").unwrap();
    writeln!(out, "ORIGIN 0 0 0").unwrap();
    writeln!(out, "SPACING {} {} {}", sp(0), sp(1), sp(2)).unwrap();
    writeln!(out, "POINT_DATA {}", report.cloud.len()).unwrap();
    for (name, values) in [
        ("theta", &profile.theta),
        ("head", &profile.h),
        ("saturation", &profile.s),
        ("u", &profile.u),
    ] {
        writeln!(out, "SCALARS {name} double 1").unwrap();
        writeln!(out, "LOOKUP_TABLE default").unwrap();
        for v in values {
            writeln!(out, "{v}").unwrap();
        }
    }
    out
}

#[derive(Serialize)]
struct Summary<'a> {
    scenario: &'a str,
    dimensions: usize,
    unit_system: &'a str,
    nodes: usize,
    grid: [usize; 3],
    extents: [f64; 3],
    dt: f64,
    steps: usize,
    output_times: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    flux_integral: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mass_balance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    verify_failures: Option<&'a [String]>,
    iterations: IterationSummary,
    mass: Vec<MassRow>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    metrics: Vec<MetricRow>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    mass_reference: Vec<MassReferenceRow>,
}

#[derive(Serialize)]
struct IterationSummary {
    total: usize,
    max: usize,
    median: f64,
}

#[derive(Serialize)]
struct MassRow {
    time: f64,
    value: f64,
}

#[derive(Serialize)]
struct MetricRow {
    time: f64,
    rmse: f64,
    l1: f64,
}

#[derive(Serialize)]
struct MassReferenceRow {
    time: f64,
    run: f64,
    reference: f64,
}

fn median(sorted: &[usize]) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
    }
}

fn summary_toml(report: &RunReport, verify: Option<&VerifyReport>) -> Result<String> {
    let mut sorted = report.iterations.clone();
    sorted.sort_unstable();
    let mass = report
        .output_times
        .iter()
        .zip(report.mass_at_outputs())
        .map(|(&time, value)| MassRow { time, value })
        .collect();
    let summary = Summary {
        scenario: &report.scenario,
        dimensions: report.dimensions,
        unit_system: &report.unit_system,
        nodes: report.cloud.len(),
        grid: report.cloud.counts,
        extents: report.cloud.extents,
        dt: report.dt,
        steps: report.iterations.len(),
        output_times: &report.output_times,
        flux_integral: report.flux_integral,
        mass_balance: verify.and_then(|v| v.mass_balance).or_else(|| report.mass_balance()),
        verify_failures: verify.map(|v| v.failures.as_slice()),
        iterations: IterationSummary {
            total: report.iterations.iter().sum(),
            max: sorted.last().copied().unwrap_or(0),
            median: median(&sorted),
        },
        mass,
        metrics: verify
            .map(|v| {
                v.profile_errors
                    .iter()
                    .map(|&(time, rmse, l1)| MetricRow { time, rmse, l1 })
                    .collect()
            })
            .unwrap_or_default(),
        mass_reference: verify
            .map(|v| {
                v.mass_reference
                    .iter()
                    .map(|&(time, run, reference)| MassReferenceRow { time, run, reference })
                    .collect()
            })
            .unwrap_or_default(),
    };
    toml::to_string(&summary).map_err(|e| Error::Output {
        path: "summary.toml".into(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{Overrides, Scenario};

    fn scenario_path(name: &str) -> std::path::PathBuf {
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
    }

    fn desk_run(name: &str, grid_scale: f64, times: usize) -> (Scenario, RunReport) {
        let scenario = Scenario::from_path(scenario_path(name)).unwrap();
        let dt = scenario.time.dt * 10.0;
        let overrides = Overrides {
            grid_scale: Some(grid_scale),
            dt: Some(dt),
            output_times: Some((1..=times).map(|k| dt * 4.0 * k as f64).collect()),
        };
        let report = scenario.run(&overrides).unwrap();
        (scenario, report)
    }

    #[test]
    fn one_profile_per_output_time_plus_summary() {
        let (scenario, report) = desk_run("clay_1d.toml", 0.04, 3);
        let verify = scenario.verify_report(&report).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files =
            write_outputs(&report, Some(&verify), dir.path(), &[Format::Csv]).unwrap();
        assert_eq!(files.len(), 4);
        for (i, path) in files.iter().take(3).enumerate() {
            assert_eq!(
                path.file_name().unwrap().to_str().unwrap(),
                format!("profile_{i:03}.csv")
            );
            let text = std::fs::read_to_string(path).unwrap();
            let mut lines = text.lines();
            assert_eq!(lines.next().unwrap(), "z,theta,head,saturation,u");
            assert_eq!(lines.count(), report.cloud.len());
        }
        let summary = std::fs::read_to_string(&files[3]).unwrap();
        let doc: toml::Table = summary.parse().unwrap();
        assert_eq!(doc["steps"].as_integer().unwrap(), 12);
        assert_eq!(doc["mass"].as_array().unwrap().len(), 3);
        assert_eq!(doc["metrics"].as_array().unwrap().len(), 3);
        assert!(doc.get("wall_seconds").is_none());
        // Re-read the first data row and check it against the report.
        let text = std::fs::read_to_string(&files[0]).unwrap();
        let row: Vec<f64> =
            text.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(row[0], 0.0);
        assert_eq!(row[1], report.profiles[0].theta[0]);
    }

    #[test]
    fn identical_runs_write_identical_bytes() {
        let mut snapshots = Vec::new();
        for _ in 0..2 {
            let (_, report) = desk_run("layered_1d_h100.toml", 0.04, 2);
            let dir = tempfile::tempdir().unwrap();
            let files = write_outputs(&report, None, dir.path(), &[Format::Csv]).unwrap();
            let bytes: Vec<Vec<u8>> =
                files.iter().map(|p| std::fs::read(p).unwrap()).collect();
            snapshots.push(bytes);
        }
        assert_eq!(snapshots[0], snapshots[1]);
    }

    #[test]
    fn structured_field_file_matches_the_grid() {
        let (_, report) = desk_run("curvilinear_2d.toml", 0.02, 1);
        let dir = tempfile::tempdir().unwrap();
        let files =
            write_outputs(&report, None, dir.path(), &[Format::Csv, Format::Vtk]).unwrap();
        let vtk_path = files.iter().find(|p| p.extension().unwrap() == "vtk").unwrap();
        let text = std::fs::read_to_string(vtk_path).unwrap();
        let [nx, ny, nz] = report.cloud.counts;
        assert!(text.contains(&format!("DIMENSIONS {nx} {ny} {nz}")));
        assert!(text.contains(&format!("POINT_DATA {}", report.cloud.len())));
        for name in ["theta", "head", "saturation", "u"] {
            assert!(text.contains(&format!("SCALARS {name} double 1")));
        }
        // Scalar values: 4 fields x nodes, one per line.
        let values = text
            .lines()
            .filter(|l| l.parse::<f64>().is_ok())
            .count();
        assert_eq!(values, 4 * report.cloud.len());
        // 2D profile carries x and z.
        let csv = std::fs::read_to_string(&files[0]).unwrap();
        assert_eq!(csv.lines().next().unwrap(), "x,z,theta,head,saturation,u");
    }

    #[test]
    fn block_runs_export_five_slices_per_output_time() {
        let (_, report) = desk_run("block_3d.toml", 0.02, 2);
        let dir = tempfile::tempdir().unwrap();
        let files = write_outputs(&report, None, dir.path(), &[Format::Csv]).unwrap();
        // 2 output times x (1 profile + 5 slices) + summary.
        assert_eq!(files.len(), 13);
        let slice0: Vec<_> = files
            .iter()
            .filter(|p| p.to_str().unwrap().contains("slice_x000"))
            .collect();
        assert_eq!(slice0.len(), 2);
        let text = std::fs::read_to_string(slice0[0]).unwrap();
        let [_, ny, nz] = report.cloud.counts;
        assert_eq!(text.lines().count(), 1 + ny * nz);
        // Every row of an x-slice shares its x coordinate.
        for line in text.lines().skip(1) {
            let x: f64 = line.split(',').next().unwrap().parse().unwrap();
            assert_eq!(x, 0.0);
        }
        let mid: Vec<_> = files
            .iter()
            .filter(|p| p.to_str().unwrap().contains("slice_x050"))
            .collect();
        let text = std::fs::read_to_string(mid[0]).unwrap();
        let x: f64 = text.lines().nth(1).unwrap().split(',').next().unwrap().parse().unwrap();
        assert!((x - 0.15).abs() < report.cloud.spacing[0]);
    }

    #[test]
    fn format_lists_parse_and_reject_unknowns() {
        assert_eq!(parse_formats("csv,vtk").unwrap(), vec![Format::Csv, Format::Vtk]);
        assert_eq!(parse_formats("csv, csv").unwrap(), vec![Format::Csv]);
        assert!(parse_formats("csv,png").is_err());
    }
}
