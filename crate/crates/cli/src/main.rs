//! Command-line front end for the mesh-free unsaturated-flow solver.
//!
//! `run` executes a scenario file and writes its artifacts, `verify`
//! additionally solves the reference column and prints error metrics,
//! and `tables` lists the shipped soil parameter tables. Exit codes:
//! 0 on success, 1 on any error, 3 when a configured metric threshold
//! fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vadose_core::output::{parse_formats, write_outputs, Format};
use vadose_core::scenario::{
    metric_l1, metric_rmse, Overrides, RunReport, Scenario, VerifyReport,
};
use vadose_core::soil::shipped_tables;
use vadose_core::{Error, Result};

const THRESHOLD_EXIT: u8 = 3;

#[derive(Parser)]
#[command(
    name = "vadose",
    version,
    about = "Mesh-free solver for infiltration in heterogeneous unsaturated soils"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario file and write profiles, fields, and a summary.
    Run {
        /// Scenario file (TOML).
        scenario: PathBuf,
        /// Output directory; defaults to `out/<scenario name>`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Scale every node count: n' = max(3, round((n-1) f) + 1).
        #[arg(long)]
        grid_scale: Option<f64>,
        /// Replace the scenario's time step.
        #[arg(long)]
        dt: Option<f64>,
        /// `oracle` to compare against the reference column solver, or a
        /// profile CSV whose theta column is compared at the final output
        /// time.
        #[arg(long)]
        reference: Option<String>,
        /// Comma-separated output formats.
        #[arg(long, default_value = "csv,vtk")]
        formats: String,
    },
    /// Run a scenario alongside the reference column solver and print
    /// RMSE, L1, and mass-balance metrics.
    Verify {
        /// Scenario file (TOML).
        scenario: PathBuf,
        /// Optional directory for the run artifacts.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Scale every node count: n' = max(3, round((n-1) f) + 1).
        #[arg(long)]
        grid_scale: Option<f64>,
        /// Replace the scenario's time step.
        #[arg(long)]
        dt: Option<f64>,
    },
    /// List the shipped soil tables.
    Tables,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { scenario, out, grid_scale, dt, reference, formats } => {
            let formats = parse_formats(&formats)?;
            let scenario = Scenario::from_path(&scenario)?;
            let overrides = Overrides { grid_scale, dt, output_times: None };
            let dir = out.unwrap_or_else(|| Path::new("out").join(&scenario.name));
            match reference.as_deref() {
                None => {
                    let report = scenario.run(&overrides)?;
                    finish(&scenario, &report, None, &dir, &formats)
                }
                Some("oracle") => {
                    let (report, verdict) = scenario.verify(&overrides)?;
                    finish(&scenario, &report, Some(&verdict), &dir, &formats)
                }
                Some(file) => {
                    let report = scenario.run(&overrides)?;
                    compare_to_file(&report, Path::new(file))?;
                    finish(&scenario, &report, None, &dir, &formats)
                }
            }
        }
        Command::Verify { scenario, out, grid_scale, dt } => {
            let scenario = Scenario::from_path(&scenario)?;
            let overrides = Overrides { grid_scale, dt, output_times: None };
            let (report, verdict) = scenario.verify(&overrides)?;
            if let Some(dir) = out {
                let files =
                    write_outputs(&report, Some(&verdict), &dir, &[Format::Csv, Format::Vtk])?;
                println!("wrote {} files to {}", files.len(), dir.display());
            }
            print_run(&report);
            print_verify(&verdict);
            Ok(threshold_exit(&verdict))
        }
        Command::Tables => {
            print_tables();
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn finish(
    scenario: &Scenario,
    report: &RunReport,
    verdict: Option<&VerifyReport>,
    dir: &Path,
    formats: &[Format],
) -> Result<ExitCode> {
    let files = write_outputs(report, verdict, dir, formats)?;
    println!("{}: wrote {} files to {}", scenario.name, files.len(), dir.display());
    print_run(report);
    if let Some(v) = verdict {
        print_verify(v);
        return Ok(threshold_exit(v));
    }
    Ok(ExitCode::SUCCESS)
}

fn threshold_exit(verdict: &VerifyReport) -> ExitCode {
    if verdict.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(THRESHOLD_EXIT)
    }
}

fn print_run(report: &RunReport) {
    let total: usize = report.iterations.iter().sum();
    let max = report.iterations.iter().max().copied().unwrap_or(0);
    println!(
        "steps = {}, iterations = {total} (max {max}), wall = {:.1}s",
        report.iterations.len(),
        report.wall_seconds
    );
    for (&t, mass) in report.output_times.iter().zip(report.mass_at_outputs()) {
        println!("t = {t}: mass = {mass:.6}");
    }
}

fn print_verify(verdict: &VerifyReport) {
    for &(t, rmse, l1) in &verdict.profile_errors {
        println!("t = {t}: rmse = {rmse:.3e}, l1 = {l1:.3e}");
    }
    for &(t, run, reference) in &verdict.mass_reference {
        let rel = (run - reference).abs() / reference;
        println!("t = {t}: mass = {run:.6} vs column {reference:.6} (rel {rel:.3e})");
    }
    if let Some(defect) = verdict.mass_balance {
        println!("mass balance defect = {defect:.3e}");
    }
    if let Some(ok) = verdict.mass_nondecreasing {
        println!("mass nondecreasing: {}", if ok { "yes" } else { "NO" });
    }
    if verdict.failures.is_empty() {
        println!("verification passed");
    } else {
        for f in &verdict.failures {
            println!("FAIL: {f}");
        }
    }
}

/// Compares the final profile against the theta column of a CSV written
/// by an earlier run (or any file with the same layout).
fn compare_to_file(report: &RunReport, path: &Path) -> Result<()> {
    let reference = load_theta_column(path, report.cloud.len())?;
    let last = report
        .profiles
        .last()
        .ok_or_else(|| Error::config("run produced no profiles"))?;
    let t = report.output_times.last().unwrap();
    let rmse = metric_rmse(&last.theta, &reference)?;
    let l1 = metric_l1(&last.theta, &reference)?;
    println!("reference {}: t = {t}: rmse = {rmse:.3e}, l1 = {l1:.3e}", path.display());
    Ok(())
}

fn load_theta_column(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bad = |message: String| Error::Scenario { path: path.display().to_string(), message };
    let text = std::fs::read_to_string(path)
        .map_err(|e| bad(e.to_string()))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty reference file".into()))?;
    let column = header
        .split(',')
        .position(|c| c.trim() == "theta")
        .ok_or_else(|| bad("no `theta` column in header".into()))?;
    let mut theta = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cell = line
            .split(',')
            .nth(column)
            .ok_or_else(|| bad(format!("row {} has too few columns", i + 2)))?;
        theta.push(
            cell.trim()
                .parse::<f64>()
                .map_err(|e| bad(format!("row {}: {e}", i + 2)))?,
        );
    }
    if theta.len() != expected {
        return Err(bad(format!(
            "reference has {} rows but the run has {expected} nodes",
            theta.len()
        )));
    }
    Ok(theta)
}

fn print_tables() {
    for table in shipped_tables() {
        println!("{} [{}]", table.name, table.unit_system);
        for e in &table.entries {
            println!(
                "  {}: theta_r = {}, theta_s = {}, k_s = {}, h_d = {}, \
                 lambda = {}, beta = {}",
                e.name, e.theta_r, e.theta_s, e.k_s, e.h_d, e.lambda, e.beta
            );
        }
    }
}
