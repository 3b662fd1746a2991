//! Scenario files: declarative run descriptions, execution, and metrics.
//!
//! A scenario is a TOML document naming the domain, soil layout, initial
//! and boundary conditions, kernel, and time grid of one simulation.
//! Parsing is strict (unknown keys are rejected). `run` executes the
//! scenario with optional desk-scale overrides of the grid resolution,
//! the time step, and the output times; `verify` reruns it alongside the
//! column reference solver and reports profile errors, mass agreement,
//! and the discrete balance defect.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::PointCloud;
use crate::oracle::{oracle_solve_1d, OracleBoundary, OracleConfig, OracleProblem};
use crate::soil::{self, shipped_table, SoilField, SoilParams};
use crate::stepper::{
    BoundaryHead, BoundarySpec, FieldState, InitialCondition, PicardConfig, Stepper,
};

/// Relative slack when snapping output times onto the time grid.
const TIME_ALIGN_TOL: f64 = 1e-9;

/// Unit systems the shipped data uses; a scenario and every soil table it
/// references must agree on one.
const UNIT_SYSTEMS: [&str; 3] = ["m_day", "cm_h", "m_h"];

/// One parsed scenario file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub dimensions: usize,
    pub unit_system: String,
    pub domain: DomainSection,
    pub soil: SoilSection,
    pub initial: InitialSection,
    pub boundary: BoundarySection,
    pub kernel: KernelSection,
    pub time: TimeSection,
    #[serde(default)]
    pub picard: PicardSection,
    #[serde(default)]
    pub verify: VerifySection,
}

/// Box extents and node counts; inactive axes stay unset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    /// x extent (2D/3D).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    /// y extent (3D).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<f64>,
    /// z extent.
    pub depth: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nx: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ny: Option<usize>,
    pub nz: usize,
}

/// Soil layout plus the materials it references.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SoilSection {
    /// One of `homogeneous`, `layered_z`, `split_x`, `curvilinear`.
    pub layout: String,
    /// Shipped soil table that named materials resolve in.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<String>,
    /// Material of a homogeneous layout.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<MaterialRef>,
    /// Material above the curved interface.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub above: Option<MaterialRef>,
    /// Material below the curved interface.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub below: Option<MaterialRef>,
    /// Regions of a `layered_z` (ascending `z_max`) or `split_x`
    /// (ascending `x_max`) layout.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub regions: Vec<RegionSpec>,
}

/// One region of a layered or split layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    /// Inclusive upper elevation of a `layered_z` region.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_max: Option<f64>,
    /// Inclusive right edge of a `split_x` region.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
    pub material: MaterialRef,
}

/// A material either named in the referenced soil table or spelled inline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MaterialRef {
    Named(String),
    Inline(MaterialSpec),
}

/// Inline material: retention parameters either directly (`h_d`, `lambda`,
/// optional `beta`) or as capillary-model equivalents (`alpha`, `n`, `m`)
/// that are converted on resolution. A missing `beta` comes from the
/// power-law closure on `lambda`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSpec {
    pub theta_r: f64,
    pub theta_s: f64,
    pub k_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
}

/// Starting head field; exactly one form must be given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub water_content: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head: Option<f64>,
    /// `"hydrostatic"` for `h(z) = -z`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
}

/// Dirichlet closure of a horizontal boundary: a head value or the
/// keyword `"initial"` freezing the starting head of the face.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoundaryEdge {
    Head(f64),
    Keyword(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySection {
    pub bottom: BoundaryEdge,
    pub top: BoundaryEdge,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    /// Gaussian width factor `c` in `exp(-(c r)^2)`.
    pub shape: f64,
    /// Influence-domain size.
    pub n_s: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub dt: f64,
    /// Ascending snapshot times on the time grid; the last one ends the run.
    pub output_times: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PicardSection {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_condition: f64,
}

impl Default for PicardSection {
    fn default() -> Self {
        let p = PicardConfig::default();
        PicardSection {
            tolerance: p.tolerance,
            max_iterations: p.max_iterations,
            max_condition: p.max_condition,
        }
    }
}

/// Reference-comparison settings and optional pass/fail thresholds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    /// Reference column refinement: oracle nodes = factor * (nz - 1) + 1.
    pub oracle_refinement: usize,
    /// Reference time step; the run's step when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l1_max: Option<f64>,
    /// Cap on the relative balance defect `|dI - inflow| / I(T)` (1D).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub balance_max: Option<f64>,
    /// Cap on the relative mass mismatch against the matched column (2D/3D).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mass_match_max: Option<f64>,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            oracle_refinement: 4,
            oracle_dt: None,
            rmse_max: None,
            l1_max: None,
            balance_max: None,
            mass_match_max: None,
        }
    }
}

/// Desk-scale adjustments applied on top of the shipped configuration.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    /// Scales every active node count: `n' = max(3, round((n-1) f) + 1)`.
    pub grid_scale: Option<f64>,
    pub dt: Option<f64>,
    pub output_times: Option<Vec<f64>>,
}

/// Everything a completed run produced.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub scenario: String,
    pub unit_system: String,
    pub dimensions: usize,
    pub cloud: PointCloud,
    pub dt: f64,
    pub output_times: Vec<f64>,
    /// One recovered field per output time.
    pub profiles: Vec<FieldState>,
    /// `(time, cross-averaged vertical water mass)` at the start and after
    /// every accepted step.
    pub mass_series: Vec<(f64, f64)>,
    /// Picard iterations of every accepted step.
    pub iterations: Vec<usize>,
    /// Time integral of the net boundary inflow (1D columns).
    pub flux_integral: Option<f64>,
    pub wall_seconds: f64,
}

impl RunReport {
    /// Cross-averaged vertical mass at each output time.
    pub fn mass_at_outputs(&self) -> Vec<f64> {
        self.profiles.iter().map(|p| total_mass(&p.theta, &self.cloud)).collect()
    }

    /// Relative defect between the stored-mass change and the boundary
    /// inflow integral (1D columns).
    pub fn mass_balance(&self) -> Option<f64> {
        let flux = self.flux_integral?;
        let first = self.mass_series.first()?.1;
        let last = self.mass_series.last()?.1;
        Some(((last - first) - flux).abs() / last)
    }
}

/// Outcome of a reference comparison.
#[derive(Clone, Debug)]
pub struct VerifyReport {
    /// `(time, rmse, l1)` against the reference column (1D scenarios).
    pub profile_errors: Vec<(f64, f64, f64)>,
    /// `(time, run mass, reference mass)` against the matched column
    /// (2D/3D scenarios).
    pub mass_reference: Vec<(f64, f64, f64)>,
    /// Relative balance defect (1D columns).
    pub mass_balance: Option<f64>,
    /// Whether the per-step mass series never decreases; only checked when
    /// the top boundary holds saturation, `None` otherwise.
    pub mass_nondecreasing: Option<bool>,
    /// Human-readable threshold violations; empty means every configured
    /// threshold passed.
    pub failures: Vec<String>,
}

struct RunPlan {
    cloud: PointCloud,
    field: SoilField,
    initial: InitialCondition,
    boundary: BoundarySpec,
    picard: PicardConfig,
    dt: f64,
    output_times: Vec<f64>,
    /// Cumulative step count of each output time.
    output_steps: Vec<usize>,
}

impl Scenario {
    /// Parses and validates a scenario file.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Scenario> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Scenario {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_str(&text, &path.display().to_string())
    }

    /// Parses and validates scenario text; `label` names it in errors.
    pub fn from_str(text: &str, label: &str) -> Result<Scenario> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| Error::Scenario {
            path: label.to_string(),
            message: e.to_string(),
        })?;
        scenario.validate().map_err(|e| Error::Scenario {
            path: label.to_string(),
            message: e.to_string(),
        })?;
        Ok(scenario)
    }

    /// Checks every structural invariant, resolving all materials.
    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dimensions) {
            return Err(Error::config(format!(
                "dimensions must be 1, 2 or 3, got {}",
                self.dimensions
            )));
        }
        if !UNIT_SYSTEMS.contains(&self.unit_system.as_str()) {
            return Err(Error::config(format!(
                "unknown unit system `{}`, expected one of {UNIT_SYSTEMS:?}",
                self.unit_system
            )));
        }
        self.validate_domain()?;
        self.soil_field()?.validate()?;
        self.initial_condition()?;
        self.boundary_spec()?;
        if !(self.kernel.shape > 0.0 && self.kernel.shape.is_finite()) {
            return Err(Error::config("kernel shape must be positive"));
        }
        if self.kernel.n_s < 3 {
            return Err(Error::config("influence domains need at least 3 nodes"));
        }
        self.picard_config().validate()?;
        if self.verify.oracle_refinement == 0 {
            return Err(Error::config("oracle refinement factor must be at least 1"));
        }
        // The shipped grid and times must be consistent even when a run
        // later overrides them.
        output_steps(&self.time.output_times, self.time.dt)?;
        Ok(())
    }

    fn validate_domain(&self) -> Result<()> {
        let d = &self.domain;
        let need = |axis: &str, have: bool| {
            if have {
                Ok(())
            } else {
                Err(Error::config(format!(
                    "a {}D domain needs `{axis}`",
                    self.dimensions
                )))
            }
        };
        let forbid = |axis: &str, absent: bool| {
            if absent {
                Ok(())
            } else {
                Err(Error::config(format!(
                    "`{axis}` does not apply to a {}D domain",
                    self.dimensions
                )))
            }
        };
        if self.dimensions >= 2 {
            need("width", d.width.is_some())?;
            need("nx", d.nx.is_some())?;
        } else {
            forbid("width", d.width.is_none())?;
            forbid("nx", d.nx.is_none())?;
        }
        if self.dimensions == 3 {
            need("height", d.height.is_some())?;
            need("ny", d.ny.is_some())?;
        } else {
            forbid("height", d.height.is_none())?;
            forbid("ny", d.ny.is_none())?;
        }
        Ok(())
    }

    /// The soil layout with every material resolved.
    pub fn soil_field(&self) -> Result<SoilField> {
        let s = &self.soil;
        let region_edges = |key: &str, pick: fn(&RegionSpec) -> Option<f64>| {
            if s.regions.is_empty() {
                return Err(Error::config(format!(
                    "layout `{}` needs at least one [[soil.regions]] entry",
                    s.layout
                )));
            }
            s.regions
                .iter()
                .map(|r| {
                    let edge = pick(r).ok_or_else(|| {
                        Error::config(format!("every `{}` region needs `{key}`", s.layout))
                    })?;
                    Ok((edge, self.resolve_material(&r.material)?))
                })
                .collect::<Result<Vec<_>>>()
        };
        match s.layout.as_str() {
            "homogeneous" => {
                let m = s.material.as_ref().ok_or_else(|| {
                    Error::config("homogeneous layout needs `soil.material`")
                })?;
                Ok(SoilField::Homogeneous(self.resolve_material(m)?))
            }
            "layered_z" => Ok(SoilField::LayeredZ(region_edges("z_max", |r| r.z_max)?)),
            "split_x" => {
                if self.dimensions < 2 {
                    return Err(Error::config("split_x layout needs a 2D or 3D domain"));
                }
                Ok(SoilField::SplitX(region_edges("x_max", |r| r.x_max)?))
            }
            "curvilinear" => {
                if self.dimensions < 2 {
                    return Err(Error::config("curvilinear layout needs a 2D or 3D domain"));
                }
                let above = s.above.as_ref().ok_or_else(|| {
                    Error::config("curvilinear layout needs `soil.above`")
                })?;
                let below = s.below.as_ref().ok_or_else(|| {
                    Error::config("curvilinear layout needs `soil.below`")
                })?;
                Ok(SoilField::Curvilinear {
                    l1: self.domain.width.unwrap_or(0.0),
                    l2: self.domain.depth,
                    above: self.resolve_material(above)?,
                    below: self.resolve_material(below)?,
                })
            }
            other => Err(Error::config(format!(
                "unknown soil layout `{other}`, expected homogeneous, layered_z, \
                 split_x or curvilinear"
            ))),
        }
    }

    fn resolve_material(&self, m: &MaterialRef) -> Result<SoilParams> {
        match m {
            MaterialRef::Named(name) => {
                let table_name = self.soil.table.as_deref().ok_or_else(|| {
                    Error::config(format!(
                        "material `{name}` needs `soil.table` to resolve in"
                    ))
                })?;
                let table = shipped_table(table_name).ok_or_else(|| {
                    Error::config(format!("no shipped soil table named `{table_name}`"))
                })?;
                if table.unit_system != self.unit_system {
                    return Err(Error::config(format!(
                        "soil table `{table_name}` uses units `{}` but the scenario \
                         uses `{}`",
                        table.unit_system, self.unit_system
                    )));
                }
                let entry = table.entry(name).ok_or_else(|| {
                    Error::config(format!(
                        "soil table `{table_name}` has no material `{name}`"
                    ))
                })?;
                let params = entry.params();
                params.validate()?;
                Ok(params)
            }
            MaterialRef::Inline(inline) => inline.resolve(),
        }
    }

    fn initial_condition(&self) -> Result<InitialCondition> {
        let i = &self.initial;
        match (i.water_content, i.head, i.profile.as_deref()) {
            (Some(theta), None, None) => Ok(InitialCondition::WaterContent(theta)),
            (None, Some(h), None) => Ok(InitialCondition::Head(h)),
            (None, None, Some("hydrostatic")) => Ok(InitialCondition::HydrostaticMinusZ),
            (None, None, Some(other)) => Err(Error::config(format!(
                "unknown initial profile `{other}`, expected `hydrostatic`"
            ))),
            _ => Err(Error::config(
                "initial condition needs exactly one of `water_content`, `head`, \
                 or `profile`",
            )),
        }
    }

    fn boundary_spec(&self) -> Result<BoundarySpec> {
        let edge = |e: &BoundaryEdge, side: &str| match e {
            BoundaryEdge::Head(h) => Ok(BoundaryHead::Value(*h)),
            BoundaryEdge::Keyword(k) if k == "initial" => Ok(BoundaryHead::Initial),
            BoundaryEdge::Keyword(k) => Err(Error::config(format!(
                "unknown {side} boundary keyword `{k}`, expected `initial` or a head"
            ))),
        };
        Ok(BoundarySpec {
            bottom: edge(&self.boundary.bottom, "bottom")?,
            top: edge(&self.boundary.top, "top")?,
        })
    }

    fn picard_config(&self) -> PicardConfig {
        PicardConfig {
            tolerance: self.picard.tolerance,
            max_iterations: self.picard.max_iterations,
            max_condition: self.picard.max_condition,
        }
    }

    fn plan(&self, overrides: &Overrides) -> Result<RunPlan> {
        let scale = |n: usize| -> Result<usize> {
            match overrides.grid_scale {
                None => Ok(n),
                Some(f) if f > 0.0 && f.is_finite() => {
                    Ok((((n - 1) as f64 * f).round() as usize + 1).max(3))
                }
                Some(f) => Err(Error::config(format!(
                    "grid scale must be positive, got {f}"
                ))),
            }
        };
        let d = &self.domain;
        let counts = [
            scale(d.nx.unwrap_or(1))?,
            scale(d.ny.unwrap_or(1))?,
            scale(d.nz)?,
        ];
        let extents = [d.width.unwrap_or(0.0), d.height.unwrap_or(0.0), d.depth];
        let cloud = PointCloud::build(self.dimensions, extents, counts)?;
        let dt = overrides.dt.unwrap_or(self.time.dt);
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::config(format!("time step must be positive, got {dt}")));
        }
        let output_times =
            overrides.output_times.clone().unwrap_or_else(|| self.time.output_times.clone());
        let output_steps = output_steps(&output_times, dt)?;
        Ok(RunPlan {
            cloud,
            field: self.soil_field()?,
            initial: self.initial_condition()?,
            boundary: self.boundary_spec()?,
            picard: self.picard_config(),
            dt,
            output_times,
            output_steps,
        })
    }

    /// Executes the scenario, snapshotting at each output time.
    pub fn run(&self, overrides: &Overrides) -> Result<RunReport> {
        let plan = self.plan(overrides)?;
        let start = std::time::Instant::now();
        let mut stepper = Stepper::new(
            plan.cloud,
            &plan.field,
            self.kernel.shape,
            self.kernel.n_s,
            plan.dt,
            &plan.initial,
            &plan.boundary,
            plan.picard,
        )?;
        let mut mass_series =
            vec![(0.0, total_mass(&stepper.state()?.theta, stepper.cloud()))];
        let mut profiles = Vec::with_capacity(plan.output_times.len());
        let mut step = 0usize;
        for &target in &plan.output_steps {
            while step < target {
                stepper.advance()?;
                step += 1;
                let theta = stepper.state()?.theta;
                mass_series.push((stepper.time(), total_mass(&theta, stepper.cloud())));
            }
            profiles.push(stepper.state()?);
        }
        let flux_integral =
            if self.dimensions == 1 { Some(stepper.flux_integral()) } else { None };
        Ok(RunReport {
            scenario: self.name.clone(),
            unit_system: self.unit_system.clone(),
            dimensions: self.dimensions,
            cloud: stepper.cloud().clone(),
            dt: plan.dt,
            output_times: plan.output_times,
            profiles,
            mass_series,
            iterations: stepper.iteration_log().to_vec(),
            flux_integral,
            wall_seconds: start.elapsed().as_secs_f64(),
        })
    }

    /// Runs the scenario and compares it against the reference column.
    pub fn verify(&self, overrides: &Overrides) -> Result<(RunReport, VerifyReport)> {
        let report = self.run(overrides)?;
        let verdict = self.verify_report(&report)?;
        Ok((report, verdict))
    }

    /// Reference comparison of a completed run: profile errors for 1D
    /// columns, matched-column mass agreement for 2D/3D domains, plus the
    /// balance and monotonicity diagnostics.
    pub fn verify_report(&self, report: &RunReport) -> Result<VerifyReport> {
        let refinement = self.verify.oracle_refinement;
        let nz = report.cloud.counts[2];
        let config = OracleConfig {
            nodes: refinement * (nz - 1) + 1,
            dt: self.verify.oracle_dt.unwrap_or(report.dt),
            ..OracleConfig::default()
        };
        let mut failures = Vec::new();

        let mut profile_errors = Vec::new();
        let mut mass_reference = Vec::new();
        if self.dimensions == 1 {
            let sol = self.column_oracle(&self.soil_field()?, &config, report)?;
            for (j, t) in report.output_times.iter().enumerate() {
                let coarse: Vec<f64> = (0..nz)
                    .map(|i| sol.snapshots[j].theta[refinement * i])
                    .collect();
                let rmse = metric_rmse(&report.profiles[j].theta, &coarse)?;
                let l1 = metric_l1(&report.profiles[j].theta, &coarse)?;
                profile_errors.push((*t, rmse, l1));
                if let Some(cap) = self.verify.rmse_max {
                    if rmse > cap {
                        failures.push(format!("rmse {rmse:.3e} at t = {t} exceeds {cap:.3e}"));
                    }
                }
                if let Some(cap) = self.verify.l1_max {
                    if l1 > cap {
                        failures.push(format!("l1 {l1:.3e} at t = {t} exceeds {cap:.3e}"));
                    }
                }
            }
        } else {
            let run_mass = report.mass_at_outputs();
            let reference = self.matched_reference_mass(&config, report)?;
            for (j, t) in report.output_times.iter().enumerate() {
                mass_reference.push((*t, run_mass[j], reference[j]));
                if let Some(cap) = self.verify.mass_match_max {
                    let rel = (run_mass[j] - reference[j]).abs() / reference[j];
                    if rel > cap {
                        failures.push(format!(
                            "mass mismatch {rel:.3e} at t = {t} exceeds {cap:.3e}"
                        ));
                    }
                }
            }
        }

        let mass_balance = report.mass_balance();
        if let (Some(defect), Some(cap)) = (mass_balance, self.verify.balance_max) {
            if defect > cap {
                failures.push(format!("balance defect {defect:.3e} exceeds {cap:.3e}"));
            }
        }

        // Monotonicity only follows when the top holds saturation.
        let mass_nondecreasing = match self.boundary.top {
            BoundaryEdge::Head(h) if h >= 0.0 => {
                let scale = report.mass_series.last().map(|m| m.1).unwrap_or(1.0);
                let ok = report
                    .mass_series
                    .windows(2)
                    .all(|w| w[1].1 >= w[0].1 - 1e-12 * scale);
                if !ok {
                    failures.push("mass series decreased under a saturated top".into());
                }
                Some(ok)
            }
            _ => None,
        };

        Ok(VerifyReport {
            profile_errors,
            mass_reference,
            mass_balance,
            mass_nondecreasing,
            failures,
        })
    }

    /// Solves the reference column for a 1D field at the report's times.
    fn column_oracle(
        &self,
        field: &SoilField,
        config: &OracleConfig,
        report: &RunReport,
    ) -> Result<crate::oracle::OracleSolution> {
        let depth = self.domain.depth;
        let initial = self.initial_condition()?;
        let boundary = self.boundary_spec()?;
        let head_at = |z: f64| -> Result<f64> {
            match initial {
                InitialCondition::Head(h) => Ok(h),
                InitialCondition::WaterContent(theta) => {
                    let p = field.params_at(&[0.0, 0.0, z]);
                    soil::invert_saturation(soil::saturation_from_content(theta, p), p)
                }
                InitialCondition::HydrostaticMinusZ => Ok(-z),
            }
        };
        let edge = |spec: BoundaryHead, z: f64| -> Result<OracleBoundary> {
            Ok(match spec {
                BoundaryHead::Value(h) => OracleBoundary::Dirichlet(h),
                BoundaryHead::Initial => OracleBoundary::Dirichlet(head_at(z)?),
            })
        };
        let problem = OracleProblem {
            depth,
            field: field.clone(),
            initial,
            bottom: edge(boundary.bottom, 0.0)?,
            top: edge(boundary.top, depth)?,
        };
        oracle_solve_1d(&problem, config, &report.output_times)
    }

    /// Mass series of the matched 1D column(s) standing in for a 2D/3D
    /// field: the layout collapsed onto the vertical axis — strips of a
    /// split domain contribute by width, a curved interface by its mean
    /// elevation.
    fn matched_reference_mass(
        &self,
        config: &OracleConfig,
        report: &RunReport,
    ) -> Result<Vec<f64>> {
        let field = self.soil_field()?;
        let dz = self.domain.depth / (config.nodes - 1) as f64;
        let mass_of = |field: &SoilField| -> Result<Vec<f64>> {
            let sol = self.column_oracle(field, config, report)?;
            Ok(sol.snapshots.iter().map(|s| trapezoid(dz, &s.theta)).collect())
        };
        match field {
            SoilField::Homogeneous(_) | SoilField::LayeredZ(_) => mass_of(&field),
            SoilField::Curvilinear { l2, above, below, .. } => {
                // The interface mean over x is 0.55 l2, exact for the
                // cosine profile.
                let matched = SoilField::LayeredZ(vec![
                    (0.55 * l2, below),
                    (self.domain.depth, above),
                ]);
                mass_of(&matched)
            }
            SoilField::SplitX(regions) => {
                let width = self.domain.width.unwrap_or(0.0);
                let mut total = vec![0.0; report.output_times.len()];
                let mut left = 0.0;
                for (x_max, params) in &regions {
                    let w = (x_max.min(width) - left) / width;
                    left = x_max.min(width);
                    let mass = mass_of(&SoilField::Homogeneous(*params))?;
                    for (acc, m) in total.iter_mut().zip(&mass) {
                        *acc += w * m;
                    }
                }
                Ok(total)
            }
        }
    }
}

impl MaterialSpec {
    fn resolve(&self) -> Result<SoilParams> {
        let (lambda, h_d) = match (self.lambda, self.h_d) {
            (Some(l), Some(h)) => (l, h),
            (None, None) => match (self.alpha, self.n, self.m) {
                (Some(alpha), Some(n), Some(m)) => soil::vg_to_bc(alpha, n, m)?,
                _ => {
                    return Err(Error::config(
                        "inline material needs either `lambda` and `h_d` or the \
                         capillary parameters `alpha`, `n`, `m`",
                    ))
                }
            },
            _ => {
                return Err(Error::config(
                    "inline material must give `lambda` and `h_d` together",
                ))
            }
        };
        let params = SoilParams {
            theta_r: self.theta_r,
            theta_s: self.theta_s,
            k_s: self.k_s,
            h_d,
            lambda,
            beta: self.beta.unwrap_or_else(|| soil::beta_from_lambda(lambda)),
        };
        params.validate()?;
        Ok(params)
    }
}

/// Cumulative step count of each output time on the `dt` grid.
fn output_steps(times: &[f64], dt: f64) -> Result<Vec<usize>> {
    if times.is_empty() {
        return Err(Error::config("at least one output time is required"));
    }
    let mut steps = Vec::with_capacity(times.len());
    let mut prev = -1i64;
    for &t in times {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::config(format!("output times must be non-negative, got {t}")));
        }
        let k = (t / dt).round();
        if ((k * dt) - t).abs() > TIME_ALIGN_TOL * t.max(dt) {
            return Err(Error::config(format!(
                "output time {t} does not sit on the time grid of step {dt}"
            )));
        }
        let k = k as i64;
        if k <= prev {
            return Err(Error::config("output times must be strictly ascending"));
        }
        prev = k;
        steps.push(k as usize);
    }
    Ok(steps)
}

/// Root-mean-square difference between two nodal profiles.
pub fn metric_rmse(theta: &[f64], theta_ref: &[f64]) -> Result<f64> {
    check_lengths(theta, theta_ref)?;
    let n = theta.len() as f64;
    let sq: f64 = theta.iter().zip(theta_ref).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sq / n).sqrt())
}

/// Squared-difference sum over squared-reference sum. The conventional
/// name of this printed error is L1 although both sums are of squares;
/// the formula is kept verbatim.
pub fn metric_l1(theta: &[f64], theta_ref: &[f64]) -> Result<f64> {
    check_lengths(theta, theta_ref)?;
    let num: f64 = theta.iter().zip(theta_ref).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = theta_ref.iter().map(|b| b * b).sum();
    if den == 0.0 {
        return Err(Error::domain("reference profile is identically zero"));
    }
    Ok(num / den)
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::config(format!(
            "profiles must have equal non-zero lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Vertical water mass `I = integral of theta dz` by the trapezoidal rule,
/// averaging each horizontal cross-section first (2D/3D).
pub fn total_mass(theta: &[f64], cloud: &PointCloud) -> f64 {
    let [nx, ny, nz] = cloud.counts;
    let plane = nx * ny;
    let mut column = Vec::with_capacity(nz);
    for iz in 0..nz {
        let sum: f64 = theta[iz * plane..(iz + 1) * plane].iter().sum();
        column.push(sum / plane as f64);
    }
    trapezoid(cloud.spacing[2], &column)
}

fn trapezoid(dz: f64, values: &[f64]) -> f64 {
    let mut acc = 0.0;
    for w in values.windows(2) {
        acc += 0.5 * (w[0] + w[1]) * dz;
    }
    acc
}
