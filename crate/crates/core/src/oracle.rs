//! Independent 1D reference solver for verification.
//!
//! Solves the head-form Richards equation on a uniform column with the
//! mass-conservative modified Picard scheme: each iteration solves a
//! tridiagonal system for the head increment with the water-content
//! mismatch `(theta^m - theta^n)/dt` kept in the residual, so accepted
//! steps conserve mass to the iteration tolerance.
//!
//! This solver works in pressure-head variables with its own
//! discretization and shares only the constitutive relations with the
//! collocation solver, so agreement between the two is evidence rather
//! than tautology.

use crate::error::{Error, Result};
use crate::soil::{self, SoilField, SoilParams};
use crate::stepper::InitialCondition;

/// Boundary closure of the reference column.
#[derive(Clone, Copy, Debug)]
pub enum OracleBoundary {
    /// Fixed pressure head.
    Dirichlet(f64),
    /// Zero Darcy flux (including gravity).
    NoFlow,
}

/// Column description for the reference solver.
#[derive(Clone, Debug)]
pub struct OracleProblem {
    pub depth: f64,
    pub field: SoilField,
    pub initial: InitialCondition,
    pub bottom: OracleBoundary,
    pub top: OracleBoundary,
}

#[derive(Clone, Copy, Debug)]
pub struct OracleConfig {
    pub nodes: usize,
    pub dt: f64,
    /// Stopping tolerance on `max|head increment|`.
    pub tolerance: f64,
    pub max_iterations: usize,
}

/// Acceptance threshold on the water-content image of a head increment;
/// well below every profile and balance tolerance built on the oracle.
const THETA_TOL: f64 = 5e-6;

impl Default for OracleConfig {
    fn default() -> Self {
        // Heads span hundreds of length units, so 1e-5 absolute is far
        // below any water-content target (capacity times tolerance is under
        // 1e-6); the cap leaves room for the near-unit contraction ratio of
        // a step that births a sharp front on a fine grid.
        OracleConfig { nodes: 101, dt: 1e-3, tolerance: 1e-5, max_iterations: 300 }
    }
}

#[derive(Clone, Debug)]
pub struct OracleSnapshot {
    pub time: f64,
    pub theta: Vec<f64>,
    pub head: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct OracleSolution {
    pub z: Vec<f64>,
    pub snapshots: Vec<OracleSnapshot>,
    /// Right-endpoint time integral of the net boundary inflow
    /// `q_z(0) - q_z(L)` over the whole run.
    pub flux_integral: f64,
}

/// Specific moisture capacity `C(h) = d theta / d h`; zero at and above
/// the air-entry head.
fn capacity(h: f64, p: &SoilParams) -> f64 {
    if h < p.h_d {
        -p.lambda * p.phi_cap() * soil::saturation(h, p) / h
    } else {
        0.0
    }
}

fn conductivity(h: f64, p: &SoilParams) -> f64 {
    p.k_s * soil::relative_permeability(h, p)
}

/// Backward-Euler modified-Picard solve of the head-form column,
/// snapshotting at the requested times (which must sit on the time grid).
pub fn oracle_solve_1d(
    problem: &OracleProblem,
    config: &OracleConfig,
    output_times: &[f64],
) -> Result<OracleSolution> {
    problem.field.validate()?;
    if config.nodes < 3 {
        return Err(Error::config("reference column needs at least 3 nodes"));
    }
    if !(config.dt > 0.0) {
        return Err(Error::config("reference time step must be positive"));
    }
    let n = config.nodes;
    let dz = problem.depth / (n - 1) as f64;
    let z: Vec<f64> = (0..n).map(|i| i as f64 * dz).collect();
    let params: Vec<SoilParams> =
        z.iter().map(|&zi| *problem.field.params_at(&[0.0, 0.0, zi])).collect();

    let mut head = vec![0.0; n];
    for i in 0..n {
        head[i] = match problem.initial {
            InitialCondition::Head(h0) => h0,
            InitialCondition::WaterContent(theta0) => {
                let s = soil::saturation_from_content(theta0, &params[i]);
                soil::invert_saturation(s, &params[i])?
            }
            InitialCondition::HydrostaticMinusZ => -z[i],
        };
    }
    // The stored state carries the boundary values from t = 0, so the pinned
    // half cells never change and the trapezoid of the water content tracks
    // the half-node flux integral exactly.
    if let OracleBoundary::Dirichlet(g) = problem.bottom {
        head[0] = g;
    }
    if let OracleBoundary::Dirichlet(g) = problem.top {
        head[n - 1] = g;
    }
    let theta_of = |head: &[f64], out: &mut [f64]| {
        for i in 0..head.len() {
            out[i] = soil::water_content(soil::saturation(head[i], &params[i]), &params[i]);
        }
    };
    let mut theta_old = vec![0.0; n];
    theta_of(&head, &mut theta_old);

    // Discrete upward flux through the half node adjacent to each end,
    // with the same half-node conductivity averaging as the interior rows.
    // The interior rows telescope exactly to these values, and a no-flow
    // closure contributes zero, so stored mass tracks the flux integral to
    // the iteration tolerance.
    let half_node_flux = |head: &[f64], a: usize, b: usize| -> f64 {
        let k_half =
            0.5 * (conductivity(head[a], &params[a]) + conductivity(head[b], &params[b]));
        -k_half * ((head[b] - head[a]) / dz + 1.0)
    };
    let boundary_flux = |head: &[f64]| -> (f64, f64) {
        let q_bottom = match problem.bottom {
            OracleBoundary::NoFlow => 0.0,
            OracleBoundary::Dirichlet(_) => half_node_flux(head, 0, 1),
        };
        let q_top = match problem.top {
            OracleBoundary::NoFlow => 0.0,
            OracleBoundary::Dirichlet(_) => half_node_flux(head, n - 2, n - 1),
        };
        (q_bottom, q_top)
    };

    let mut snapshots = Vec::with_capacity(output_times.len());
    let mut flux_integral = 0.0;
    let mut step = 0usize;
    let mut k = vec![0.0; n];
    let mut theta_m = vec![0.0; n];
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut rhs = vec![0.0; n];

    let mut last_target = 0usize;
    for &t_out in output_times {
        let target = (t_out / config.dt).round() as usize;
        if (target as f64 * config.dt - t_out).abs() > 1e-6 * config.dt {
            return Err(Error::config(format!(
                "output time {t_out} is not a multiple of the time step {}",
                config.dt
            )));
        }
        if target < last_target {
            return Err(Error::config("output times must be ascending"));
        }
        last_target = target;

        while step < target {
            // One backward-Euler step, iterating on the head increment.
            let mut h_m = head.clone();
            if let OracleBoundary::Dirichlet(g) = problem.bottom {
                h_m[0] = g;
            }
            if let OracleBoundary::Dirichlet(g) = problem.top {
                h_m[n - 1] = g;
            }
            let mut converged = false;
            let mut delta_max = f64::INFINITY;
            // Damped iteration: a sharp front makes plain increments flap
            // between the wet and dry branches, so opposing consecutive
            // increments halve the applied fraction and aligned ones grow it
            // back; the factor never exceeds one, so damping cannot amplify.
            let mut omega = 1.0f64;
            let mut prev_delta: Option<Vec<f64>> = None;
            for _ in 0..config.max_iterations {
                for i in 0..n {
                    k[i] = conductivity(h_m[i], &params[i]);
                }
                theta_of(&h_m, &mut theta_m);
                let dz2 = dz * dz;
                for i in 1..n - 1 {
                    let k_lo = 0.5 * (k[i - 1] + k[i]);
                    let k_hi = 0.5 * (k[i] + k[i + 1]);
                    let c = capacity(h_m[i], &params[i]);
                    lower[i] = -k_lo / dz2;
                    diag[i] = c / config.dt + (k_lo + k_hi) / dz2;
                    upper[i] = -k_hi / dz2;
                    rhs[i] = (k_hi * (h_m[i + 1] - h_m[i]) - k_lo * (h_m[i] - h_m[i - 1])) / dz2
                        + (k[i + 1] - k[i - 1]) / (2.0 * dz)
                        - (theta_m[i] - theta_old[i]) / config.dt;
                }
                match problem.bottom {
                    OracleBoundary::Dirichlet(_) => {
                        diag[0] = 1.0;
                        upper[0] = 0.0;
                        rhs[0] = 0.0;
                    }
                    OracleBoundary::NoFlow => {
                        let k_hi = 0.5 * (k[0] + k[1]);
                        let c = capacity(h_m[0], &params[0]);
                        diag[0] = c / config.dt + 2.0 * k_hi / dz2;
                        upper[0] = -2.0 * k_hi / dz2;
                        rhs[0] = 2.0 * k_hi * ((h_m[1] - h_m[0]) / dz + 1.0) / dz
                            - (theta_m[0] - theta_old[0]) / config.dt;
                    }
                }
                match problem.top {
                    OracleBoundary::Dirichlet(_) => {
                        diag[n - 1] = 1.0;
                        lower[n - 1] = 0.0;
                        rhs[n - 1] = 0.0;
                    }
                    OracleBoundary::NoFlow => {
                        let k_lo = 0.5 * (k[n - 2] + k[n - 1]);
                        let c = capacity(h_m[n - 1], &params[n - 1]);
                        diag[n - 1] = c / config.dt + 2.0 * k_lo / dz2;
                        lower[n - 1] = -2.0 * k_lo / dz2;
                        rhs[n - 1] = -2.0 * k_lo * ((h_m[n - 1] - h_m[n - 2]) / dz + 1.0) / dz
                            - (theta_m[n - 1] - theta_old[n - 1]) / config.dt;
                    }
                }

                // Thomas elimination; the system is diagonally dominant.
                let mut c_star = vec![0.0; n];
                let mut d_star = vec![0.0; n];
                c_star[0] = upper[0] / diag[0];
                d_star[0] = rhs[0] / diag[0];
                for i in 1..n {
                    let m = diag[i] - lower[i] * c_star[i - 1];
                    if m == 0.0 {
                        return Err(Error::LinearSolve(format!(
                            "reference tridiagonal pivot vanished at row {i}"
                        )));
                    }
                    c_star[i] = upper[i] / m;
                    d_star[i] = (rhs[i] - lower[i] * d_star[i - 1]) / m;
                }
                let mut delta = vec![0.0; n];
                delta[n - 1] = d_star[n - 1];
                for i in (0..n - 1).rev() {
                    delta[i] = d_star[i] - c_star[i] * delta[i + 1];
                }

                delta_max = delta.iter().fold(0.0f64, |m, d| m.max(d.abs()));
                // Where the soil is nearly dry the capacity vanishes and the
                // head becomes an ill-conditioned image of the water content:
                // the iteration can orbit the solution at a fixed head
                // amplitude whose content image is pure noise. Accept on
                // either the head increment or its content image.
                let dtheta_max = delta
                    .iter()
                    .enumerate()
                    .map(|(i, d)| {
                        let a = soil::water_content(soil::saturation(h_m[i], &params[i]), &params[i]);
                        let b = soil::water_content(
                            soil::saturation(h_m[i] + d, &params[i]),
                            &params[i],
                        );
                        (b - a).abs()
                    })
                    .fold(0.0f64, f64::max);
                if delta_max <= config.tolerance || dtheta_max <= THETA_TOL {
                    for i in 0..n {
                        h_m[i] += delta[i];
                    }
                    converged = true;
                    break;
                }
                if let Some(dp) = &prev_delta {
                    let dot: f64 = delta.iter().zip(dp).map(|(a, b)| a * b).sum();
                    omega = if dot < 0.0 { (0.5 * omega).max(0.25) } else { (1.5 * omega).min(1.0) };
                }
                prev_delta = Some(delta.clone());
                for i in 0..n {
                    h_m[i] += omega * delta[i];
                }
            }
            if !converged {
                return Err(Error::NonConvergence {
                    time: (step + 1) as f64 * config.dt,
                    delta: delta_max,
                    iterations: config.max_iterations,
                });
            }
            head = h_m;
            theta_of(&head, &mut theta_old);
            step += 1;
            let (q_bottom, q_top) = boundary_flux(&head);
            flux_integral += (q_bottom - q_top) * config.dt;
        }

        let mut theta = vec![0.0; n];
        theta_of(&head, &mut theta);
        snapshots.push(OracleSnapshot { time: t_out, theta, head: head.clone() });
    }

    Ok(OracleSolution { z, snapshots, flux_integral })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::soil::shipped_table;

    fn clay_field() -> SoilField {
        SoilField::Homogeneous(
            shipped_table("homogeneous").unwrap().entry("clay").unwrap().params(),
        )
    }

    fn trapz(dz: f64, values: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 1..values.len() {
            acc += 0.5 * (values[i] + values[i - 1]) * dz;
        }
        acc
    }

    #[test]
    fn hydrostatic_profile_with_no_flow_closures_is_steady() {
        let problem = OracleProblem {
            depth: 1.0,
            field: clay_field(),
            initial: InitialCondition::HydrostaticMinusZ,
            bottom: OracleBoundary::NoFlow,
            top: OracleBoundary::NoFlow,
        };
        let config = OracleConfig { nodes: 51, dt: 0.01, ..Default::default() };
        let sol = oracle_solve_1d(&problem, &config, &[0.5]).unwrap();
        for (h, z) in sol.snapshots[0].head.iter().zip(&sol.z) {
            assert!((h - (-z)).abs() < 1e-8, "h({z}) = {h}");
        }
        assert!(sol.flux_integral.abs() < 1e-12);
    }

    #[test]
    fn saturated_column_stays_saturated() {
        let problem = OracleProblem {
            depth: 1.0,
            field: clay_field(),
            initial: InitialCondition::Head(0.0),
            bottom: OracleBoundary::Dirichlet(0.0),
            top: OracleBoundary::Dirichlet(0.0),
        };
        let config = OracleConfig { nodes: 41, dt: 0.01, ..Default::default() };
        let sol = oracle_solve_1d(&problem, &config, &[0.2]).unwrap();
        let theta_s = 0.475;
        for t in &sol.snapshots[0].theta {
            assert!((t - theta_s).abs() < 1e-12);
        }
    }

    #[test]
    fn refinement_self_consistency_on_the_clay_column() {
        // The wetting front is a near-shock, so the pair error between N and
        // 2N is dominated by the front shift of order dz and shrinks with
        // refinement; the decay ratio is the self-consistency evidence.
        let problem = OracleProblem {
            depth: 1.0,
            field: clay_field(),
            initial: InitialCondition::WaterContent(0.226),
            bottom: OracleBoundary::Dirichlet(-1051.0180387),
            top: OracleBoundary::Dirichlet(0.0),
        };
        let pair = |nodes: usize| -> f64 {
            let coarse = OracleConfig { nodes, dt: 5e-4, ..Default::default() };
            let fine = OracleConfig { nodes: 2 * nodes - 1, dt: 5e-4, ..Default::default() };
            let a = oracle_solve_1d(&problem, &coarse, &[0.5]).unwrap();
            let b = oracle_solve_1d(&problem, &fine, &[0.5]).unwrap();
            let mut acc = 0.0;
            for i in 0..nodes {
                let d = a.snapshots[0].theta[i] - b.snapshots[0].theta[2 * i];
                acc += d * d;
            }
            (acc / nodes as f64).sqrt()
        };
        let e_coarse = pair(401);
        let e_fine = pair(801);
        assert!(e_coarse <= 4.5e-3, "rmse = {e_coarse}");
        assert!(e_fine <= 0.75 * e_coarse, "no decay: {e_coarse} -> {e_fine}");
    }

    #[test]
    fn boundary_flux_integral_matches_stored_mass() {
        // Clay in meters/days and the layered column in centimeters/hours.
        let cases: Vec<(OracleProblem, OracleConfig, f64)> = vec![
            (
                OracleProblem {
                    depth: 1.0,
                    field: clay_field(),
                    initial: InitialCondition::WaterContent(0.226),
                    bottom: OracleBoundary::Dirichlet(-1051.0180387),
                    top: OracleBoundary::Dirichlet(0.0),
                },
                OracleConfig { nodes: 201, dt: 1e-3, ..Default::default() },
                0.2,
            ),
            (
                {
                    let table = shipped_table("layered").unwrap();
                    OracleProblem {
                        depth: 25.5,
                        field: SoilField::LayeredZ(vec![
                            (15.0, table.entry("sub_soil").unwrap().params()),
                            (25.0, table.entry("tilled_layer").unwrap().params()),
                            (25.5, table.entry("surface_crust").unwrap().params()),
                        ]),
                        initial: InitialCondition::Head(-100.0),
                        bottom: OracleBoundary::Dirichlet(-100.0),
                        top: OracleBoundary::Dirichlet(0.0),
                    }
                },
                OracleConfig { nodes: 511, dt: 2.5e-3, ..Default::default() },
                1.0,
            ),
        ];
        for (problem, config, t_end) in cases {
            let dz = problem.depth / (config.nodes - 1) as f64;
            let sol = oracle_solve_1d(&problem, &config, &[0.0, t_end]).unwrap();
            let mass0 = trapz(dz, &sol.snapshots[0].theta);
            let mass1 = trapz(dz, &sol.snapshots[1].theta);
            let stored = mass1 - mass0;
            assert!(stored > 0.0);
            let err = (stored - sol.flux_integral).abs() / mass1;
            assert!(err <= 1e-3, "balance error {err}");
        }
    }

    #[test]
    fn rejects_misaligned_output_times_and_surfaces_nonconvergence() {
        let problem = OracleProblem {
            depth: 1.0,
            field: clay_field(),
            initial: InitialCondition::Head(-1.0),
            bottom: OracleBoundary::Dirichlet(-1.0),
            top: OracleBoundary::Dirichlet(0.0),
        };
        let config = OracleConfig { nodes: 21, dt: 1e-3, ..Default::default() };
        assert!(oracle_solve_1d(&problem, &config, &[0.0015]).is_err());

        // One sweep cannot meet either stopping test on the wetting first step.
        let strict = OracleConfig { nodes: 21, dt: 1e-3, tolerance: 0.0, max_iterations: 1 };
        let err = oracle_solve_1d(&problem, &strict, &[0.01]).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { .. }), "{err}");
    }
}
