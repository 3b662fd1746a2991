//! Kirchhoff change of variable for the pressure-head equation.
//!
//! The transformed unknown `u(h)` integrates relative permeability over
//! head, scaled so that one global variable works across materials: each
//! material is referenced to the domain-mean air-entry head `h_bar`
//! through `omega = h_bar / h_d`. In `u` the conductive term becomes
//! `chi * grad u` with a constant-per-material `chi`, which is what makes
//! sharp wetting fronts tractable for collocation.
//!
//! All formulas below require `lambda * beta > 1`; `SoilParams::validate`
//! enforces that. `u` is positive for every finite head and increases
//! monotonically with `h`, with a C1 junction at the air-entry head.

use crate::error::{Error, Result};
use crate::grid::PointCloud;
use crate::soil::{relative_permeability, saturation, SoilField, SoilParams};

/// Effective conductivity scale `chi = k_s * omega^(-lambda*beta)` with
/// `omega = h_bar / h_d`.
pub fn chi(p: &SoilParams, h_bar: f64) -> f64 {
    p.k_s * (h_bar / p.h_d).powf(-p.lambda * p.beta)
}

/// Transformed variable at the air-entry head; the junction between the
/// power-law (dry) and linear (wet) branches of `u(h)`.
pub fn u_breakpoint(p: &SoilParams, h_bar: f64) -> f64 {
    let m = p.lambda * p.beta;
    h_bar / (1.0 - m) * (p.h_d / h_bar).powf(1.0 - m)
}

/// Forward transform `u(h)`.
pub fn forward(h: f64, p: &SoilParams, h_bar: f64) -> f64 {
    let m = p.lambda * p.beta;
    if h <= p.h_d {
        h_bar / (1.0 - m) * (h / h_bar).powf(1.0 - m)
    } else {
        u_breakpoint(p, h_bar) + (p.h_d / h_bar).powf(-m) * (h - p.h_d)
    }
}

/// Derivative `du/dh`; continuous across the air-entry head.
pub fn forward_derivative(h: f64, p: &SoilParams, h_bar: f64) -> f64 {
    let m = p.lambda * p.beta;
    if h <= p.h_d {
        (h / h_bar).powf(-m)
    } else {
        (p.h_d / h_bar).powf(-m)
    }
}

/// Inverse transform `h(u)`. The transform maps finite heads onto
/// `u > 0`, so non-positive arguments are domain errors.
pub fn inverse(u: f64, p: &SoilParams, h_bar: f64) -> Result<f64> {
    if !(u > 0.0) {
        return Err(Error::domain(format!(
            "transformed head must be positive, got {u}"
        )));
    }
    let m = p.lambda * p.beta;
    let u_star = u_breakpoint(p, h_bar);
    if u <= u_star {
        Ok(h_bar * ((1.0 - m) * u / h_bar).powf(1.0 / (1.0 - m)))
    } else {
        Ok(p.h_d + (p.h_d / h_bar).powf(m) * (u - u_star))
    }
}

/// Storage coefficient of the transformed equation,
/// `E(h) = d theta / du`. Zero at and above the air-entry head where the
/// material is saturated.
pub fn coeff_e(h: f64, p: &SoilParams, h_bar: f64) -> f64 {
    if h <= p.h_d {
        let m = p.lambda * p.beta;
        let omega = h_bar / p.h_d;
        p.phi_cap() * (-p.lambda / h_bar) * omega.powf(-p.lambda)
            * (h / h_bar).powf(m - p.lambda - 1.0)
    } else {
        0.0
    }
}

/// Advective weight of the transformed equation. Together with `G` it
/// reproduces the conductivity: `chi * F * u + G = k_s * kr` on both
/// branches.
pub fn coeff_f(h: f64, p: &SoilParams) -> f64 {
    if h <= p.h_d {
        (1.0 - p.lambda * p.beta) / h
    } else {
        0.0
    }
}

/// Gravity-flux remainder: zero on the dry branch, `k_s` when saturated.
pub fn coeff_g(h: f64, p: &SoilParams) -> f64 {
    if h <= p.h_d {
        0.0
    } else {
        p.k_s
    }
}

/// Measure-weighted domain mean of the air-entry head. Exact for
/// homogeneous, layered and strip layouts; the curved interface is
/// integrated with a fixed 4096-cell midpoint rule so the value does not
/// depend on grid resolution.
pub fn compute_h_bar(field: &SoilField, cloud: &PointCloud) -> f64 {
    match field {
        SoilField::Homogeneous(p) => p.h_d,
        SoilField::LayeredZ(layers) => segment_mean(layers, cloud.extents[2]),
        SoilField::SplitX(regions) => segment_mean(regions, cloud.extents[0]),
        SoilField::Curvilinear { l1, l2, above, below } => {
            let width = cloud.extents[0];
            let height = cloud.extents[2];
            let cells = 4096;
            let dx = width / cells as f64;
            let mut below_area = 0.0;
            for i in 0..cells {
                let xm = (i as f64 + 0.5) * dx;
                let xi = SoilField::curvilinear_interface(*l1, *l2, xm);
                below_area += dx * xi.clamp(0.0, height);
            }
            let total = width * height;
            (below_area * below.h_d + (total - below_area) * above.h_d) / total
        }
    }
}

/// Mean of `h_d` over `[0, length]` for regions given by ascending
/// inclusive upper edges; any remainder beyond the last edge belongs to
/// the last region, mirroring point lookup.
fn segment_mean(regions: &[(f64, SoilParams)], length: f64) -> f64 {
    let mut acc = 0.0;
    let mut prev = 0.0;
    for (edge, p) in regions {
        let hi = edge.clamp(prev, length);
        acc += (hi - prev) * p.h_d;
        prev = hi;
    }
    if prev < length {
        acc += (length - prev) * regions.last().expect("regions are non-empty").1.h_d;
    }
    acc / length
}

/// Per-node transform data for one problem: the domain-mean air-entry
/// head, each node's material, and each node's `chi`.
#[derive(Clone, Debug)]
pub struct TransformContext {
    pub h_bar: f64,
    pub params: Vec<SoilParams>,
    pub chi: Vec<f64>,
}

impl TransformContext {
    pub fn new(field: &SoilField, cloud: &PointCloud) -> Result<Self> {
        field.validate()?;
        let h_bar = compute_h_bar(field, cloud);
        let params: Vec<SoilParams> =
            cloud.points.iter().map(|pt| *field.params_at(pt)).collect();
        let chi = params.iter().map(|p| chi(p, h_bar)).collect();
        Ok(TransformContext { h_bar, params, chi })
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn forward_at(&self, node: usize, h: f64) -> f64 {
        forward(h, &self.params[node], self.h_bar)
    }

    pub fn inverse_at(&self, node: usize, u: f64) -> Result<f64> {
        inverse(u, &self.params[node], self.h_bar)
    }

    pub fn e_at(&self, node: usize, h: f64) -> f64 {
        coeff_e(h, &self.params[node], self.h_bar)
    }

    pub fn f_at(&self, node: usize, h: f64) -> f64 {
        coeff_f(h, &self.params[node])
    }

    pub fn g_at(&self, node: usize, h: f64) -> f64 {
        coeff_g(h, &self.params[node])
    }

    pub fn u_break_at(&self, node: usize) -> f64 {
        u_breakpoint(&self.params[node], self.h_bar)
    }

    /// Hydraulic conductivity `k_s * kr(h)` at a node.
    pub fn conductivity_at(&self, node: usize, h: f64) -> f64 {
        let p = &self.params[node];
        p.k_s * relative_permeability(h, p)
    }

    /// Effective saturation at a node.
    pub fn saturation_at(&self, node: usize, h: f64) -> f64 {
        saturation(h, &self.params[node])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::soil::{shipped_table, water_content};
    use rand::{Rng, SeedableRng};

    fn clay() -> SoilParams {
        shipped_table("homogeneous").unwrap().entry("clay").unwrap().params()
    }

    #[test]
    fn forward_values_for_clay() {
        let p = clay();
        let h_bar = p.h_d;
        assert!((forward(-1.0, &p, h_bar) - 0.0678303935).abs() < 1e-9);
        assert!((u_breakpoint(&p, h_bar) - 0.2678385807).abs() < 1e-9);
        // Wet branch is linear beyond the junction.
        assert!((forward(-0.1, &p, h_bar) - 0.5409385807).abs() < 1e-9);
        // Very dry heads map to small positive values.
        let u_dry = forward(-1051.018, &p, h_bar);
        assert!((u_dry - 4.1909427e-6).abs() < 1e-12);
        assert!(u_dry > 0.0);
    }

    #[test]
    fn round_trip_on_both_branches() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for entry in &shipped_table("homogeneous").unwrap().entries {
            let p = entry.params();
            for h_bar in [p.h_d, 2.0 * p.h_d, 0.4 * p.h_d] {
                for _ in 0..200 {
                    let h = -10f64.powf(rng.random_range(-3.0..3.5));
                    let u = forward(h, &p, h_bar);
                    assert!(u > 0.0);
                    let back = inverse(u, &p, h_bar).unwrap();
                    assert!(
                        (back - h).abs() < 1e-10 * h.abs().max(1.0),
                        "{h} -> {u} -> {back} (h_bar {h_bar})"
                    );
                }
            }
        }
    }

    #[test]
    fn junction_is_continuous_and_smooth() {
        for entry in &shipped_table("layered").unwrap().entries {
            let p = entry.params();
            let h_bar = -7.4617647059;
            let u_star = u_breakpoint(&p, h_bar);
            assert!((forward(p.h_d, &p, h_bar) - u_star).abs() < 1e-13 * u_star);
            assert!((inverse(u_star, &p, h_bar).unwrap() - p.h_d).abs() < 1e-10);
            // One-sided slopes agree at the junction.
            let left = forward_derivative(p.h_d - 1e-12, &p, h_bar);
            let right = forward_derivative(p.h_d + 1e-12, &p, h_bar);
            assert!((left - right).abs() < 1e-8 * left);
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let p = clay();
        let h_bar = 1.5 * p.h_d;
        for h in [-8.0f64, -2.0, -0.5, -0.2, -0.05] {
            let d = 1e-6 * h.abs();
            let numeric = (forward(h + d, &p, h_bar) - forward(h - d, &p, h_bar)) / (2.0 * d);
            let analytic = forward_derivative(h, &p, h_bar);
            assert!(
                (numeric - analytic).abs() < 1e-5 * analytic,
                "h = {h}: {numeric} vs {analytic}"
            );
        }
    }

    #[test]
    fn inverse_rejects_non_positive_input() {
        let p = clay();
        assert!(inverse(0.0, &p, p.h_d).is_err());
        assert!(inverse(-0.3, &p, p.h_d).is_err());
        assert!(inverse(f64::NAN, &p, p.h_d).is_err());
    }

    #[test]
    fn conductivity_identity_on_both_branches() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for entry in &shipped_table("homogeneous").unwrap().entries {
            let p = entry.params();
            for h_bar in [p.h_d, 3.0 * p.h_d] {
                let x = chi(&p, h_bar);
                for _ in 0..300 {
                    let h = -10f64.powf(rng.random_range(-3.0..3.0));
                    let u = forward(h, &p, h_bar);
                    let recon = x * coeff_f(h, &p) * u + coeff_g(h, &p);
                    let direct = p.k_s * relative_permeability(h, &p);
                    assert!(
                        (recon - direct).abs() < 1e-12 * direct.max(1e-300),
                        "h = {h}: {recon} vs {direct}"
                    );
                }
            }
        }
    }

    #[test]
    fn storage_coefficient_value_and_consistency() {
        let p = clay();
        let e = coeff_e(-1.0, &p, p.h_d);
        assert!((e - 0.4690991889).abs() < 1e-9, "E(-1) = {e}");
        assert_eq!(coeff_e(-0.1, &p, p.h_d), 0.0);
        // E equals d theta / du by the chain rule; check numerically.
        let h_bar = 2.0 * p.h_d;
        for h in [-5.0, -1.0, -0.45] {
            let u = forward(h, &p, h_bar);
            let du = 1e-7 * u;
            let theta = |u: f64| {
                let h = inverse(u, &p, h_bar).unwrap();
                water_content(saturation(h, &p), &p)
            };
            let numeric = (theta(u + du) - theta(u - du)) / (2.0 * du);
            let analytic = coeff_e(h, &p, h_bar);
            assert!(
                (numeric - analytic).abs() < 1e-4 * analytic.abs().max(1e-12),
                "h = {h}: {numeric} vs {analytic}"
            );
        }
    }

    #[test]
    fn domain_mean_air_entry_head() {
        let table = shipped_table("layered").unwrap();
        let field = SoilField::LayeredZ(vec![
            (15.0, table.entry("sub_soil").unwrap().params()),
            (25.0, table.entry("tilled_layer").unwrap().params()),
            (25.5, table.entry("surface_crust").unwrap().params()),
        ]);
        let cloud = PointCloud::build(1, [0.0, 0.0, 25.5], [1, 1, 52]).unwrap();
        let h_bar = compute_h_bar(&field, &cloud);
        assert!((h_bar - (-7.4617647059)).abs() < 1e-9, "h_bar = {h_bar}");

        let curv = shipped_table("curvilinear").unwrap();
        let field = SoilField::Curvilinear {
            l1: 1.0,
            l2: 1.0,
            above: curv.entry("upper_region").unwrap().params(),
            below: curv.entry("lower_region").unwrap().params(),
        };
        let cloud = PointCloud::build(2, [1.0, 0.0, 1.0], [21, 1, 21]).unwrap();
        // The curved interface encloses exactly 55% of the box, so the
        // quadrature must land on the analytic mean.
        let h_bar = compute_h_bar(&field, &cloud);
        assert!((h_bar - (-0.329)).abs() < 1e-7, "h_bar = {h_bar}");
    }

    #[test]
    fn context_collects_per_node_materials() {
        let table = shipped_table("layered").unwrap();
        let sub = table.entry("sub_soil").unwrap().params();
        let crust = table.entry("surface_crust").unwrap().params();
        let field = SoilField::LayeredZ(vec![
            (15.0, sub),
            (25.0, table.entry("tilled_layer").unwrap().params()),
            (25.5, crust),
        ]);
        let cloud = PointCloud::build(1, [0.0, 0.0, 25.5], [1, 1, 52]).unwrap();
        let ctx = TransformContext::new(&field, &cloud).unwrap();
        assert_eq!(ctx.len(), 52);
        assert_eq!(ctx.params[0], sub);
        assert_eq!(ctx.params[51], crust);
        let chi_tilled = ctx.chi[40]; // z = 20, tilled layer
        assert!((chi_tilled - 0.4643262188).abs() < 1e-9, "chi = {chi_tilled}");
        // Transformed heads are shared across materials: continuity of u
        // at an interface implies a head jump, not the other way round.
        let u = 0.05;
        let h_sub = ctx.inverse_at(0, u).unwrap();
        let h_crust = ctx.inverse_at(51, u).unwrap();
        assert!(h_sub != h_crust);
    }
}
