//! Brooks-Corey constitutive relations and the description of where each
//! soil lives inside the computational domain.
//!
//! Pressure heads are negative in the unsaturated regime. The air-entry
//! (displacement) head `h_d` is always negative; heads above it are treated
//! as saturated. All quantities use the unit system of the enclosing
//! scenario — no conversions happen here.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

/// Brooks-Corey parameter set for one soil material.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoilParams {
    /// Residual water content [-]
    pub theta_r: f64,
    /// Saturated water content [-]
    pub theta_s: f64,
    /// Saturated hydraulic conductivity [length/time]
    pub k_s: f64,
    /// Air-entry (displacement) pressure head, negative [length]
    pub h_d: f64,
    /// Pore-size distribution index [-]
    pub lambda: f64,
    /// Relative-permeability exponent [-]
    pub beta: f64,
}

impl SoilParams {
    /// Capillary capacity of the pore space: `theta_s - theta_r`.
    pub fn phi_cap(&self) -> f64 {
        self.theta_s - self.theta_r
    }

    /// Checks admissibility, including `lambda * beta > 1` which the
    /// Kirchhoff integral needs to converge at the dry end.
    pub fn validate(&self) -> Result<()> {
        if !(self.theta_r >= 0.0 && self.theta_r.is_finite()) {
            return Err(Error::config(format!("theta_r must be >= 0, got {}", self.theta_r)));
        }
        if !(self.theta_s > self.theta_r) {
            return Err(Error::config(format!(
                "theta_s ({}) must exceed theta_r ({})",
                self.theta_s, self.theta_r
            )));
        }
        if !(self.k_s > 0.0 && self.k_s.is_finite()) {
            return Err(Error::config(format!("k_s must be positive, got {}", self.k_s)));
        }
        if !(self.h_d < 0.0 && self.h_d.is_finite()) {
            return Err(Error::config(format!("h_d must be negative, got {}", self.h_d)));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::config(format!("beta must be positive, got {}", self.beta)));
        }
        if self.lambda * self.beta <= 1.0 {
            return Err(Error::config(format!(
                "lambda * beta must exceed 1 (got {} * {} = {})",
                self.lambda,
                self.beta,
                self.lambda * self.beta
            )));
        }
        Ok(())
    }
}

/// Effective saturation `S(h)`: `(h/h_d)^(-lambda)` below the air-entry
/// head, 1 at and above it. Always in `(0, 1]` for finite heads.
pub fn saturation(h: f64, p: &SoilParams) -> f64 {
    if h <= p.h_d {
        (h / p.h_d).powf(-p.lambda)
    } else {
        1.0
    }
}

/// Relative permeability `kr(h) = (h/h_d)^(-lambda*beta)` below the
/// air-entry head, 1 at and above it. Equals `S(h)^beta`.
pub fn relative_permeability(h: f64, p: &SoilParams) -> f64 {
    if h <= p.h_d {
        (h / p.h_d).powf(-p.lambda * p.beta)
    } else {
        1.0
    }
}

/// Volumetric water content from effective saturation.
pub fn water_content(s: f64, p: &SoilParams) -> f64 {
    p.theta_r + s * (p.theta_s - p.theta_r)
}

/// Effective saturation from volumetric water content.
pub fn saturation_from_content(theta: f64, p: &SoilParams) -> f64 {
    (theta - p.theta_r) / (p.theta_s - p.theta_r)
}

/// Pressure head at a given effective saturation: `h = h_d * S^(-1/lambda)`.
/// `S = 1` maps to the air-entry head. Errors outside `(0, 1]`.
pub fn invert_saturation(s: f64, p: &SoilParams) -> Result<f64> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(Error::domain(format!(
            "effective saturation must lie in (0, 1], got {s}"
        )));
    }
    Ok(p.h_d * s.powf(-1.0 / p.lambda))
}

/// Burdine-type permeability exponent from the pore-size index:
/// `beta = 3 + 2/lambda`.
pub fn beta_from_lambda(lambda: f64) -> f64 {
    3.0 + 2.0 / lambda
}

/// Maps van Genuchten `(alpha, n, m)` to Brooks-Corey `(lambda, h_d)`.
///
/// Uses the matched-point equivalence
/// `lambda = m/(1-m) * (1 - 0.5^(1/m))` and
/// `|h_d| = (1/alpha) * Sx^(1/lambda) * (Sx^(-1/m) - 1)^(1-m)` with
/// `Sx = 0.72 - 0.35 exp(-n^4)`. The returned head is negative.
pub fn vg_to_bc(alpha: f64, n: f64, m: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0) {
        return Err(Error::config(format!("van Genuchten alpha must be positive, got {alpha}")));
    }
    if !(n > 1.0) {
        return Err(Error::config(format!("van Genuchten n must exceed 1, got {n}")));
    }
    if !(m > 0.0 && m < 1.0) {
        return Err(Error::config(format!("van Genuchten m must lie in (0, 1), got {m}")));
    }
    let sx = 0.72 - 0.35 * (-n.powi(4)).exp();
    let lambda = m / (1.0 - m) * (1.0 - 0.5f64.powf(1.0 / m));
    let h_d_abs = (1.0 / alpha) * sx.powf(1.0 / lambda) * (sx.powf(-1.0 / m) - 1.0).powf(1.0 - m);
    Ok((lambda, -h_d_abs))
}

/// Spatial layout of soil materials over the domain.
///
/// Interface points resolve to the lower (in z) or left (in x) region, so
/// a node sitting exactly on an interface has a unique material.
#[derive(Clone, Debug)]
pub enum SoilField {
    Homogeneous(SoilParams),
    /// Horizontal layers. Each entry is the inclusive upper elevation of a
    /// layer; entries are ascending and the last one closes the column.
    LayeredZ(Vec<(f64, SoilParams)>),
    /// Vertical strips. Each entry is the inclusive right edge of a strip.
    SplitX(Vec<(f64, SoilParams)>),
    /// Two materials separated by the curved interface
    /// `xi(x) = l2 * (0.1 * (1 - cos(pi x / l1)) + 0.45)`.
    Curvilinear {
        l1: f64,
        l2: f64,
        /// Material for `z > xi(x)`.
        above: SoilParams,
        /// Material for `z <= xi(x)`.
        below: SoilParams,
    },
}

impl SoilField {
    /// Elevation of the curved interface at `x`.
    pub fn curvilinear_interface(l1: f64, l2: f64, x: f64) -> f64 {
        l2 * (0.1 * (1.0 - (std::f64::consts::PI * x / l1).cos()) + 0.45)
    }

    /// Material at a point. Points beyond the last threshold fall into the
    /// last region so boundary nodes at the domain edge always resolve.
    pub fn params_at(&self, point: &[f64; 3]) -> &SoilParams {
        match self {
            SoilField::Homogeneous(p) => p,
            SoilField::LayeredZ(layers) => {
                let z = point[2];
                layers
                    .iter()
                    .find(|(z_max, _)| z <= *z_max)
                    .map(|(_, p)| p)
                    .unwrap_or(&layers.last().expect("layers are non-empty").1)
            }
            SoilField::SplitX(regions) => {
                let x = point[0];
                regions
                    .iter()
                    .find(|(x_max, _)| x <= *x_max)
                    .map(|(_, p)| p)
                    .unwrap_or(&regions.last().expect("regions are non-empty").1)
            }
            SoilField::Curvilinear { l1, l2, above, below } => {
                let xi = Self::curvilinear_interface(*l1, *l2, point[0]);
                if point[2] <= xi {
                    below
                } else {
                    above
                }
            }
        }
    }

    /// Validates every material and the region layout.
    pub fn validate(&self) -> Result<()> {
        match self {
            SoilField::Homogeneous(p) => p.validate(),
            SoilField::LayeredZ(layers) | SoilField::SplitX(layers) => {
                if layers.is_empty() {
                    return Err(Error::config("soil field needs at least one region"));
                }
                let mut prev = f64::NEG_INFINITY;
                for (edge, p) in layers {
                    if *edge <= prev {
                        return Err(Error::config(format!(
                            "region edges must be strictly ascending, got {edge} after {prev}"
                        )));
                    }
                    prev = *edge;
                    p.validate()?;
                }
                Ok(())
            }
            SoilField::Curvilinear { l1, l2, above, below } => {
                if !(*l1 > 0.0 && *l2 > 0.0) {
                    return Err(Error::config("curvilinear interface needs positive l1, l2"));
                }
                above.validate()?;
                below.validate()
            }
        }
    }
}

/// One row of a shipped soil table.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SoilTableEntry {
    pub name: String,
    pub theta_r: f64,
    pub theta_s: f64,
    /// Initial water content, where the source data provides one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_0: Option<f64>,
    pub k_s: f64,
    pub h_d: f64,
    pub lambda: f64,
    pub beta: f64,
    /// Elevation range for layered columns, informational.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_max: Option<f64>,
}

impl SoilTableEntry {
    pub fn params(&self) -> SoilParams {
        SoilParams {
            theta_r: self.theta_r,
            theta_s: self.theta_s,
            k_s: self.k_s,
            h_d: self.h_d,
            lambda: self.lambda,
            beta: self.beta,
        }
    }
}

/// A shipped soil table: a named list of materials plus the unit system
/// its numbers are expressed in.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SoilTable {
    pub name: String,
    /// One of `m_day`, `cm_h`, `m_h`.
    pub unit_system: String,
    pub entries: Vec<SoilTableEntry>,
}

impl SoilTable {
    pub fn entry(&self, name: &str) -> Option<&SoilTableEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

static TABLES: OnceLock<Vec<SoilTable>> = OnceLock::new();

/// The soil tables shipped with the crate, parsed once on first use.
pub fn shipped_tables() -> &'static [SoilTable] {
    TABLES.get_or_init(|| {
        [
            include_str!("../tables/homogeneous.toml"),
            include_str!("../tables/layered.toml"),
            include_str!("../tables/curvilinear.toml"),
        ]
        .iter()
        .map(|text| toml::from_str::<SoilTable>(text).expect("shipped soil table is valid"))
        .collect()
    })
}

/// Looks up a shipped table by name.
pub fn shipped_table(name: &str) -> Option<&'static SoilTable> {
    shipped_tables().iter().find(|t| t.name == name)
}
