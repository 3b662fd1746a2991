//! Mesh-free solver for infiltration in heterogeneous unsaturated soils.
//!
//! The governing pressure-head equation with Brooks-Corey constitutive
//! relations is rewritten through a Kirchhoff change of variable that
//! absorbs material heterogeneity into per-node constants, then
//! discretized by localized radial-basis-function collocation on a
//! uniform point cloud and advanced with backward Euler plus Picard
//! linearization. An independent head-form finite-difference column
//! solver provides reference solutions for verification.

pub mod error;
pub mod grid;
pub mod linalg;
pub mod operators;
pub mod oracle;
pub mod output;
pub mod scenario;
pub mod soil;
pub mod stepper;
pub mod transform;

pub use error::{Error, Result};
