//! Local collocation operators.
//!
//! Interior nodes carry a lattice stencil (center plus both neighbours on
//! each active axis) with half-node averaged coefficients. The stencil
//! weights are lifted onto the node's influence domain through a local
//! Gaussian-kernel system: with Gram matrix `Psi` over the members and
//! `Gamma_j` = stencil operator applied to kernel `psi_j`, the row is
//! `Psi^{-1} Gamma`. On a uniform lattice whose stencil lies inside the
//! influence domain this reproduces the stencil weights exactly; on
//! irregular domains it generalizes them through the local interpolant.
//!
//! No-flux boundary rows use the analytic kernel gradient along the
//! outward normal through the same local system.

use crate::error::{Error, Result};
use crate::grid::{InfluenceDomain, PointCloud};
use nalgebra::linalg::SymmetricEigen;
use nalgebra::{DMatrix, DVector};

/// Gaussian kernel as a function of squared distance: `exp(-(c r)^2)`.
pub fn kernel(shape: f64, r2: f64) -> f64 {
    (-shape * shape * r2).exp()
}

/// Kernel value between two points.
pub fn kernel_value(shape: f64, x: &[f64; 3], xj: &[f64; 3]) -> f64 {
    let dx = x[0] - xj[0];
    let dy = x[1] - xj[1];
    let dz = x[2] - xj[2];
    kernel(shape, dx * dx + dy * dy + dz * dz)
}

/// Analytic kernel gradient with respect to `x`:
/// `-2 c^2 (x - xj) psi(|x - xj|)`.
pub fn kernel_gradient(shape: f64, x: &[f64; 3], xj: &[f64; 3]) -> [f64; 3] {
    let psi = kernel_value(shape, x, xj);
    let s = -2.0 * shape * shape * psi;
    [s * (x[0] - xj[0]), s * (x[1] - xj[1]), s * (x[2] - xj[2])]
}

/// Weights on `[lower, center, upper]` for the conduction term
/// `d/ds (coeff du/ds)` along one axis, with the coefficient averaged to
/// the half nodes: `(c_+ (u_R - u_C) - c_- (u_C - u_L)) / delta^2`.
pub fn axis_diffusion_weights(coeff: [f64; 3], delta: f64) -> [f64; 3] {
    let lo = 0.5 * (coeff[0] + coeff[1]);
    let hi = 0.5 * (coeff[1] + coeff[2]);
    let d2 = delta * delta;
    [lo / d2, -(lo + hi) / d2, hi / d2]
}

/// Weights on `[lower, center, upper]` for the advective term
/// `d(coeff u)/ds` along one axis, with the nodal coefficient products
/// averaged to the half nodes:
/// `(c_+ (u_C + u_R)/2 - c_- (u_L + u_C)/2) / delta`.
pub fn axis_advection_weights(coeff: [f64; 3], delta: f64) -> [f64; 3] {
    let lo = 0.5 * (coeff[0] + coeff[1]);
    let hi = 0.5 * (coeff[1] + coeff[2]);
    [-lo / (2.0 * delta), (hi - lo) / (2.0 * delta), hi / (2.0 * delta)]
}

/// Central difference of a nodal coefficient from its half-node averages:
/// `(c_+ - c_-) / delta = (c_R - c_L) / (2 delta)`.
pub fn axis_gravity_difference(coeff: [f64; 3], delta: f64) -> f64 {
    (coeff[2] - coeff[0]) / (2.0 * delta)
}

/// Lattice stencil of an interior node: the node itself first, then the
/// (lower, upper) neighbour pair along each active axis.
#[derive(Clone, Debug)]
pub struct Stencil {
    pub nodes: Vec<usize>,
    /// `(axis, lower position, upper position)` into `nodes`.
    pub axes: Vec<(usize, usize, usize)>,
}

impl Stencil {
    pub fn build(cloud: &PointCloud, node: usize) -> Result<Self> {
        let mut nodes = vec![node];
        let mut axes = Vec::new();
        for &axis in cloud.active_axes() {
            let (lo, hi) = cloud.axis_neighbors(node, axis)?;
            axes.push((axis, nodes.len(), nodes.len() + 1));
            nodes.push(lo);
            nodes.push(hi);
        }
        Ok(Stencil { nodes, axes })
    }

    /// Stencil weights for the full conduction operator
    /// `sum_axes d/ds (coeff du/ds)` from a nodal coefficient array.
    pub fn conduction_weights(&self, cloud: &PointCloud, coeff: &[f64]) -> DVector<f64> {
        let mut w = DVector::zeros(self.nodes.len());
        for &(axis, lo, hi) in &self.axes {
            let triple = [
                coeff[self.nodes[lo]],
                coeff[self.nodes[0]],
                coeff[self.nodes[hi]],
            ];
            let ws = axis_diffusion_weights(triple, cloud.spacing[axis]);
            w[lo] += ws[0];
            w[0] += ws[1];
            w[hi] += ws[2];
        }
        w
    }

    /// Positions in `nodes` of `(lower, upper)` along one axis.
    pub fn axis_positions(&self, axis: usize) -> Option<(usize, usize)> {
        self.axes
            .iter()
            .find(|(a, _, _)| *a == axis)
            .map(|&(_, lo, hi)| (lo, hi))
    }
}

/// Eigen-factored Gaussian Gram system over one influence domain.
pub struct LocalSystem {
    pub center: usize,
    pub members: Vec<usize>,
    /// Spectral condition number of the Gram matrix; infinite when the
    /// numerical spectrum is not positive.
    pub cond: f64,
    shape: f64,
    eigvecs: DMatrix<f64>,
    inv_eigs: DVector<f64>,
}

impl LocalSystem {
    pub fn new(cloud: &PointCloud, domain: &InfluenceDomain, shape: f64) -> Self {
        let n = domain.members.len();
        let mut psi = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in a..n {
                let v = kernel_value(
                    shape,
                    &cloud.points[domain.members[a]],
                    &cloud.points[domain.members[b]],
                );
                psi[(a, b)] = v;
                psi[(b, a)] = v;
            }
        }
        let eigen = SymmetricEigen::new(psi);
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for &l in eigen.eigenvalues.iter() {
            min = min.min(l);
            max = max.max(l);
        }
        let cond = if min > 0.0 { max / min } else { f64::INFINITY };
        let inv_eigs = eigen
            .eigenvalues
            .map(|l| if l > 0.0 { 1.0 / l } else { 0.0 });
        LocalSystem {
            center: domain.center,
            members: domain.members.clone(),
            cond,
            shape,
            eigvecs: eigen.eigenvectors,
            inv_eigs,
        }
    }

    /// Solves `Psi y = rhs` through the eigendecomposition.
    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let mut y = self.eigvecs.tr_mul(rhs);
        y.component_mul_assign(&self.inv_eigs);
        &self.eigvecs * y
    }

    /// Map `B = Psi^{-1} Psi_sub` taking weights over the stencil nodes to
    /// weights over the members: a row is `B w` for stencil weights `w`.
    /// When every stencil node is a member, `B` is a 0/1 selection and the
    /// row reduces to the plain stencil weights.
    pub fn stencil_basis(&self, cloud: &PointCloud, stencil: &Stencil) -> DMatrix<f64> {
        let n = self.members.len();
        let m = stencil.nodes.len();
        let mut basis = DMatrix::zeros(n, m);
        for (k, &snode) in stencil.nodes.iter().enumerate() {
            let col = DVector::from_iterator(
                n,
                self.members
                    .iter()
                    .map(|&j| kernel_value(self.shape, &cloud.points[snode], &cloud.points[j])),
            );
            basis.set_column(k, &self.solve(&col));
        }
        basis
    }

    /// Row approximating the directional derivative `d u / d n` at the
    /// center from member values, via the analytic kernel gradient.
    pub fn directional_derivative_row(&self, cloud: &PointCloud, direction: [f64; 3]) -> Vec<f64> {
        let x = &cloud.points[self.center];
        let gamma = DVector::from_iterator(
            self.members.len(),
            self.members.iter().map(|&j| {
                let g = kernel_gradient(self.shape, x, &cloud.points[j]);
                g[0] * direction[0] + g[1] * direction[1] + g[2] * direction[2]
            }),
        );
        self.solve(&gamma).iter().copied().collect()
    }
}

/// Precomputed collocation data for one interior node: the constant
/// conduction row plus the basis map that turns per-iteration advection
/// weights into member weights.
pub struct InteriorNode {
    pub node: usize,
    pub members: Vec<usize>,
    pub cond: f64,
    stencil: Stencil,
    basis: DMatrix<f64>,
    diffusion_row: Vec<f64>,
    z_cols: (usize, usize),
    dz: f64,
}

impl InteriorNode {
    /// Builds the local system and freezes the conduction row from the
    /// nodal `chi` array. Rejects influence domains whose Gram condition
    /// number exceeds `max_cond`.
    pub fn build(
        cloud: &PointCloud,
        domain: &InfluenceDomain,
        shape: f64,
        chi: &[f64],
        max_cond: f64,
    ) -> Result<Self> {
        let local = LocalSystem::new(cloud, domain, shape);
        if !(local.cond <= max_cond) {
            return Err(Error::IllConditioned { node: domain.center, cond: local.cond });
        }
        let stencil = Stencil::build(cloud, domain.center)?;
        let basis = local.stencil_basis(cloud, &stencil);
        let w = stencil.conduction_weights(cloud, chi);
        let diffusion_row: Vec<f64> = (&basis * &w).iter().copied().collect();
        let z_cols = stencil
            .axis_positions(2)
            .expect("the vertical axis is always active");
        Ok(InteriorNode {
            node: domain.center,
            members: local.members,
            cond: local.cond,
            stencil,
            basis,
            diffusion_row,
            z_cols,
            dz: cloud.spacing[2],
        })
    }

    pub fn stencil_nodes(&self) -> &[usize] {
        &self.stencil.nodes
    }

    /// Cloud ids of the `(lower, upper)` vertical stencil neighbours.
    pub fn z_neighbors(&self) -> (usize, usize) {
        (
            self.stencil.nodes[self.z_cols.0],
            self.stencil.nodes[self.z_cols.1],
        )
    }

    /// Writes the full spatial row (conduction plus vertical advection)
    /// over the members. `cf` holds the advective coefficient at the
    /// `[lower, center, upper]` vertical stencil nodes.
    pub fn row_into(&self, cf: [f64; 3], out: &mut [f64]) {
        let w = axis_advection_weights(cf, self.dz);
        let (lo, hi) = self.z_cols;
        for (j, slot) in out.iter_mut().enumerate() {
            *slot = self.diffusion_row[j]
                + self.basis[(j, lo)] * w[0]
                + self.basis[(j, 0)] * w[1]
                + self.basis[(j, hi)] * w[2];
        }
    }

    /// Central gravity difference from the nodal `[lower, center, upper]`
    /// values of the saturated-branch conductivity.
    pub fn gravity_term(&self, g: [f64; 3]) -> f64 {
        axis_gravity_difference(g, self.dz)
    }
}

/// Zero-normal-flux boundary row: `-chi du/dn = 0` expressed over the
/// boundary node's influence domain.
pub struct NoFluxNode {
    pub node: usize,
    pub members: Vec<usize>,
    pub cond: f64,
    pub row: Vec<f64>,
}

pub fn no_flux_row(
    cloud: &PointCloud,
    domain: &InfluenceDomain,
    shape: f64,
    chi_b: f64,
    outward: [f64; 3],
    max_cond: f64,
) -> Result<NoFluxNode> {
    let local = LocalSystem::new(cloud, domain, shape);
    if !(local.cond <= max_cond) {
        return Err(Error::IllConditioned { node: domain.center, cond: local.cond });
    }
    let mut row = local.directional_derivative_row(cloud, outward);
    for w in &mut row {
        *w *= -chi_b;
    }
    Ok(NoFluxNode { node: domain.center, members: local.members, cond: local.cond, row })
}

/// Interior-operator residuals on a smooth manufactured 1D field with
/// smooth synthetic coefficients, one `(spacing, max residual)` pair per
/// grid size. Used to estimate the spatial convergence order.
pub fn smooth_field_errors(sizes: &[usize], shape: f64, n_s: usize) -> Result<Vec<(f64, f64)>> {
    use std::f64::consts::PI;
    let u = |z: f64| 2.0 + (2.0 * PI * z).sin();
    let du = |z: f64| 2.0 * PI * (2.0 * PI * z).cos();
    let d2u = |z: f64| -4.0 * PI * PI * (2.0 * PI * z).sin();
    let chi = |z: f64| 1.5 + 0.5 * (2.0 * PI * z).cos();
    let dchi = |z: f64| -PI * (2.0 * PI * z).sin();
    let cf = |z: f64| 0.3 + 0.2 * (2.0 * PI * z).sin();
    let dcf = |z: f64| 0.4 * PI * (2.0 * PI * z).cos();
    let g = |z: f64| 0.2 * (PI * z).cos();
    let dg = |z: f64| -0.2 * PI * (PI * z).sin();

    let mut out = Vec::with_capacity(sizes.len());
    for &nz in sizes {
        let cloud = PointCloud::build(1, [0.0, 0.0, 1.0], [1, 1, nz])?;
        let domains = crate::grid::influence_domains(&cloud, n_s)?;
        let zs: Vec<f64> = cloud.points.iter().map(|p| p[2]).collect();
        let chi_nodes: Vec<f64> = zs.iter().map(|&z| chi(z)).collect();
        let mut worst = 0.0f64;
        for node in 1..nz - 1 {
            let op = InteriorNode::build(&cloud, &domains[node], shape, &chi_nodes, 1e13)?;
            let (lo, hi) = op.z_neighbors();
            let mut row = vec![0.0; op.members.len()];
            op.row_into([cf(zs[lo]), cf(zs[node]), cf(zs[hi])], &mut row);
            let mut value = op.gravity_term([g(zs[lo]), g(zs[node]), g(zs[hi])]);
            for (w, &m) in row.iter().zip(&op.members) {
                value += w * u(zs[m]);
            }
            let z = zs[node];
            let exact = dchi(z) * du(z) + chi(z) * d2u(z) + dcf(z) * u(z) + cf(z) * du(z) + dg(z);
            worst = worst.max((value - exact).abs());
        }
        out.push((cloud.spacing[2], worst));
    }
    Ok(out)
}
