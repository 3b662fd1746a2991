//! Collocation point cloud on a uniform tensor grid, boundary tagging,
//! and nearest-neighbour machinery for building influence domains.
//!
//! The vertical coordinate is always `z` (axis 2) and points upward.
//! 1D problems use axis `z` only, 2D problems axes `x, z`, 3D all three.
//! Node indices are laid out x-fastest: `i = ix + nx * (iy + ny * iz)`.

use crate::error::{Error, Result};

/// Classification of a collocation node. Corner and edge nodes take the
/// highest-priority tag that applies: top, then bottom, then x-lateral,
/// then y-lateral.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeTag {
    Interior,
    /// z = 0 face.
    Bottom,
    /// z = L face.
    Top,
    /// x = 0 or x = l1 face (2D/3D).
    LateralX,
    /// y = 0 or y = l2 face (3D).
    LateralY,
}

/// Uniform collocation grid over a box domain.
#[derive(Clone, Debug)]
pub struct PointCloud {
    pub dims: usize,
    /// Node counts per axis; inactive axes hold 1.
    pub counts: [usize; 3],
    /// Box extents per axis; inactive axes hold 0.
    pub extents: [f64; 3],
    /// Node spacing per axis; inactive axes hold 0.
    pub spacing: [f64; 3],
    pub points: Vec<[f64; 3]>,
    pub tags: Vec<NodeTag>,
}

impl PointCloud {
    /// Builds the tensor grid. Active axes need at least 3 nodes so that
    /// interior nodes exist, and positive extents.
    pub fn build(dims: usize, extents: [f64; 3], counts: [usize; 3]) -> Result<Self> {
        if !(1..=3).contains(&dims) {
            return Err(Error::config(format!("dims must be 1, 2 or 3, got {dims}")));
        }
        let active = active_axes(dims);
        let mut counts_full = [1usize; 3];
        let mut extents_full = [0f64; 3];
        let mut spacing = [0f64; 3];
        for &axis in active {
            let n = counts[axis];
            let ext = extents[axis];
            if n < 3 {
                return Err(Error::config(format!(
                    "axis {axis} needs at least 3 nodes, got {n}"
                )));
            }
            if !(ext > 0.0 && ext.is_finite()) {
                return Err(Error::config(format!(
                    "axis {axis} needs a positive extent, got {ext}"
                )));
            }
            counts_full[axis] = n;
            extents_full[axis] = ext;
            spacing[axis] = ext / (n - 1) as f64;
        }

        let [nx, ny, nz] = counts_full;
        let n_total = nx * ny * nz;
        let mut points = Vec::with_capacity(n_total);
        let mut tags = Vec::with_capacity(n_total);
        for iz in 0..nz {
            for iy in 0..ny {
                for ix in 0..nx {
                    points.push([
                        ix as f64 * spacing[0],
                        iy as f64 * spacing[1],
                        iz as f64 * spacing[2],
                    ]);
                    let tag = if iz == nz - 1 {
                        NodeTag::Top
                    } else if iz == 0 {
                        NodeTag::Bottom
                    } else if dims >= 2 && (ix == 0 || ix == nx - 1) {
                        NodeTag::LateralX
                    } else if dims == 3 && (iy == 0 || iy == ny - 1) {
                        NodeTag::LateralY
                    } else {
                        NodeTag::Interior
                    };
                    tags.push(tag);
                }
            }
        }

        Ok(PointCloud {
            dims,
            counts: counts_full,
            extents: extents_full,
            spacing,
            points,
            tags,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Axes that carry more than one node.
    pub fn active_axes(&self) -> &'static [usize] {
        active_axes(self.dims)
    }

    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        ix + self.counts[0] * (iy + self.counts[1] * iz)
    }

    /// Grid coordinates of a node.
    pub fn grid_coords(&self, node: usize) -> [usize; 3] {
        let nx = self.counts[0];
        let ny = self.counts[1];
        [node % nx, (node / nx) % ny, node / (nx * ny)]
    }

    /// Immediate lattice neighbours `(lower, upper)` of a node along one
    /// axis. Errors when the node touches the grid boundary on that axis,
    /// so only interior nodes can be stencil centers.
    pub fn axis_neighbors(&self, node: usize, axis: usize) -> Result<(usize, usize)> {
        let coords = self.grid_coords(node);
        let n = self.counts[axis];
        if n < 2 {
            return Err(Error::config(format!("axis {axis} is inactive")));
        }
        let i = coords[axis];
        if i == 0 || i == n - 1 {
            return Err(Error::config(format!(
                "node {node} has no neighbour pair on axis {axis}"
            )));
        }
        let stride = match axis {
            0 => 1,
            1 => self.counts[0],
            _ => self.counts[0] * self.counts[1],
        };
        Ok((node - stride, node + stride))
    }
}

fn active_axes(dims: usize) -> &'static [usize] {
    match dims {
        1 => &[2],
        2 => &[0, 2],
        _ => &[0, 1, 2],
    }
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Static k-d tree over a point set. Queries return the `k` nearest
/// points ordered by `(distance, index)`, so ties on a regular lattice
/// resolve deterministically to the lower index.
pub struct KdTree<'a> {
    points: &'a [[f64; 3]],
    nodes: Vec<KdNode>,
    root: usize,
}

struct KdNode {
    point: usize,
    axis: usize,
    left: usize,
    right: usize,
}

const NIL: usize = usize::MAX;

impl<'a> KdTree<'a> {
    pub fn build(points: &'a [[f64; 3]]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::with_capacity(points.len());
        let root = Self::build_rec(points, &mut order[..], &mut nodes);
        KdTree { points, nodes, root }
    }

    fn build_rec(points: &[[f64; 3]], order: &mut [usize], nodes: &mut Vec<KdNode>) -> usize {
        if order.is_empty() {
            return NIL;
        }
        // Split along the axis with the widest spread for balanced cells.
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in order.iter() {
            for d in 0..3 {
                lo[d] = lo[d].min(points[i][d]);
                hi[d] = hi[d].max(points[i][d]);
            }
        }
        let mut axis = 0;
        for d in 1..3 {
            if hi[d] - lo[d] > hi[axis] - lo[axis] {
                axis = d;
            }
        }
        let mid = order.len() / 2;
        order.select_nth_unstable_by(mid, |&a, &b| {
            points[a][axis]
                .total_cmp(&points[b][axis])
                .then(a.cmp(&b))
        });
        let point = order[mid];
        let this = nodes.len();
        nodes.push(KdNode { point, axis, left: NIL, right: NIL });
        let (left_half, rest) = order.split_at_mut(mid);
        let right_half = &mut rest[1..];
        let left = Self::build_rec(points, left_half, nodes);
        let right = Self::build_rec(points, right_half, nodes);
        nodes[this].left = left;
        nodes[this].right = right;
        this
    }

    /// The `k` nearest points to `query`, sorted ascending by
    /// `(euclidean distance, index)`.
    pub fn nearest(&self, query: &[f64; 3], k: usize) -> Vec<(f64, usize)> {
        let k = k.min(self.points.len());
        if k == 0 {
            return Vec::new();
        }
        // Max-heap of the current best (distance^2, index) candidates.
        let mut heap: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        self.search(self.root, query, k, &mut heap);
        heap.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        heap.into_iter().map(|(d2, i)| (d2.sqrt(), i)).collect()
    }

    fn search(&self, node: usize, query: &[f64; 3], k: usize, heap: &mut Vec<(f64, usize)>) {
        if node == NIL {
            return;
        }
        let n = &self.nodes[node];
        let d2 = dist2(query, &self.points[n.point]);
        Self::offer(heap, k, (d2, n.point));

        let delta = query[n.axis] - self.points[n.point][n.axis];
        let (near, far) = if delta < 0.0 { (n.left, n.right) } else { (n.right, n.left) };
        self.search(near, query, k, heap);
        // Visit the far side unless the splitting plane is strictly farther
        // than the worst kept candidate; equality must recurse so that
        // equidistant points can win on index.
        if heap.len() < k || delta * delta <= heap[0].0 {
            self.search(far, query, k, heap);
        }
    }

    fn offer(heap: &mut Vec<(f64, usize)>, k: usize, cand: (f64, usize)) {
        let worse = |a: &(f64, usize), b: &(f64, usize)| {
            a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)) == std::cmp::Ordering::Greater
        };
        if heap.len() < k {
            heap.push(cand);
            heap.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)));
        } else if worse(&heap[0], &cand) {
            heap[0] = cand;
            heap.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)));
        }
    }
}

/// Exhaustive reference for the k-d tree: identical ordering contract.
pub fn brute_force_nearest(points: &[[f64; 3]], query: &[f64; 3], k: usize) -> Vec<(f64, usize)> {
    let mut all: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| (dist2(query, p), i))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.truncate(k);
    all.into_iter().map(|(d2, i)| (d2.sqrt(), i)).collect()
}

/// The set of nodes whose kernel values shape the local interpolant of a
/// collocation node. The node itself is always the first member.
#[derive(Clone, Debug)]
pub struct InfluenceDomain {
    pub center: usize,
    pub members: Vec<usize>,
    pub distances: Vec<f64>,
}

/// Influence domains of every node: its `n_s` nearest neighbours
/// (including itself), ties broken by index.
pub fn influence_domains(cloud: &PointCloud, n_s: usize) -> Result<Vec<InfluenceDomain>> {
    if n_s < 1 || n_s > cloud.len() {
        return Err(Error::config(format!(
            "influence domain size {n_s} must lie in 1..={}",
            cloud.len()
        )));
    }
    let tree = KdTree::build(&cloud.points);
    let mut domains = Vec::with_capacity(cloud.len());
    for (center, point) in cloud.points.iter().enumerate() {
        let found = tree.nearest(point, n_s);
        debug_assert_eq!(found[0].1, center, "a node is its own nearest neighbour");
        let (distances, members) = found.into_iter().map(|(d, i)| (d, i)).unzip();
        domains.push(InfluenceDomain { center, members, distances });
    }
    Ok(domains)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn grid_layout_and_tags_1d() {
        let cloud = PointCloud::build(1, [0.0, 0.0, 1.0], [1, 1, 11]).unwrap();
        assert_eq!(cloud.len(), 11);
        assert_eq!(cloud.spacing[2], 0.1);
        assert_eq!(cloud.tags[0], NodeTag::Bottom);
        assert_eq!(cloud.tags[10], NodeTag::Top);
        assert!(cloud.tags[1..10].iter().all(|t| *t == NodeTag::Interior));
        assert_eq!(cloud.points[3][2], 0.30000000000000004);
        assert_eq!(cloud.axis_neighbors(5, 2).unwrap(), (4, 6));
        assert!(cloud.axis_neighbors(0, 2).is_err());
        assert!(cloud.axis_neighbors(10, 2).is_err());
    }

    #[test]
    fn corner_tags_follow_priority() {
        let cloud = PointCloud::build(2, [1.0, 0.0, 2.0], [4, 1, 5]).unwrap();
        // Top and bottom win over laterals at corners.
        assert_eq!(cloud.tags[cloud.index(0, 0, 0)], NodeTag::Bottom);
        assert_eq!(cloud.tags[cloud.index(3, 0, 0)], NodeTag::Bottom);
        assert_eq!(cloud.tags[cloud.index(0, 0, 4)], NodeTag::Top);
        assert_eq!(cloud.tags[cloud.index(0, 0, 2)], NodeTag::LateralX);
        assert_eq!(cloud.tags[cloud.index(1, 0, 2)], NodeTag::Interior);

        let c3 = PointCloud::build(3, [1.0, 1.0, 1.0], [3, 3, 3]).unwrap();
        assert_eq!(c3.tags[c3.index(0, 1, 1)], NodeTag::LateralX);
        assert_eq!(c3.tags[c3.index(1, 0, 1)], NodeTag::LateralY);
        assert_eq!(c3.tags[c3.index(0, 0, 1)], NodeTag::LateralX); // x beats y
        assert_eq!(c3.tags[c3.index(1, 1, 1)], NodeTag::Interior);
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(PointCloud::build(1, [0.0, 0.0, 1.0], [1, 1, 2]).is_err());
        assert!(PointCloud::build(1, [0.0, 0.0, 0.0], [1, 1, 5]).is_err());
        assert!(PointCloud::build(4, [1.0, 1.0, 1.0], [3, 3, 3]).is_err());
    }

    #[test]
    fn influence_domains_on_a_line() {
        let cloud = PointCloud::build(1, [0.0, 0.0, 1.0], [1, 1, 6]).unwrap();
        let domains = influence_domains(&cloud, 3).unwrap();
        // Interior node: itself plus both lattice neighbours (tie on
        // distance resolves to the lower index first).
        assert_eq!(domains[2].members, vec![2, 1, 3]);
        // Boundary node: one-sided chain.
        assert_eq!(domains[0].members, vec![0, 1, 2]);
        assert_eq!(domains[5].members, vec![5, 4, 3]);
        assert!((domains[2].distances[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn five_point_star_in_2d() {
        let cloud = PointCloud::build(2, [1.0, 0.0, 1.0], [5, 1, 5]).unwrap();
        let domains = influence_domains(&cloud, 5).unwrap();
        let center = cloud.index(2, 0, 2);
        let mut members = domains[center].members.clone();
        members.sort_unstable();
        let mut expected = vec![
            center,
            cloud.index(1, 0, 2),
            cloud.index(3, 0, 2),
            cloud.index(2, 0, 1),
            cloud.index(2, 0, 3),
        ];
        expected.sort_unstable();
        assert_eq!(members, expected);
    }

    #[test]
    fn kd_tree_matches_brute_force_on_random_clouds() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for case in 0..40 {
            let n = rng.random_range(2..=300);
            let dims = 1 + case % 3;
            let points: Vec<[f64; 3]> = (0..n)
                .map(|_| {
                    let mut p = [0.0; 3];
                    for &d in active_axes(dims) {
                        p[d] = rng.random_range(-1.0..1.0);
                    }
                    p
                })
                .collect();
            let tree = KdTree::build(&points);
            for _ in 0..20 {
                let mut q = [0.0; 3];
                for &d in active_axes(dims) {
                    q[d] = rng.random_range(-1.2..1.2);
                }
                let k = rng.random_range(1..=n.min(12));
                assert_eq!(tree.nearest(&q, k), brute_force_nearest(&points, &q, k));
            }
        }
    }

    #[test]
    fn kd_tree_breaks_lattice_ties_by_index() {
        let cloud = PointCloud::build(2, [1.0, 0.0, 1.0], [9, 1, 9]).unwrap();
        let tree = KdTree::build(&cloud.points);
        for node in 0..cloud.len() {
            assert_eq!(
                tree.nearest(&cloud.points[node], 9),
                brute_force_nearest(&cloud.points, &cloud.points[node], 9)
            );
        }
    }

    #[test]
    fn influence_domain_size_is_validated() {
        let cloud = PointCloud::build(1, [0.0, 0.0, 1.0], [1, 1, 4]).unwrap();
        assert!(influence_domains(&cloud, 0).is_err());
        assert!(influence_domains(&cloud, 5).is_err());
        assert!(influence_domains(&cloud, 4).is_ok());
    }
}
