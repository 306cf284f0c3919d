//! Exact nearest-neighbour index, least-squares rigid alignment and
//! point-to-point ICP with size-normalized fitness.

use nalgebra::Matrix3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{RotationMatrix, Vec3};
use crate::voxel::bounds_of;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Static kd-tree over a point set. Queries are exact; among equidistant
/// points the lowest input index wins.
#[derive(Debug, Clone)]
pub struct NnIndex {
    points: Vec<Vec3>,
    order: Vec<usize>,
    nodes: Vec<Node>,
    root: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub point: Vec3,
    pub distance: f64,
}

impl NnIndex {
    pub fn build(points: &[Vec3]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("nearest-neighbour index needs at least one point"));
        }
        let mut index = Self {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
            root: 0,
        };
        index.root = index.build_node(0, points.len());
        Ok(index)
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return self.nodes.len() - 1;
        }
        let (lo, hi) = bounds_of(self.order[start..end].iter().map(|&i| self.points[i]));
        let axis = (hi - lo).imax();
        let mid = (start + end) / 2;
        let pts = &self.points;
        self.order[start..end]
            .select_nth_unstable_by(mid - start, |&a, &b| pts[a][axis].total_cmp(&pts[b][axis]).then(a.cmp(&b)));
        let value = self.points[self.order[mid]][axis];
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes.push(Node::Split { axis, value, left, right });
        self.nodes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn nearest(&self, q: &Vec3) -> Neighbor {
        let mut best = (f64::INFINITY, usize::MAX);
        self.search(self.root, q, &mut best);
        Neighbor {
            index: best.1,
            point: self.points[best.1],
            distance: best.0.sqrt(),
        }
    }

    fn search(&self, node: usize, q: &Vec3, best: &mut (f64, usize)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d2 = (self.points[i] - q).norm_squared();
                    if d2 < best.0 || (d2 == best.0 && i < best.1) {
                        *best = (d2, i);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                if diff * diff <= best.0 {
                    self.search(far, q, best);
                }
            }
        }
    }
}

pub fn nn_index(points: &[Vec3]) -> Result<NnIndex> {
    NnIndex::build(points)
}

/// Nearest indexed point and its distance.
pub fn nn_query(index: &NnIndex, q: &Vec3) -> (Vec3, f64) {
    let n = index.nearest(q);
    (n.point, n.distance)
}

/// p -> R p + t
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: RotationMatrix,
    pub translation: Vec3,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: RotationMatrix::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation.apply(p) + self.translation
    }

    /// `self` after `other`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation.compose(&other.rotation),
            translation: self.apply(&other.translation),
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -rt.apply(&self.translation),
        }
    }

    pub fn rotation_angle(&self) -> f64 {
        ((self.rotation.matrix().trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }
}

/// Least-squares rigid transform taking `src[i]` onto `dst[j]` for each pair
/// `(i, j)`, with the reflection case excluded.
pub fn kabsch_align(src: &[Vec3], dst: &[Vec3], pairs: &[(usize, usize)]) -> Result<RigidTransform> {
    if pairs.len() < 3 {
        return Err(Error::Degenerate(format!("{} correspondences, need at least 3", pairs.len())));
    }
    for &(i, j) in pairs {
        if i >= src.len() || j >= dst.len() {
            return Err(Error::arg(format!("pair ({i}, {j}) out of range")));
        }
    }
    let n = pairs.len() as f64;
    let sc = pairs.iter().map(|&(i, _)| src[i]).sum::<Vec3>() / n;
    let dc = pairs.iter().map(|&(_, j)| dst[j]).sum::<Vec3>() / n;
    let mut h = Matrix3::zeros();
    for &(i, j) in pairs {
        h += (src[i] - sc) * (dst[j] - dc).transpose();
    }
    let svd = h.svd(true, true);
    let mut sv = svd.singular_values;
    sv.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    if !(sv[0] > 0.0) || sv[1] <= 1e-12 * sv[0] {
        return Err(Error::Degenerate("correspondences are collinear or coincident".into()));
    }
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * u.transpose();
    let rotation = RotationMatrix::from_matrix(r).map_err(|e| Error::Degenerate(format!("alignment rotation: {e}")))?;
    Ok(RigidTransform {
        rotation,
        translation: dc - rotation.apply(&sc),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcpConfig {
    pub max_iter: usize,
    /// Stop once an iteration improves fitness by less than this fraction.
    pub rel_tol: f64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            max_iter: 50,
            rel_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    pub transform: RigidTransform,
    /// Mean squared nearest-neighbour distance over `size_norm^2`.
    pub fitness: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Fitness of the initial alignment followed by every accepted iteration.
    pub history: Vec<f64>,
}

/// `n` points drawn uniformly by area from the surface of the axis-aligned
/// box with the given half extents, centered at the origin.
pub fn sample_box_surface(half: &Vec3, n: usize, rng: &mut impl Rng) -> Vec<Vec3> {
    let areas = [half.y * half.z, half.x * half.z, half.x * half.y];
    let total: f64 = areas.iter().sum();
    (0..n)
        .map(|_| {
            let mut u = rng.random_range(0.0..total);
            let mut axis = 0;
            while axis < 2 && u >= areas[axis] {
                u -= areas[axis];
                axis += 1;
            }
            let mut p = Vec3::from_fn(|_, _| rng.random_range(-1.0..=1.0));
            p[axis] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            p.component_mul(half)
        })
        .collect()
}

/// Object size used to normalize fitness: the diagonal of the bounding box.
pub fn bbox_diagonal(points: &[Vec3]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::Empty("bounding box of an empty cloud"));
    }
    let (lo, hi) = bounds_of(points.iter().copied());
    Ok((hi - lo).norm())
}

fn mean_sq_residual(src: &[Vec3], t: &RigidTransform, index: &NnIndex) -> (f64, Vec<(usize, usize)>) {
    let mut sum = 0.0;
    let mut pairs = Vec::with_capacity(src.len());
    for (i, p) in src.iter().enumerate() {
        let nb = index.nearest(&t.apply(p));
        sum += nb.distance * nb.distance;
        pairs.push((i, nb.index));
    }
    (sum / src.len() as f64, pairs)
}

/// Point-to-point ICP from the identity. Each iteration re-solves the full
/// transform from `src` to its current nearest neighbours in `dst`.
pub fn icp(src: &[Vec3], dst: &[Vec3], cfg: &IcpConfig, size_norm: f64) -> Result<IcpResult> {
    if src.is_empty() {
        return Err(Error::Empty("ICP source cloud"));
    }
    if !(size_norm.is_finite() && size_norm > 0.0) {
        return Err(Error::arg(format!("size_norm must be positive, got {size_norm}")));
    }
    let index = NnIndex::build(dst)?;
    let norm = size_norm * size_norm;
    let mut transform = RigidTransform::identity();
    let (mut mse, mut pairs) = mean_sq_residual(src, &transform, &index);
    let mut history = vec![mse / norm];
    let mut iterations = 0;
    let mut converged = mse == 0.0;
    while !converged && iterations < cfg.max_iter {
        let candidate = match kabsch_align(src, index.points(), &pairs) {
            Ok(t) => t,
            Err(_) => {
                return Ok(IcpResult {
                    transform,
                    fitness: mse / norm,
                    iterations,
                    converged: false,
                    history,
                })
            }
        };
        iterations += 1;
        let (next, next_pairs) = mean_sq_residual(src, &candidate, &index);
        if next > mse {
            // round-off at the fixed point; keep the better estimate
            converged = true;
            break;
        }
        converged = mse - next <= cfg.rel_tol * mse || next == 0.0;
        transform = candidate;
        mse = next;
        pairs = next_pairs;
        history.push(mse / norm);
    }
    Ok(IcpResult {
        transform,
        fitness: mse / norm,
        iterations,
        converged,
        history,
    })
}
