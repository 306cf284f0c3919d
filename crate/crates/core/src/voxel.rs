//! Occupancy grids in the canonical object frame and the camera-frame
//! scene grid.
//!
//! Cells are stored densely with x varying fastest:
//! `index = i + nx * (j + ny * k)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Pose, Vec3};

pub const CANONICAL_DIM: usize = 32;
pub const CANONICAL_HALF_EXTENT: f64 = 0.5;
pub const SCENE_VOXEL_SIZE: f64 = 0.08;
pub const SCENE_DIMS: [usize; 3] = [64, 32, 64];
pub const DEFAULT_TAU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Canonical,
    Scene,
}

/// Axis-aligned box `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extent {
    pub min: Vec3,
    pub max: Vec3,
}

impl Extent {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self> {
        let ok = (0..3).all(|a| min[a].is_finite() && max[a].is_finite() && max[a] > min[a]);
        if !ok {
            return Err(Error::InvalidGrid(format!(
                "degenerate extent {:?}..{:?}",
                min.as_slice(),
                max.as_slice()
            )));
        }
        Ok(Self { min, max })
    }

    pub fn size(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }
}

/// Lattice geometry: frame, cell counts and the covered box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    frame: Frame,
    dims: [usize; 3],
    extent: Extent,
}

impl GridSpec {
    pub fn new(frame: Frame, dims: [usize; 3], extent: Extent) -> Result<Self> {
        if dims.iter().any(|&n| n == 0) {
            return Err(Error::InvalidGrid(format!("dims must be positive, got {dims:?}")));
        }
        match frame {
            Frame::Canonical => {
                let canonical = Self::canonical();
                if dims != canonical.dims || extent != canonical.extent {
                    return Err(Error::InvalidGrid(
                        "canonical grids are 32^3 over [-0.5, 0.5]^3".into(),
                    ));
                }
            }
            Frame::Scene => {
                let size = extent.size();
                for a in 0..3 {
                    let cell = size[a] / dims[a] as f64;
                    if (cell - SCENE_VOXEL_SIZE).abs() > 1e-9 {
                        return Err(Error::InvalidGrid(format!(
                            "scene cells must be {SCENE_VOXEL_SIZE} m, axis {a} has {cell}"
                        )));
                    }
                }
            }
        }
        Ok(Self { frame, dims, extent })
    }

    pub fn canonical() -> Self {
        let h = CANONICAL_HALF_EXTENT;
        Self {
            frame: Frame::Canonical,
            dims: [CANONICAL_DIM; 3],
            extent: Extent {
                min: Vec3::new(-h, -h, -h),
                max: Vec3::new(h, h, h),
            },
        }
    }

    /// Scene grid of 8 cm cells whose minimum corner is `min`.
    pub fn scene(dims: [usize; 3], min: Vec3) -> Result<Self> {
        let max = min + Vec3::new(dims[0] as f64, dims[1] as f64, dims[2] as f64) * SCENE_VOXEL_SIZE;
        Self::new(Frame::Scene, dims, Extent::new(min, max)?)
    }

    /// 64x32x64 cells over x in [-2.56, 2.56], y in [-1.28, 1.28],
    /// z in [0, 5.12].
    pub fn scene_default() -> Self {
        Self::scene(SCENE_DIMS, Vec3::new(-2.56, -1.28, 0.0)).expect("default scene grid is valid")
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }
    pub fn extent(&self) -> &Extent {
        &self.extent
    }

    pub fn cell_count(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn cell_size(&self) -> Vec3 {
        let s = self.extent.size();
        Vec3::new(
            s.x / self.dims[0] as f64,
            s.y / self.dims[1] as f64,
            s.z / self.dims[2] as f64,
        )
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn coords(&self, index: usize) -> [usize; 3] {
        let i = index % self.dims[0];
        let j = (index / self.dims[0]) % self.dims[1];
        let k = index / (self.dims[0] * self.dims[1]);
        [i, j, k]
    }

    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        let c = self.cell_size();
        self.extent.min + Vec3::new((i as f64 + 0.5) * c.x, (j as f64 + 0.5) * c.y, (k as f64 + 0.5) * c.z)
    }

    /// Cell containing `p`; cells are half-open `[lo, hi)`, so points on the
    /// maximum faces of the extent are outside.
    pub fn cell_of(&self, p: &Vec3) -> Option<[usize; 3]> {
        let c = self.cell_size();
        let mut out = [0usize; 3];
        for a in 0..3 {
            let f = ((p[a] - self.extent.min[a]) / c[a]).floor();
            if !(f >= 0.0 && f < self.dims[a] as f64) {
                return None;
            }
            out[a] = f as usize;
        }
        Some(out)
    }

    /// Inclusive index range of cells whose centers may fall inside `[lo, hi]`.
    fn cell_range(&self, lo: &Vec3, hi: &Vec3) -> Option<[(usize, usize); 3]> {
        let c = self.cell_size();
        let mut out = [(0usize, 0usize); 3];
        for a in 0..3 {
            let first = ((lo[a] - self.extent.min[a]) / c[a] - 0.5).ceil().max(0.0);
            let last = ((hi[a] - self.extent.min[a]) / c[a] - 0.5).floor().min(self.dims[a] as f64 - 1.0);
            if !(first <= last) {
                return None;
            }
            out[a] = (first as usize, last as usize);
        }
        Some(out)
    }
}

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::arg(format!("binarization threshold must lie in (0, 1), got {tau}")))
    }
}

/// Dense occupancy-probability lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    spec: GridSpec,
    data: Vec<f32>,
}

impl VoxelGrid {
    pub fn new(spec: GridSpec, data: Vec<f32>) -> Result<Self> {
        if data.len() != spec.cell_count() {
            return Err(Error::DimensionMismatch {
                expected: spec.cell_count(),
                actual: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidGrid(format!(
                "occupancy {} at cell {pos} outside [0, 1]",
                data[pos]
            )));
        }
        Ok(Self { spec, data })
    }

    pub fn zeros(spec: GridSpec) -> Self {
        Self {
            data: vec![0.0; spec.cell_count()],
            spec,
        }
    }

    pub fn from_fn(spec: GridSpec, mut f: impl FnMut(usize, usize, usize) -> f32) -> Result<Self> {
        let [nx, ny, nz] = spec.dims;
        let mut data = Vec::with_capacity(spec.cell_count());
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    data.push(f(i, j, k));
                }
            }
        }
        Self::new(spec, data)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }
    pub fn dims(&self) -> [usize; 3] {
        self.spec.dims
    }
    pub fn frame(&self) -> Frame {
        self.spec.frame
    }
    pub fn data(&self) -> &[f32] {
        &self.data
    }
    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f32 {
        self.data[self.spec.index(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f32) -> Result<()> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::InvalidGrid(format!("occupancy {value} outside [0, 1]")));
        }
        let idx = self.spec.index(i, j, k);
        self.data[idx] = value;
        Ok(())
    }

    pub fn is_occupied(&self, index: usize, tau: f64) -> bool {
        self.data[index] as f64 >= tau
    }

    pub fn occupied_count(&self, tau: f64) -> usize {
        self.data.iter().filter(|&&v| v as f64 >= tau).count()
    }

    /// Cell-wise maximum with another grid on the same lattice.
    pub fn max_merge(&mut self, other: &VoxelGrid) -> Result<()> {
        ensure_same_lattice(self, other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = a.max(*b);
        }
        Ok(())
    }
}

fn ensure_same_lattice(a: &VoxelGrid, b: &VoxelGrid) -> Result<()> {
    if a.spec != b.spec {
        return Err(Error::GridMismatch(format!(
            "{:?} {:?} vs {:?} {:?}",
            a.spec.frame, a.spec.dims, b.spec.frame, b.spec.dims
        )));
    }
    Ok(())
}

/// IoU of the two grids binarized at `occupancy >= tau`; 1 when both are empty.
pub fn voxel_iou(a: &VoxelGrid, b: &VoxelGrid, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    ensure_same_lattice(a, b)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.data.iter().zip(&b.data) {
        let (x, y) = (x as f64 >= tau, y as f64 >= tau);
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Centers of every cell with occupancy at or above `tau`, in the grid's frame.
pub fn voxel_centers(g: &VoxelGrid, tau: f64) -> Result<Vec<Vec3>> {
    check_tau(tau)?;
    Ok(g.data
        .iter()
        .enumerate()
        .filter(|(_, &v)| v as f64 >= tau)
        .map(|(idx, _)| {
            let [i, j, k] = g.spec.coords(idx);
            g.spec.cell_center(i, j, k)
        })
        .collect())
}

/// Axis-aligned box primitive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CuboidSpec", into = "CuboidSpec")]
pub struct Cuboid {
    center: Vec3,
    half_extents: Vec3,
}

#[derive(Serialize, Deserialize)]
struct CuboidSpec {
    center: [f64; 3],
    half_extents: [f64; 3],
}

impl TryFrom<CuboidSpec> for Cuboid {
    type Error = Error;
    fn try_from(s: CuboidSpec) -> Result<Self> {
        Cuboid::new(Vec3::from(s.center), Vec3::from(s.half_extents))
    }
}

impl From<Cuboid> for CuboidSpec {
    fn from(c: Cuboid) -> Self {
        CuboidSpec {
            center: c.center.into(),
            half_extents: c.half_extents.into(),
        }
    }
}

impl Cuboid {
    pub fn new(center: Vec3, half_extents: Vec3) -> Result<Self> {
        if !center.iter().all(|c| c.is_finite()) || !half_extents.iter().all(|h| h.is_finite() && *h > 0.0) {
            return Err(Error::arg(format!(
                "cuboid needs finite center and positive half extents, got {:?} / {:?}",
                center.as_slice(),
                half_extents.as_slice()
            )));
        }
        Ok(Self { center, half_extents })
    }

    pub fn from_bounds(min: Vec3, max: Vec3) -> Result<Self> {
        Self::new((min + max) * 0.5, (max - min) * 0.5)
    }

    pub fn center(&self) -> &Vec3 {
        &self.center
    }
    pub fn half_extents(&self) -> &Vec3 {
        &self.half_extents
    }
    pub fn min(&self) -> Vec3 {
        self.center - self.half_extents
    }
    pub fn max(&self) -> Vec3 {
        self.center + self.half_extents
    }

    /// Closed-box membership.
    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|a| (p[a] - self.center[a]).abs() <= self.half_extents[a])
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let (lo, hi) = (self.min(), self.max());
        std::array::from_fn(|n| {
            Vec3::new(
                if n & 1 == 0 { lo.x } else { hi.x },
                if n & 2 == 0 { lo.y } else { hi.y },
                if n & 4 == 0 { lo.z } else { hi.z },
            )
        })
    }
}

/// Center-inside voxelization: a cell is 1 iff its center lies in the union.
pub fn cuboid_voxelize(shapes: &[Cuboid], spec: &GridSpec) -> VoxelGrid {
    let mut grid = VoxelGrid::zeros(*spec);
    for shape in shapes {
        let Some(range) = spec.cell_range(&shape.min(), &shape.max()) else {
            continue;
        };
        for k in range[2].0..=range[2].1 {
            for j in range[1].0..=range[1].1 {
                for i in range[0].0..=range[0].1 {
                    if shape.contains(&spec.cell_center(i, j, k)) {
                        let idx = spec.index(i, j, k);
                        grid.data[idx] = 1.0;
                    }
                }
            }
        }
    }
    grid
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    #[default]
    Trilinear,
    Nearest,
}

/// Samples a canonical grid at a canonical-frame point. Points outside the
/// canonical cube read as empty; inside, indices clamp to the edge cells.
pub fn sample_canonical(obj: &VoxelGrid, p: &Vec3, sampling: Sampling) -> f64 {
    let spec = obj.spec();
    if !spec.extent().contains(p) {
        return 0.0;
    }
    let cell = spec.cell_size();
    let dims = spec.dims();
    match sampling {
        Sampling::Nearest => {
            let idx: [usize; 3] = std::array::from_fn(|a| {
                let f = ((p[a] - spec.extent().min[a]) / cell[a]).floor();
                (f.max(0.0) as usize).min(dims[a] - 1)
            });
            obj.get(idx[0], idx[1], idx[2]) as f64
        }
        Sampling::Trilinear => {
            let mut lo = [0usize; 3];
            let mut frac = [0f64; 3];
            for a in 0..3 {
                let n = dims[a];
                let f = ((p[a] - spec.extent().min[a]) / cell[a] - 0.5).clamp(0.0, (n - 1) as f64);
                let i0 = (f.floor() as usize).min(n.saturating_sub(2));
                lo[a] = i0;
                frac[a] = if n > 1 { f - i0 as f64 } else { 0.0 };
            }
            let mut acc = 0.0;
            for corner in 0..8 {
                let mut w = 1.0;
                let mut idx = [0usize; 3];
                for a in 0..3 {
                    let up = corner >> a & 1 == 1;
                    if up && dims[a] == 1 {
                        w = 0.0;
                        break;
                    }
                    idx[a] = lo[a] + up as usize;
                    w *= if up { frac[a] } else { 1.0 - frac[a] };
                }
                if w != 0.0 {
                    acc += w * obj.get(idx[0], idx[1], idx[2]) as f64;
                }
            }
            acc
        }
    }
}

/// World-space bounds of a posed canonical unit cube.
pub fn posed_unit_cube_bounds(pose: &Pose) -> (Vec3, Vec3) {
    let h = CANONICAL_HALF_EXTENT;
    let unit = Cuboid::new(Vec3::zeros(), Vec3::new(h, h, h)).expect("unit cube");
    bounds_of(unit.corners().iter().map(|c| pose.apply(c)))
}

pub(crate) fn bounds_of(points: impl Iterator<Item = Vec3>) -> (Vec3, Vec3) {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(&p);
        hi = hi.sup(&p);
    }
    (lo, hi)
}

/// Visits every scene cell whose center may lie in `[lo, hi]`, in parallel
/// over z-slabs, setting the cell to 1 when `inside(center)` holds.
fn fill_scene_cells(
    spec: &GridSpec,
    lo: &Vec3,
    hi: &Vec3,
    inside: impl Fn(&Vec3) -> bool + Sync,
) -> VoxelGrid {
    let mut grid = VoxelGrid::zeros(*spec);
    let Some(range) = spec.cell_range(lo, hi) else {
        return grid;
    };
    let [nx, ny, _] = spec.dims();
    grid.data
        .par_chunks_mut(nx * ny)
        .enumerate()
        .filter(|(k, _)| *k >= range[2].0 && *k <= range[2].1)
        .for_each(|(k, slab)| {
            for j in range[1].0..=range[1].1 {
                for i in range[0].0..=range[0].1 {
                    if inside(&spec.cell_center(i, j, k)) {
                        slab[i + nx * j] = 1.0;
                    }
                }
            }
        });
    grid
}

/// Places a canonical object grid into a scene grid. Each scene cell center
/// is mapped through the inverse pose; the canonical occupancy sampled there
/// decides the cell (occupied iff sample >= tau).
pub fn resample_to_scene(
    obj: &VoxelGrid,
    pose: &Pose,
    scene: &GridSpec,
    tau: f64,
    sampling: Sampling,
) -> Result<VoxelGrid> {
    check_tau(tau)?;
    if obj.frame() != Frame::Canonical {
        return Err(Error::GridMismatch("resample_to_scene expects a canonical object grid".into()));
    }
    if scene.frame() != Frame::Scene {
        return Err(Error::GridMismatch("resample_to_scene targets a scene grid".into()));
    }
    // Interpolated samples never exceed the largest cell value.
    if obj.occupied_count(tau) == 0 {
        return Ok(VoxelGrid::zeros(*scene));
    }
    let affine = pose.affine();
    let (lo, hi) = posed_unit_cube_bounds(pose);
    Ok(fill_scene_cells(scene, &lo, &hi, |c| {
        sample_canonical(obj, &affine.inverse(c), sampling) >= tau
    }))
}

/// Analytic counterpart of [`resample_to_scene`] for objects described by
/// canonical-frame cuboids.
pub fn voxelize_posed_cuboids(shapes: &[Cuboid], pose: &Pose, scene: &GridSpec) -> VoxelGrid {
    let affine = pose.affine();
    let corners = shapes.iter().flat_map(|s| s.corners()).map(|c| affine.forward(&c));
    let (lo, hi) = bounds_of(corners);
    if shapes.is_empty() {
        return VoxelGrid::zeros(*scene);
    }
    fill_scene_cells(scene, &lo, &hi, |c| {
        let p = affine.inverse(c);
        shapes.iter().any(|s| s.contains(&p))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::UnitQuaternion;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_scene(dims: [usize; 3]) -> GridSpec {
        GridSpec::scene(dims, Vec3::zeros()).unwrap()
    }

    fn brute_iou(a: &VoxelGrid, b: &VoxelGrid, tau: f64) -> f64 {
        let [nx, ny, nz] = a.dims();
        let (mut i_count, mut u_count) = (0, 0);
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let x = a.get(i, j, k) as f64 >= tau;
                    let y = b.get(i, j, k) as f64 >= tau;
                    if x && y {
                        i_count += 1;
                    }
                    if x || y {
                        u_count += 1;
                    }
                }
            }
        }
        if u_count == 0 {
            1.0
        } else {
            i_count as f64 / u_count as f64
        }
    }

    #[test]
    fn iou_examples() {
        let spec = small_scene([4, 3, 2]);
        let mut a = VoxelGrid::zeros(spec);
        let mut b = VoxelGrid::zeros(spec);
        assert_eq!(voxel_iou(&a, &b, 0.5).unwrap(), 1.0);
        a.set(0, 0, 0, 1.0).unwrap();
        b.set(1, 0, 0, 1.0).unwrap();
        assert_eq!(voxel_iou(&a, &b, 0.5).unwrap(), 0.0);
        assert_eq!(voxel_iou(&a, &a, 0.5).unwrap(), 1.0);
        // A = {(0,0,0), (2,1,0)}, B = {(0,0,0), (3,2,1), (1,1,1)}
        a.set(2, 1, 0, 1.0).unwrap();
        b.set(1, 0, 0, 0.0).unwrap();
        b.set(0, 0, 0, 0.9).unwrap();
        b.set(3, 2, 1, 1.0).unwrap();
        b.set(1, 1, 1, 0.6).unwrap();
        assert_eq!(brute_iou(&a, &b, 0.5), 0.25);
        assert_eq!(voxel_iou(&a, &b, 0.5).unwrap(), 0.25);
    }

    #[test]
    fn iou_rejects_mismatch_and_bad_tau() {
        let a = VoxelGrid::zeros(small_scene([2, 2, 2]));
        let b = VoxelGrid::zeros(small_scene([2, 2, 3]));
        assert!(matches!(voxel_iou(&a, &b, 0.5), Err(Error::GridMismatch(_))));
        assert!(voxel_iou(&a, &a, 0.0).is_err());
        assert!(voxel_iou(&a, &a, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn iou_matches_enumeration_and_is_symmetric(
            seed in any::<u64>(), nx in 1usize..5, ny in 1usize..5, nz in 1usize..5, tau in 0.05f64..0.95
        ) {
            let spec = small_scene([nx, ny, nz]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = VoxelGrid::from_fn(spec, |_, _, _| rng.random::<f32>()).unwrap();
            let b = VoxelGrid::from_fn(spec, |_, _, _| rng.random::<f32>()).unwrap();
            let iou = voxel_iou(&a, &b, tau).unwrap();
            prop_assert_eq!(iou, brute_iou(&a, &b, tau));
            prop_assert_eq!(iou, voxel_iou(&b, &a, tau).unwrap());
        }
    }

    #[test]
    fn voxel_center_examples() {
        let mut g = VoxelGrid::zeros(GridSpec::canonical());
        assert!(voxel_centers(&g, 0.5).unwrap().is_empty());
        g.set(0, 0, 0, 1.0).unwrap();
        let c = voxel_centers(&g, 0.5).unwrap();
        let e = -0.5 + 1.0 / 64.0;
        assert_eq!(c, vec![Vec3::new(e, e, e)]);

        let mut s = VoxelGrid::zeros(GridSpec::scene_default());
        s.set(0, 0, 0, 1.0).unwrap();
        let c = voxel_centers(&s, 0.5).unwrap();
        let expect = Vec3::new(-2.56, -1.28, 0.0) + Vec3::repeat(0.04);
        assert!((c[0] - expect).norm() < 1e-12);
    }

    #[test]
    fn spec_validation() {
        let ext = Extent::new(Vec3::repeat(-1.0), Vec3::repeat(1.0)).unwrap();
        assert!(GridSpec::new(Frame::Canonical, [32; 3], ext).is_err());
        assert!(GridSpec::new(Frame::Scene, [25, 25, 25], ext).is_ok());
        assert!(GridSpec::new(Frame::Scene, [10, 25, 25], ext).is_err());
        assert!(Extent::new(Vec3::zeros(), Vec3::new(1.0, 0.0, 1.0)).is_err());
        let d = GridSpec::scene_default();
        assert!((d.extent().max - Vec3::new(2.56, 1.28, 5.12)).norm() < 1e-12);
        assert!(VoxelGrid::new(d, vec![0.0; 3]).is_err());
        assert!(VoxelGrid::new(small_scene([1, 1, 1]), vec![1.5]).is_err());
    }

    #[test]
    fn cuboid_voxelize_examples() {
        let spec = GridSpec::canonical();
        let whole = Cuboid::new(Vec3::zeros(), Vec3::repeat(0.5)).unwrap();
        assert_eq!(cuboid_voxelize(&[whole], &spec).occupied_count(0.5), 32 * 32 * 32);
        let octant = Cuboid::from_bounds(Vec3::repeat(-0.5), Vec3::zeros()).unwrap();
        assert_eq!(cuboid_voxelize(&[octant], &spec).occupied_count(0.5), 4096);
        assert_eq!(cuboid_voxelize(&[], &spec).occupied_count(0.5), 0);
    }

    #[test]
    fn voxelize_count_monotone_under_growth() {
        let spec = GridSpec::canonical();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let c = Vec3::new(rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4));
            let h = Vec3::new(rng.random_range(0.01..0.3), rng.random_range(0.01..0.3), rng.random_range(0.01..0.3));
            let mut prev = 0;
            for g in 0..5 {
                let grown = Cuboid::new(c, h * (1.0 + 0.2 * g as f64)).unwrap();
                let n = cuboid_voxelize(&[grown], &spec).occupied_count(0.5);
                assert!(n >= prev);
                prev = n;
            }
        }
    }

    fn full_cube() -> VoxelGrid {
        cuboid_voxelize(&[Cuboid::new(Vec3::zeros(), Vec3::repeat(0.5)).unwrap()], &GridSpec::canonical())
    }

    #[test]
    fn resample_unit_cube_at_scene_center() {
        let scene = GridSpec::scene_default();
        let pose = Pose::new(Vec3::repeat(1.0), UnitQuaternion::IDENTITY, Vec3::new(0.0, 0.0, 2.56)).unwrap();
        let out = resample_to_scene(&full_cube(), &pose, &scene, 0.5, Sampling::Trilinear).unwrap();
        // Centers inside a 1 m cube: 1.0 / 0.08 = 12.5 -> 12 or 13 cells per axis.
        let occupied = voxel_centers(&out, 0.5).unwrap();
        let (lo, hi) = bounds_of(occupied.iter().copied());
        for a in 0..3 {
            let span = hi[a] - lo[a] + SCENE_VOXEL_SIZE;
            assert!((span - 1.0).abs() <= SCENE_VOXEL_SIZE + 1e-9, "axis {a} span {span}");
        }
        assert!(occupied.iter().all(|p| (p - pose.translation()).amax() <= 0.5));
        let oracle = voxelize_posed_cuboids(&[Cuboid::new(Vec3::zeros(), Vec3::repeat(0.5)).unwrap()], &pose, &scene);
        assert_eq!(out, oracle);
    }

    #[test]
    fn resample_empty_object_is_empty() {
        let scene = GridSpec::scene_default();
        let pose = Pose::new(Vec3::repeat(1.3), UnitQuaternion::about_vertical(0.4), Vec3::new(0.1, 0.2, 2.0)).unwrap();
        let empty = VoxelGrid::zeros(GridSpec::canonical());
        for s in [Sampling::Trilinear, Sampling::Nearest] {
            assert_eq!(resample_to_scene(&empty, &pose, &scene, 0.5, s).unwrap().occupied_count(0.5), 0);
        }
    }

    #[test]
    fn resample_is_periodic_in_rotation() {
        let scene = GridSpec::scene_default();
        let q = UnitQuaternion::about_vertical(0.6);
        let full_turn = UnitQuaternion::from_axis_angle(&Vec3::y(), 2.0 * std::f64::consts::PI).unwrap();
        let t = Vec3::new(0.3, 0.1, 2.5);
        let c = Vec3::new(1.2, 0.8, 0.6);
        let obj = cuboid_voxelize(
            &[Cuboid::from_bounds(Vec3::new(-0.5, -0.5, -0.5), Vec3::new(0.5, 0.0, 0.25)).unwrap()],
            &GridSpec::canonical(),
        );
        let a = resample_to_scene(&obj, &Pose::new(c, q, t).unwrap(), &scene, 0.5, Sampling::Trilinear).unwrap();
        let b = resample_to_scene(&obj, &Pose::new(c, q * full_turn, t).unwrap(), &scene, 0.5, Sampling::Trilinear).unwrap();
        let neg = resample_to_scene(&obj, &Pose::new(c, -q, t).unwrap(), &scene, 0.5, Sampling::Trilinear).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, neg);
    }

    #[test]
    fn resample_matches_analytic_voxelization_within_boundary_band() {
        let scene = GridSpec::scene_default();
        let canonical = GridSpec::canonical();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for trial in 0..20 {
            let lo = Vec3::new(rng.random_range(-0.5..-0.1), rng.random_range(-0.5..-0.1), rng.random_range(-0.5..-0.1));
            let hi = Vec3::new(rng.random_range(0.1..0.5), rng.random_range(0.1..0.5), rng.random_range(0.1..0.5));
            let part = Cuboid::from_bounds(lo, hi).unwrap();
            let obj = cuboid_voxelize(&[part], &canonical);
            let quarter = UnitQuaternion::about_vertical(std::f64::consts::FRAC_PI_2 * (trial % 4) as f64);
            let pose = Pose::new(
                Vec3::new(rng.random_range(0.5..2.0), rng.random_range(0.5..2.0), rng.random_range(0.5..2.0)),
                quarter,
                Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-0.5..0.5), rng.random_range(1.5..4.0)),
            )
            .unwrap();
            let resampled = resample_to_scene(&obj, &pose, &scene, 0.5, Sampling::Trilinear).unwrap();
            let analytic = voxelize_posed_cuboids(&[part], &pose, &scene);
            let band = 0.5 * SCENE_VOXEL_SIZE * 3f64.sqrt();
            let aff = pose.affine();
            let (wlo, whi) = bounds_of(part.corners().iter().map(|c| aff.forward(c)));
            for idx in 0..scene.cell_count() {
                if resampled.data()[idx] != analytic.data()[idx] {
                    let [i, j, k] = scene.coords(idx);
                    let c = scene.cell_center(i, j, k);
                    // Distance from the center to the world-space box surface.
                    let outside = (wlo - c).sup(&(c - whi)).sup(&Vec3::zeros()).norm();
                    let inside = (c - wlo).inf(&(whi - c)).min();
                    let d = if outside > 0.0 { outside } else { inside };
                    assert!(d <= band, "mismatch {d} m from surface");
                }
            }
        }
    }
}
