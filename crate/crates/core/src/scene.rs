//! The factored representation (amodal layout plus posed objects), scene
//! voxel composition, parametric furniture shapes and the synthetic
//! ground-truth generator.
//!
//! Canonical object frame: upright with "up" along -y (the camera's y axis
//! points down) and the front facing -z, so an object with identity rotation
//! faces the camera. Objects rest on the floor through their +y face.

use std::f64::consts::TAU as FULL_TURN;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Camera, Pose, UnitQuaternion, Vec3};
use crate::render::{self, DepthMap};
use crate::voxel::{
    bounds_of, cuboid_voxelize, resample_to_scene, voxelize_posed_cuboids, Cuboid, Frame, GridSpec, Sampling,
    VoxelGrid, CANONICAL_DIM, SCENE_VOXEL_SIZE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectClass {
    Bed,
    Chair,
    Desk,
    Sofa,
    Table,
    Television,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 6] = [
        ObjectClass::Bed,
        ObjectClass::Chair,
        ObjectClass::Desk,
        ObjectClass::Sofa,
        ObjectClass::Table,
        ObjectClass::Television,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ObjectClass::Bed => "bed",
            ObjectClass::Chair => "chair",
            ObjectClass::Desk => "desk",
            ObjectClass::Sofa => "sofa",
            ObjectClass::Table => "table",
            ObjectClass::Television => "television",
        }
    }
}

/// 2D box in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct Box2d {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl TryFrom<[f64; 4]> for Box2d {
    type Error = Error;
    fn try_from(v: [f64; 4]) -> Result<Self> {
        Box2d::new(v[0], v[1], v[2], v[3])
    }
}

impl From<Box2d> for [f64; 4] {
    fn from(b: Box2d) -> Self {
        [b.xmin, b.ymin, b.xmax, b.ymax]
    }
}

impl Box2d {
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Result<Self> {
        let finite = [xmin, ymin, xmax, ymax].iter().all(|v| v.is_finite());
        if !finite || xmax <= xmin || ymax <= ymin {
            return Err(Error::arg(format!("degenerate box [{xmin}, {ymin}, {xmax}, {ymax}]")));
        }
        Ok(Self { xmin, ymin, xmax, ymax })
    }

    pub fn area(&self) -> f64 {
        (self.xmax - self.xmin) * (self.ymax - self.ymin)
    }

    pub fn iou(&self, other: &Box2d) -> f64 {
        let w = (self.xmax.min(other.xmax) - self.xmin.max(other.xmin)).max(0.0);
        let h = (self.ymax.min(other.ymax) - self.ymin.max(other.ymin)).max(0.0);
        let inter = w * h;
        inter / (self.area() + other.area() - inter)
    }

    pub fn within(&self, camera: &Camera) -> bool {
        self.xmin >= 0.0 && self.ymin >= 0.0 && self.xmax <= camera.width() as f64 && self.ymax <= camera.height() as f64
    }
}

/// One object factor: canonical shape, pose, foreground score, optional
/// class and 2D box. Synthetic ground truth also carries the canonical-frame
/// cuboids the shape was voxelized from.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    shape: VoxelGrid,
    pub pose: Pose,
    score: f64,
    pub class: Option<ObjectClass>,
    pub box2d: Option<Box2d>,
    pub primitives: Vec<Cuboid>,
}

impl SceneObject {
    pub fn new(shape: VoxelGrid, pose: Pose, score: f64) -> Result<Self> {
        if shape.frame() != Frame::Canonical {
            return Err(Error::GridMismatch("object shapes live in the canonical frame".into()));
        }
        check_score(score)?;
        Ok(Self {
            shape,
            pose,
            score,
            class: None,
            box2d: None,
            primitives: Vec::new(),
        })
    }

    /// Object whose shape is the canonical voxelization of `primitives`.
    pub fn from_primitives(primitives: Vec<Cuboid>, pose: Pose, score: f64) -> Result<Self> {
        let shape = cuboid_voxelize(&primitives, &GridSpec::canonical());
        let mut obj = Self::new(shape, pose, score)?;
        obj.primitives = primitives;
        Ok(obj)
    }

    pub fn with_class(mut self, class: ObjectClass) -> Self {
        self.class = Some(class);
        self
    }

    pub fn with_box(mut self, b: Box2d) -> Self {
        self.box2d = Some(b);
        self
    }

    pub fn shape(&self) -> &VoxelGrid {
        &self.shape
    }

    pub fn set_shape(&mut self, shape: VoxelGrid) -> Result<()> {
        if shape.frame() != Frame::Canonical {
            return Err(Error::GridMismatch("object shapes live in the canonical frame".into()));
        }
        self.shape = shape;
        Ok(())
    }

    pub fn score(&self) -> f64 {
        self.score
    }

    pub fn set_score(&mut self, score: f64) -> Result<()> {
        check_score(score)?;
        self.score = score;
        Ok(())
    }

    /// World-space bounds of the analytic primitives, or of the posed
    /// canonical cube when none are attached.
    pub fn world_bounds(&self) -> (Vec3, Vec3) {
        let aff = self.pose.affine();
        if self.primitives.is_empty() {
            crate::voxel::posed_unit_cube_bounds(&self.pose)
        } else {
            bounds_of(self.primitives.iter().flat_map(|c| c.corners()).map(|c| aff.forward(&c)))
        }
    }
}

fn check_score(score: f64) -> Result<()> {
    if (0.0..=1.0).contains(&score) {
        Ok(())
    } else {
        Err(Error::arg(format!("score {score} outside [0, 1]")))
    }
}

/// Amodal layout as a disparity (inverse depth) image. Zero marks pixels
/// without a layout surface.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    width: usize,
    height: usize,
    disparity: Vec<f64>,
}

impl Layout {
    pub fn new(width: usize, height: usize, disparity: Vec<f64>) -> Result<Self> {
        if disparity.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                actual: disparity.len(),
            });
        }
        if let Some(v) = disparity.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::arg(format!("layout disparity {v} is not finite and non-negative")));
        }
        Ok(Self { width, height, disparity })
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn disparity(&self) -> &[f64] {
        &self.disparity
    }

    pub fn from_depth(depth: &DepthMap) -> Result<Self> {
        let disparity = render::depth_disparity_convert(depth.values())?;
        Self::new(depth.camera().width(), depth.camera().height(), disparity)
    }

    pub fn to_depth(&self, camera: &Camera) -> Result<DepthMap> {
        if camera.width() != self.width || camera.height() != self.height {
            return Err(Error::arg("layout size does not match the camera"));
        }
        DepthMap::new(*camera, render::depth_disparity_convert(&self.disparity)?)
    }
}

/// Camera, amodal layout, optional room cuboid and the object factors.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredScene {
    pub camera: Camera,
    pub layout: Option<Layout>,
    pub room: Option<Cuboid>,
    pub objects: Vec<SceneObject>,
}

impl FactoredScene {
    pub fn new(camera: Camera) -> Self {
        Self {
            camera,
            layout: None,
            room: None,
            objects: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(l) = &self.layout {
            if l.width != self.camera.width() || l.height != self.camera.height() {
                return Err(Error::arg("layout dimensions do not match the camera"));
            }
        }
        for (n, obj) in self.objects.iter().enumerate() {
            if let Some(b) = obj.box2d {
                if !b.within(&self.camera) {
                    return Err(Error::arg(format!("object {n}: 2D box outside the image")));
                }
            }
        }
        Ok(())
    }

    /// Amodal layout depth: the stored layout when present, otherwise the
    /// analytic render of the room.
    pub fn layout_depth(&self) -> Result<DepthMap> {
        match (&self.layout, &self.room) {
            (Some(layout), _) => layout.to_depth(&self.camera),
            (None, Some(_)) => render::render_depth_analytic(self, false),
            (None, None) => Err(Error::arg("scene has neither layout nor room")),
        }
    }
}

/// Scene-grid occupancy of a factored scene: the cell-wise maximum of every
/// resampled object. With `include_layout`, the room boundary (or, without a
/// room, the backprojected layout) is added as an occupied shell.
pub fn compose_scene_voxels(
    scene: &FactoredScene,
    spec: &GridSpec,
    tau: f64,
    include_layout: bool,
) -> Result<VoxelGrid> {
    let mut grid = VoxelGrid::zeros(*spec);
    for obj in &scene.objects {
        let placed = resample_to_scene(obj.shape(), &obj.pose, spec, tau, Sampling::Trilinear)?;
        grid.max_merge(&placed)?;
    }
    if include_layout {
        let shell = layout_shell(scene, spec)?;
        grid.max_merge(&shell)?;
    }
    Ok(grid)
}

fn layout_shell(scene: &FactoredScene, spec: &GridSpec) -> Result<VoxelGrid> {
    if let Some(room) = &scene.room {
        let half = spec.cell_size() * 0.5;
        let (rlo, rhi) = (room.min(), room.max());
        return VoxelGrid::from_fn(*spec, |i, j, k| {
            let c = spec.cell_center(i, j, k);
            let (lo, hi) = (c - half, c + half);
            let touches = (0..3).all(|a| hi[a] >= rlo[a] && lo[a] <= rhi[a]);
            let interior = (0..3).all(|a| lo[a] > rlo[a] && hi[a] < rhi[a]);
            (touches && !interior) as u8 as f32
        });
    }
    let depth = scene.layout_depth()?;
    let points = render::depth_to_pointcloud(&depth);
    Ok(render::pointcloud_to_voxels(&points, spec).grid)
}

/// Ground-truth scene occupancy from the analytic primitives of each object.
pub fn analytic_scene_voxels(scene: &FactoredScene, spec: &GridSpec) -> Result<VoxelGrid> {
    let mut grid = VoxelGrid::zeros(*spec);
    for (n, obj) in scene.objects.iter().enumerate() {
        if obj.primitives.is_empty() {
            return Err(Error::arg(format!("object {n} carries no analytic primitives")));
        }
        grid.max_merge(&voxelize_posed_cuboids(&obj.primitives, &obj.pose, spec))?;
    }
    Ok(grid)
}

/// Parameters of the synthetic furniture shapes, in canonical units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeParams {
    /// Thickness of tops, seats, backs and slabs; in [0.04, 0.3].
    pub slab_thickness: f64,
    /// Leg and arm cross-section; in [0.04, 0.2].
    pub leg_width: f64,
}

impl Default for ShapeParams {
    fn default() -> Self {
        Self {
            slab_thickness: 0.125,
            leg_width: 0.125,
        }
    }
}

fn bounds(min: [f64; 3], max: [f64; 3]) -> Cuboid {
    Cuboid::from_bounds(Vec3::from(min), Vec3::from(max)).expect("parametric part is non-degenerate")
}

/// Canonical-frame cuboids for a furniture class. Every part lies inside
/// [-0.5, 0.5]^3.
pub fn parametric_shape(kind: ObjectClass, params: &ShapeParams) -> Result<Vec<Cuboid>> {
    let t = params.slab_thickness;
    let w = params.leg_width;
    if !(0.04..=0.3).contains(&t) {
        return Err(Error::arg(format!("slab thickness {t} outside [0.04, 0.3]")));
    }
    if !(0.04..=0.2).contains(&w) {
        return Err(Error::arg(format!("leg width {w} outside [0.04, 0.2]")));
    }
    let h = 0.5;
    let legs = |top: f64| -> Vec<Cuboid> {
        [(-h, -h), (h - w, -h), (-h, h - w), (h - w, h - w)]
            .iter()
            .map(|&(x, z)| bounds([x, top, z], [x + w, h, z + w]))
            .collect()
    };
    let parts = match kind {
        ObjectClass::Desk | ObjectClass::Table => {
            let mut p = vec![bounds([-h, -h, -h], [h, -h + t, h])];
            p.extend(legs(-h + t));
            p
        }
        ObjectClass::Bed => vec![
            bounds([-h, 0.0, -h], [h, h, h]),
            bounds([-h, -h, h - t], [h, 0.0, h]),
        ],
        ObjectClass::Chair => {
            let mut p = vec![
                bounds([-h, 0.0, -h], [h, t, h]),
                bounds([-h, -h, h - t], [h, 0.0, h]),
            ];
            p.extend(legs(t));
            p
        }
        ObjectClass::Sofa => vec![
            bounds([-h + w, 0.0, -h], [h - w, h, h - t]),
            bounds([-h, -h, h - t], [h, h, h]),
            bounds([-h, -0.1, -h], [-h + w, h, h - t]),
            bounds([h - w, -0.1, -h], [h, h, h - t]),
        ],
        ObjectClass::Television => {
            // 2 or 3 whole canonical cells so the voxelized panel is exact
            let cells = (t * CANONICAL_DIM as f64).round().clamp(2.0, 3.0);
            let lo = -(0.5 * cells).ceil() / CANONICAL_DIM as f64;
            vec![bounds([-h, -h, lo], [h, h, lo + cells / CANONICAL_DIM as f64])]
        }
    };
    Ok(parts)
}

/// Synthetic scene generator settings. Lengths in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub object_count: [usize; 2],
    pub room_width: [f64; 2],
    pub room_depth: [f64; 2],
    pub room_height: [f64; 2],
    pub camera_height: [f64; 2],
    /// Sampling weights in the order bed, chair, desk, sofa, table, television.
    pub class_weights: [f64; 6],
    pub max_attempts: usize,
    pub camera: Camera,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            object_count: [1, 4],
            room_width: [4.0, 5.0],
            room_depth: [4.5, 5.0],
            room_height: [2.5, 3.0],
            camera_height: [1.0, 1.2],
            class_weights: [1.0; 6],
            max_attempts: 200,
            camera: Camera::default(),
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("room_width", self.room_width),
            ("room_depth", self.room_depth),
            ("room_height", self.room_height),
            ("camera_height", self.camera_height),
        ];
        for (name, [lo, hi]) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
                return Err(Error::arg(format!("{name} range [{lo}, {hi}] is invalid")));
            }
        }
        if self.object_count[0] > self.object_count[1] {
            return Err(Error::arg("object_count range is empty"));
        }
        if self.camera_height[1] >= self.room_height[0] {
            return Err(Error::arg("camera must sit below the ceiling"));
        }
        if self.room_width[0] < 2.0 || self.room_depth[0] < 3.0 {
            return Err(Error::arg("rooms must be at least 2 m wide and 3 m deep"));
        }
        if self.class_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || self.class_weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::arg("class weights must be non-negative with a positive sum"));
        }
        if self.max_attempts == 0 {
            return Err(Error::arg("max_attempts must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedScene {
    pub scene: FactoredScene,
    pub requested_objects: usize,
    /// Set when rejection sampling placed fewer objects than requested.
    pub placement_shortfall: bool,
}

// (min, max) world size per class as (width x, height y, depth z).
fn class_size_range(class: ObjectClass) -> ([f64; 3], [f64; 3]) {
    match class {
        ObjectClass::Bed => ([1.4, 0.8, 1.9], [1.8, 1.1, 2.1]),
        ObjectClass::Chair => ([0.45, 0.8, 0.45], [0.6, 1.0, 0.6]),
        ObjectClass::Desk => ([1.0, 0.72, 0.6], [1.5, 0.78, 0.8]),
        ObjectClass::Sofa => ([1.6, 0.8, 0.8], [2.1, 0.95, 1.0]),
        ObjectClass::Table => ([0.8, 0.7, 0.8], [1.4, 0.78, 1.2]),
        ObjectClass::Television => ([0.8, 0.5, 0.3], [1.3, 0.8, 0.5]),
    }
}

/// Projected full-object box clipped to the image, when every corner is in
/// front of the camera and the clipped box keeps at least 2 px per side.
pub fn project_object_box(camera: &Camera, obj: &SceneObject) -> Option<Box2d> {
    let aff = obj.pose.affine();
    let corners: Vec<Vec3> = if obj.primitives.is_empty() {
        Cuboid::new(Vec3::zeros(), Vec3::repeat(0.5)).ok()?.corners().to_vec()
    } else {
        obj.primitives.iter().flat_map(|c| c.corners()).collect()
    };
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for c in corners {
        let (u, v, _) = camera.project(&aff.forward(&c)).ok()?;
        x0 = x0.min(u);
        y0 = y0.min(v);
        x1 = x1.max(u);
        y1 = y1.max(v);
    }
    let (w, h) = (camera.width() as f64, camera.height() as f64);
    let b = Box2d::new(x0.max(0.0), y0.max(0.0), x1.min(w), y1.min(h)).ok()?;
    (b.xmax - b.xmin >= 2.0 && b.ymax - b.ymin >= 2.0).then_some(b)
}

fn sample_range(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Canonical lengths snapped to whole canonical cells so that the 32^3
/// voxelization of a part reproduces its faces exactly.
fn snapped(cells: usize) -> f64 {
    cells as f64 / CANONICAL_DIM as f64
}

/// Deterministic synthetic scene: a cuboid room around the camera with
/// furniture resting on the floor, rotated only about the vertical axis and
/// placed with pairwise-disjoint world bounding boxes.
pub fn generate_scene(cfg: &GeneratorConfig) -> Result<GeneratedScene> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let width = sample_range(&mut rng, cfg.room_width);
    let depth = sample_range(&mut rng, cfg.room_depth);
    let height = sample_range(&mut rng, cfg.room_height);
    let cam_height = sample_range(&mut rng, cfg.camera_height);
    let lateral = rng.random_range(0.35..0.65);
    let behind = rng.random_range(0.3..0.6);
    let room = Cuboid::from_bounds(
        Vec3::new(-lateral * width, cam_height - height, -behind),
        Vec3::new((1.0 - lateral) * width, cam_height, depth - behind),
    )?;
    let floor_y = cam_height;

    let [cmin, cmax] = cfg.object_count;
    let requested = if cmin == cmax { cmin } else { rng.random_range(cmin..=cmax) };
    let classes = WeightedIndex::new(cfg.class_weights).map_err(|e| Error::arg(e.to_string()))?;

    let margin = 0.05;
    let gap = 0.1;
    let mut objects: Vec<SceneObject> = Vec::with_capacity(requested);
    let mut placed_bounds: Vec<(Vec3, Vec3)> = Vec::new();
    let mut attempts = 0;
    while objects.len() < requested && attempts < cfg.max_attempts * requested.max(1) {
        attempts += 1;
        let class = ObjectClass::ALL[classes.sample(&mut rng)];
        let (smin, smax) = class_size_range(class);
        let size = Vec3::from_fn(|a, _| sample_range(&mut rng, [smin[a], smax[a]]));
        let params = ShapeParams {
            slab_thickness: snapped(rng.random_range(2..=5)),
            leg_width: snapped(rng.random_range(2..=4)),
        };
        let parts = parametric_shape(class, &params)?;
        let yaw = rng.random_range(0.0..FULL_TURN);
        let rmin = room.min();
        let rmax = room.max();
        let x = rng.random_range(rmin.x..rmax.x);
        let z = rng.random_range(1.5f64.min(rmax.z)..rmax.z);
        let pose = Pose::new(size, UnitQuaternion::about_vertical(yaw), Vec3::new(x, floor_y - 0.5 * size.y, z))?;
        let mut obj = SceneObject::from_primitives(parts, pose, 1.0)?.with_class(class);
        let (lo, hi) = obj.world_bounds();
        let inside = lo.x >= rmin.x + margin && hi.x <= rmax.x - margin && lo.z >= rmin.z + margin && hi.z <= rmax.z - margin && lo.y >= rmin.y;
        if !inside || lo.z < 0.8 {
            continue;
        }
        let disjoint = placed_bounds
            .iter()
            .all(|(plo, phi)| lo.x >= phi.x + gap || hi.x + gap <= plo.x || lo.z >= phi.z + gap || hi.z + gap <= plo.z);
        if !disjoint {
            continue;
        }
        let Some(b) = project_object_box(&cfg.camera, &obj) else {
            continue;
        };
        obj.box2d = Some(b);
        placed_bounds.push((lo, hi));
        objects.push(obj);
    }

    let mut scene = FactoredScene {
        camera: cfg.camera,
        layout: None,
        room: Some(room),
        objects,
    };
    let amodal = render::render_depth_analytic(&scene, false)?;
    scene.layout = Some(Layout::from_depth(&amodal)?);
    let placement_shortfall = scene.objects.len() < requested;
    Ok(GeneratedScene {
        scene,
        requested_objects: requested,
        placement_shortfall,
    })
}

/// Default scene grid tolerance: half a scene-voxel diagonal.
pub fn half_voxel_diagonal() -> f64 {
    0.5 * SCENE_VOXEL_SIZE * 3f64.sqrt()
}
