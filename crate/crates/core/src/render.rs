//! Depth synthesis from factored scenes and the depth / point cloud / voxel
//! conversions.
//!
//! Two renderers are provided. `render_depth_analytic` intersects pixel rays
//! with the room cuboid and every object's canonical cuboids exactly;
//! `render_depth_voxel` rasterizes the faces of occupied voxels with a
//! z-buffer and therefore works for arbitrary predicted shapes.
//!
//! Depth 0 marks an empty pixel everywhere.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Camera, PoseAffine, Vec3};
use crate::scene::FactoredScene;
use crate::voxel::{check_tau, GridSpec, VoxelGrid};

/// Per-pixel depth in meters; 0 marks an empty pixel. Row-major, rows top to
/// bottom.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    camera: Camera,
    values: Vec<f64>,
}

impl DepthMap {
    pub fn new(camera: Camera, values: Vec<f64>) -> Result<Self> {
        if values.len() != camera.pixel_count() {
            return Err(Error::DimensionMismatch {
                expected: camera.pixel_count(),
                actual: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::NonPositiveDepth(*v));
        }
        Ok(Self { camera, values })
    }

    pub fn empty(camera: Camera) -> Self {
        Self {
            camera,
            values: vec![0.0; camera.pixel_count()],
        }
    }

    pub fn camera(&self) -> &Camera {
        &self.camera
    }
    pub fn width(&self) -> usize {
        self.camera.width()
    }
    pub fn height(&self) -> usize {
        self.camera.height()
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.width() + col]
    }

    /// Number of non-empty pixels.
    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|v| **v > 0.0).count()
    }

    pub fn to_disparity(&self) -> Vec<f64> {
        depth_disparity_convert(&self.values).expect("depth map values are validated")
    }
}

/// Elementwise reciprocal, mapping depth to disparity or back. Zeros (empty
/// pixels) stay zero; negative or non-finite values are rejected.
pub fn depth_disparity_convert(values: &[f64]) -> Result<Vec<f64>> {
    values
        .iter()
        .map(|&v| {
            if v == 0.0 {
                Ok(0.0)
            } else if v.is_finite() && v > 0.0 {
                Ok(1.0 / v)
            } else {
                Err(Error::NonPositiveDepth(v))
            }
        })
        .collect()
}

/// What the analytic renderer saw at a pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceId {
    None,
    Room,
    Object(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticRender {
    pub depth: DepthMap,
    pub surface: Vec<SurfaceId>,
}

/// Parametric interval where the ray `o + t d` lies inside the box.
fn slab(o: &Vec3, d: &Vec3, lo: &Vec3, hi: &Vec3) -> Option<(f64, f64)> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for a in 0..3 {
        if d[a].abs() < 1e-15 {
            if o[a] < lo[a] || o[a] > hi[a] {
                return None;
            }
            continue;
        }
        let (ta, tb) = ((lo[a] - o[a]) / d[a], (hi[a] - o[a]) / d[a]);
        t0 = t0.max(ta.min(tb));
        t1 = t1.min(ta.max(tb));
    }
    (t0 <= t1).then_some((t0, t1))
}

/// Exact ray casting against the room interior and, optionally, every
/// object's canonical cuboids. Also reports the visible surface per pixel.
/// Objects must carry their analytic primitives.
pub fn render_analytic_with_ids(scene: &FactoredScene, include_objects: bool) -> Result<AnalyticRender> {
    let cam = scene.camera;
    let objects: Vec<(PoseAffine, &[crate::voxel::Cuboid])> = if include_objects {
        scene
            .objects
            .iter()
            .enumerate()
            .map(|(n, o)| {
                if o.primitives.is_empty() {
                    Err(Error::arg(format!("object {n} has no analytic primitives")))
                } else {
                    Ok((o.pose.affine(), o.primitives.as_slice()))
                }
            })
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let room = scene.room.map(|r| (r.min(), r.max()));
    let origin = Vec3::zeros();

    let hits: Vec<(f64, SurfaceId)> = (0..cam.pixel_count())
        .into_par_iter()
        .map(|idx| {
            let ray = cam.pixel_ray(idx % cam.width(), idx / cam.width());
            let mut best = (f64::INFINITY, SurfaceId::None);
            if let Some((lo, hi)) = &room {
                if let Some((t0, t1)) = slab(&origin, &ray, lo, hi) {
                    let t = if t0 > 0.0 { t0 } else { t1 };
                    if t > 0.0 {
                        best = (t, SurfaceId::Room);
                    }
                }
            }
            for (n, (aff, parts)) in objects.iter().enumerate() {
                let o = aff.inverse(&origin);
                let d = aff.inverse_direction(&ray);
                for part in parts.iter() {
                    if let Some((t0, _)) = slab(&o, &d, &part.min(), &part.max()) {
                        if t0 > 0.0 && t0 <= best.0 {
                            best = (t0, SurfaceId::Object(n));
                        }
                    }
                }
            }
            if best.1 == SurfaceId::None {
                (0.0, SurfaceId::None)
            } else {
                // pixel rays have unit z, so the ray parameter is the depth
                best
            }
        })
        .collect();
    let (values, surface) = hits.into_iter().unzip();
    Ok(AnalyticRender {
        depth: DepthMap::new(cam, values)?,
        surface,
    })
}

/// Analytic depth; `include_objects = false` gives the amodal layout depth.
pub fn render_depth_analytic(scene: &FactoredScene, include_objects: bool) -> Result<DepthMap> {
    Ok(render_analytic_with_ids(scene, include_objects)?.depth)
}

const NEAR: f64 = 1e-4;

// Screen-space triangle: (u, v, 1/z) per vertex.
#[derive(Debug, Clone, Copy)]
struct ScreenTri {
    p: [[f64; 3]; 3],
    rows: (usize, usize),
    cols: (usize, usize),
}

fn clip_near(poly: &[Vec3]) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(poly.len() + 2);
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let (ina, inb) = (a.z >= NEAR, b.z >= NEAR);
        if ina {
            out.push(a);
        }
        if ina != inb {
            let s = (NEAR - a.z) / (b.z - a.z);
            out.push(a + (b - a) * s);
        }
    }
    out
}

fn to_screen(cam: &Camera, tri: [Vec3; 3]) -> Option<ScreenTri> {
    let p = tri.map(|q| [cam.fx() * q.x / q.z + cam.cx(), cam.fy() * q.y / q.z + cam.cy(), 1.0 / q.z]);
    let (umin, umax) = p.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), q| (a.min(q[0]), b.max(q[0])));
    let (vmin, vmax) = p.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), q| (a.min(q[1]), b.max(q[1])));
    let (w, h) = (cam.width() as f64, cam.height() as f64);
    if umax < 0.0 || vmax < 0.0 || umin > w - 1.0 || vmin > h - 1.0 {
        return None;
    }
    let cols = (umin.max(0.0).ceil() as usize, umax.min(w - 1.0).floor() as usize);
    let rows = (vmin.max(0.0).ceil() as usize, vmax.min(h - 1.0).floor() as usize);
    (cols.0 <= cols.1 && rows.0 <= rows.1).then_some(ScreenTri { p, rows, cols })
}

/// Z-buffer over camera-space quads (each given by 4 corners in order).
fn rasterize_quads(cam: &Camera, quads: &[[Vec3; 4]]) -> Vec<f64> {
    let mut tris = Vec::with_capacity(quads.len() * 2);
    for quad in quads {
        let poly = clip_near(quad);
        for i in 1..poly.len().saturating_sub(1) {
            if let Some(t) = to_screen(cam, [poly[0], poly[i], poly[i + 1]]) {
                tris.push(t);
            }
        }
    }
    let (w, h) = (cam.width(), cam.height());
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); h];
    for (n, t) in tris.iter().enumerate() {
        for bucket in &mut buckets[t.rows.0..=t.rows.1] {
            bucket.push(n as u32);
        }
    }
    let mut zbuf = vec![0.0; w * h];
    zbuf.par_chunks_mut(w).zip(buckets.par_iter()).enumerate().for_each(|(row, (line, bucket))| {
        let v = row as f64;
        for &n in bucket {
            let t = &tris[n as usize];
            let [a, b, c] = t.p;
            let area = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
            if area.abs() < 1e-12 {
                continue;
            }
            for col in t.cols.0..=t.cols.1 {
                let u = col as f64;
                let l0 = ((b[0] - u) * (c[1] - v) - (b[1] - v) * (c[0] - u)) / area;
                let l1 = ((c[0] - u) * (a[1] - v) - (c[1] - v) * (a[0] - u)) / area;
                let l2 = 1.0 - l0 - l1;
                let eps = -1e-9;
                if l0 < eps || l1 < eps || l2 < eps {
                    continue;
                }
                let inv_z = l0 * a[2] + l1 * b[2] + l2 * c[2];
                if inv_z <= 0.0 {
                    continue;
                }
                let z = 1.0 / inv_z;
                let slot = &mut line[col];
                if *slot == 0.0 || z < *slot {
                    *slot = z;
                }
            }
        }
    });
    zbuf
}

/// Boundary faces of the occupied cells of `grid`, mapped through `map`.
/// A face is emitted when the neighbouring cell across it is empty or
/// outside the grid.
fn boundary_quads(grid: &VoxelGrid, tau: f64, map: impl Fn(&Vec3) -> Vec3) -> Vec<[Vec3; 4]> {
    let spec = grid.spec();
    let [nx, ny, nz] = spec.dims();
    let size = spec.cell_size();
    let occ = |i: isize, j: isize, k: isize| -> bool {
        i >= 0
            && j >= 0
            && k >= 0
            && (i as usize) < nx
            && (j as usize) < ny
            && (k as usize) < nz
            && grid.get(i as usize, j as usize, k as usize) as f64 >= tau
    };
    let mut quads = Vec::new();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                if !occ(i as isize, j as isize, k as isize) {
                    continue;
                }
                let lo = spec.cell_center(i, j, k) - size * 0.5;
                let corner = |dx: usize, dy: usize, dz: usize| {
                    map(&(lo + Vec3::new(dx as f64 * size.x, dy as f64 * size.y, dz as f64 * size.z)))
                };
                let (ii, jj, kk) = (i as isize, j as isize, k as isize);
                if !occ(ii - 1, jj, kk) {
                    quads.push([corner(0, 0, 0), corner(0, 1, 0), corner(0, 1, 1), corner(0, 0, 1)]);
                }
                if !occ(ii + 1, jj, kk) {
                    quads.push([corner(1, 0, 0), corner(1, 1, 0), corner(1, 1, 1), corner(1, 0, 1)]);
                }
                if !occ(ii, jj - 1, kk) {
                    quads.push([corner(0, 0, 0), corner(1, 0, 0), corner(1, 0, 1), corner(0, 0, 1)]);
                }
                if !occ(ii, jj + 1, kk) {
                    quads.push([corner(0, 1, 0), corner(1, 1, 0), corner(1, 1, 1), corner(0, 1, 1)]);
                }
                if !occ(ii, jj, kk - 1) {
                    quads.push([corner(0, 0, 0), corner(1, 0, 0), corner(1, 1, 0), corner(0, 1, 0)]);
                }
                if !occ(ii, jj, kk + 1) {
                    quads.push([corner(0, 0, 1), corner(1, 0, 1), corner(1, 1, 1), corner(0, 1, 1)]);
                }
            }
        }
    }
    quads
}

/// Keeps the nearer of two depths, treating 0 as empty.
fn nearer(a: f64, b: f64) -> f64 {
    match (a > 0.0, b > 0.0) {
        (true, true) => a.min(b),
        (true, false) => a,
        _ => b,
    }
}

/// Z-buffer render of every occupied object voxel as a full-size posed cube,
/// with the stored layout (if any) composited behind.
pub fn render_depth_voxel(scene: &FactoredScene, tau: f64) -> Result<DepthMap> {
    check_tau(tau)?;
    let cam = scene.camera;
    let mut quads = Vec::new();
    for obj in &scene.objects {
        let aff = obj.pose.affine();
        quads.extend(boundary_quads(obj.shape(), tau, |p| aff.forward(p)));
    }
    let mut depth = rasterize_quads(&cam, &quads);
    if let Some(layout) = &scene.layout {
        let layout_depth = layout.to_depth(&cam)?;
        for (d, l) in depth.iter_mut().zip(layout_depth.values()) {
            *d = nearer(*d, *l);
        }
    }
    DepthMap::new(cam, depth)
}

/// Z-buffer render of an occupancy grid already expressed in camera
/// coordinates.
pub fn render_scene_grid(grid: &VoxelGrid, camera: &Camera, tau: f64) -> Result<DepthMap> {
    check_tau(tau)?;
    let quads = boundary_quads(grid, tau, |p| *p);
    DepthMap::new(*camera, rasterize_quads(camera, &quads))
}

/// One backprojected point per non-empty pixel, in row-major pixel order.
pub fn depth_to_pointcloud(d: &DepthMap) -> Vec<Vec3> {
    depth_to_pointcloud_masked(d, |_| true)
}

/// Backprojection restricted to pixels whose row-major index passes `keep`.
pub fn depth_to_pointcloud_masked(d: &DepthMap, keep: impl Fn(usize) -> bool) -> Vec<Vec3> {
    let w = d.width();
    d.values()
        .iter()
        .enumerate()
        .filter(|(idx, z)| **z > 0.0 && keep(*idx))
        .map(|(idx, &z)| d.camera().pixel_ray(idx % w, idx / w) * z)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointVoxelization {
    pub grid: VoxelGrid,
    /// Points that fell outside the grid extent.
    pub ignored: usize,
}

/// Marks every cell containing at least one point.
pub fn pointcloud_to_voxels(points: &[Vec3], spec: &GridSpec) -> PointVoxelization {
    let mut data = vec![0.0f32; spec.cell_count()];
    let mut ignored = 0;
    for p in points {
        match spec.cell_of(p) {
            Some([i, j, k]) => data[spec.index(i, j, k)] = 1.0,
            None => ignored += 1,
        }
    }
    PointVoxelization {
        grid: VoxelGrid::new(*spec, data).expect("binary occupancy is valid"),
        ignored,
    }
}
