//! Quaternions, rotations, object poses and the pinhole camera.
//!
//! Coordinate convention shared by every module: the camera sits at the
//! origin looking down +z, with x to the right and y pointing down
//! (right-handed). Quaternions are stored scalar-first `(w, x, y, z)`.

use std::ops::{Mul, Neg};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

const UNIT_NORM_TOL: f64 = 1e-6;
const ROTATION_TOL: f64 = 1e-9;

/// Unit quaternion `(w, x, y, z)`. `q` and `-q` describe the same rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl UnitQuaternion {
    pub const IDENTITY: UnitQuaternion = UnitQuaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Accepts components whose norm is within 1e-6 of one and renormalizes
    /// them.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let norm = (w * w + x * x + y * y + z * z).sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::NonUnitQuaternion { norm });
        }
        Ok(Self::normalized_unchecked(w, x, y, z, norm))
    }

    /// Projects an arbitrary non-zero 4-vector onto the unit sphere.
    pub fn from_vector(v: [f64; 4]) -> Result<Self> {
        let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !norm.is_finite() || norm <= f64::EPSILON {
            return Err(Error::arg(format!(
                "cannot normalize quaternion with norm {norm}"
            )));
        }
        Ok(Self::normalized_unchecked(v[0], v[1], v[2], v[3], norm))
    }

    // Inputs already unit to within a few ulps are kept bit-for-bit, which
    // makes construction from stored components idempotent.
    fn normalized_unchecked(w: f64, x: f64, y: f64, z: f64, norm: f64) -> Self {
        if (norm - 1.0).abs() <= 4.0 * f64::EPSILON {
            return Self { w, x, y, z };
        }
        Self {
            w: w / norm,
            x: x / norm,
            y: y / norm,
            z: z / norm,
        }
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Result<Self> {
        let n = axis.norm();
        if !n.is_finite() || n <= f64::EPSILON || !angle.is_finite() {
            return Err(Error::arg("axis-angle needs a finite non-zero axis"));
        }
        let a = axis / n;
        let (s, c) = (0.5 * angle).sin_cos();
        Self::from_vector([c, a.x * s, a.y * s, a.z * s])
    }

    /// Rotation about the camera's vertical (y) axis.
    pub fn about_vertical(angle: f64) -> Self {
        let (s, c) = (0.5 * angle).sin_cos();
        Self {
            w: c,
            x: 0.0,
            y: s,
            z: 0.0,
        }
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn conjugate(&self) -> Self {
        Self {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    /// Sandwich product `q v q*`.
    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        let u = Vec3::new(self.x, self.y, self.z);
        let t = 2.0 * u.cross(v);
        v + self.w * t + u.cross(&t)
    }

    pub fn to_rotation_matrix(&self) -> RotationMatrix {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        let m = Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        );
        RotationMatrix(m)
    }

    /// Angle of the relative rotation, in `[0, pi]`.
    pub fn angle_to(&self, other: &Self) -> f64 {
        rotation_geodesic(self, other)
    }
}

impl Neg for UnitQuaternion {
    type Output = Self;
    fn neg(self) -> Self {
        Self {
            w: -self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }
}

impl Mul for UnitQuaternion {
    type Output = Self;

    /// Hamilton product; `(a * b).rotate(v) == a.rotate(&b.rotate(v))`.
    fn mul(self, b: Self) -> Self {
        let a = self;
        let w = a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z;
        let x = a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y;
        let y = a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x;
        let z = a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w;
        let norm = (w * w + x * x + y * y + z * z).sqrt();
        Self::normalized_unchecked(w, x, y, z, norm)
    }
}

pub fn quat_to_matrix(q: &UnitQuaternion) -> RotationMatrix {
    q.to_rotation_matrix()
}

/// Geodesic distance between two rotations, `2 acos(|<a, b>|)`.
///
/// Evaluated as `4 atan2(|a - s b|, |a + s b|)` with `s = sign(<a, b>)`,
/// which equals the acos form but stays accurate near zero.
pub fn rotation_geodesic(a: &UnitQuaternion, b: &UnitQuaternion) -> f64 {
    let s = if a.dot(b) < 0.0 { -1.0 } else { 1.0 };
    let (p, q) = (a.to_array(), b.to_array());
    let mut minus = 0.0;
    let mut plus = 0.0;
    for i in 0..4 {
        minus += (p[i] - s * q[i]).powi(2);
        plus += (p[i] + s * q[i]).powi(2);
    }
    4.0 * minus.sqrt().atan2(plus.sqrt())
}

/// Proper rotation matrix (orthonormal, determinant +1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::arg("rotation matrix has non-finite entries"));
        }
        let orth = (m.transpose() * m - Matrix3::identity()).abs().max();
        let det = m.determinant();
        if orth > ROTATION_TOL || (det - 1.0).abs() > ROTATION_TOL {
            return Err(Error::arg(format!(
                "not a rotation: |R^T R - I| = {orth:e}, det = {det}"
            )));
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self(self.0 * other.0)
    }

    /// Shepperd's method; returns the representative with `w >= 0`.
    pub fn to_quaternion(&self) -> UnitQuaternion {
        let m = &self.0;
        let trace = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
        let v = if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            [
                0.25 * s,
                (m[(2, 1)] - m[(1, 2)]) / s,
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(1, 0)] - m[(0, 1)]) / s,
            ]
        } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
            let s = (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt() * 2.0;
            [
                (m[(2, 1)] - m[(1, 2)]) / s,
                0.25 * s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
            ]
        } else if m[(1, 1)] > m[(2, 2)] {
            let s = (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt() * 2.0;
            [
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                0.25 * s,
                (m[(1, 2)] + m[(2, 1)]) / s,
            ]
        } else {
            let s = (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt() * 2.0;
            [
                (m[(1, 0)] - m[(0, 1)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
                (m[(1, 2)] + m[(2, 1)]) / s,
                0.25 * s,
            ]
        };
        let q = UnitQuaternion::from_vector(v).expect("rotation matrix yields a non-zero quaternion");
        if q.w < 0.0 {
            -q
        } else {
            q
        }
    }
}

/// Object pose: anisotropic scale, then rotation, then translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    scale: Vec3,
    rotation: UnitQuaternion,
    translation: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoseDirection {
    Forward,
    Inverse,
}

impl Pose {
    pub fn new(scale: Vec3, rotation: UnitQuaternion, translation: Vec3) -> Result<Self> {
        if !scale.iter().all(|c| c.is_finite() && *c > 0.0) {
            return Err(Error::InvalidPose(format!(
                "scale components must be positive and finite, got {:?}",
                scale.as_slice()
            )));
        }
        if !translation.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidPose("translation must be finite".into()));
        }
        if !rotation.to_array().iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidPose("rotation must be finite".into()));
        }
        Ok(Self {
            scale,
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            scale: Vec3::new(1.0, 1.0, 1.0),
            rotation: UnitQuaternion::IDENTITY,
            translation: Vec3::zeros(),
        }
    }

    pub fn scale(&self) -> &Vec3 {
        &self.scale
    }
    pub fn rotation(&self) -> &UnitQuaternion {
        &self.rotation
    }
    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    /// `R(q) diag(c) p + t`
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation.to_rotation_matrix().apply(&self.scale.component_mul(p)) + self.translation
    }

    /// `diag(1/c) R(q)^T (p - t)`
    pub fn apply_inverse(&self, p: &Vec3) -> Vec3 {
        let local = self.rotation.to_rotation_matrix().transpose().apply(&(p - self.translation));
        local.component_div(&self.scale)
    }

    pub fn transform(&self, p: &Vec3, direction: PoseDirection) -> Vec3 {
        match direction {
            PoseDirection::Forward => self.apply(p),
            PoseDirection::Inverse => self.apply_inverse(p),
        }
    }

    /// Precomputed affine map for repeated use.
    pub fn affine(&self) -> PoseAffine {
        let r = *self.rotation.to_rotation_matrix().matrix();
        let linear = r * Matrix3::from_diagonal(&self.scale);
        let inv_linear = Matrix3::from_diagonal(&self.scale.map(|c| 1.0 / c)) * r.transpose();
        PoseAffine {
            linear,
            inv_linear,
            translation: self.translation,
        }
    }
}

/// `forward(p) = linear p + t`, `inverse(p) = inv_linear (p - t)`.
#[derive(Debug, Clone, Copy)]
pub struct PoseAffine {
    pub linear: Matrix3<f64>,
    pub inv_linear: Matrix3<f64>,
    pub translation: Vec3,
}

impl PoseAffine {
    pub fn forward(&self, p: &Vec3) -> Vec3 {
        self.linear * p + self.translation
    }
    pub fn inverse(&self, p: &Vec3) -> Vec3 {
        self.inv_linear * (p - self.translation)
    }
    pub fn inverse_direction(&self, d: &Vec3) -> Vec3 {
        self.inv_linear * d
    }
}

pub fn apply_pose(pose: &Pose, p: &Vec3, direction: PoseDirection) -> Vec3 {
    pose.transform(p, direction)
}

/// Pinhole intrinsics. Pixel `(col, row)` samples the image plane at
/// `u = col`, `v = row`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraSpec", into = "CameraSpec")]
pub struct Camera {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
}

#[derive(Serialize, Deserialize)]
struct CameraSpec {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
}

impl TryFrom<CameraSpec> for Camera {
    type Error = Error;
    fn try_from(s: CameraSpec) -> Result<Self> {
        Camera::new(s.fx, s.fy, s.cx, s.cy, s.width, s.height)
    }
}

impl From<Camera> for CameraSpec {
    fn from(c: Camera) -> Self {
        CameraSpec {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
        }
    }
}

impl Default for Camera {
    fn default() -> Self {
        Self {
            fx: 519.0,
            fy: 519.0,
            cx: 320.0,
            cy: 240.0,
            width: 640,
            height: 480,
        }
    }
}

impl Camera {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        if !(fx.is_finite() && fy.is_finite() && fx > 0.0 && fy > 0.0) {
            return Err(Error::InvalidCamera(format!("focal lengths must be positive, got ({fx}, {fy})")));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidCamera("image size must be non-zero".into()));
        }
        if !(cx >= 0.0 && cx < width as f64 && cy >= 0.0 && cy < height as f64) {
            return Err(Error::InvalidCamera(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Default intrinsics rescaled to a smaller (or larger) image.
    pub fn default_with_resolution(width: usize, height: usize) -> Result<Self> {
        let d = Self::default();
        let sx = width as f64 / d.width as f64;
        let sy = height as f64 / d.height as f64;
        Self::new(d.fx * sx, d.fy * sy, d.cx * sx, d.cy * sy, width, height)
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }
    pub fn fy(&self) -> f64 {
        self.fy
    }
    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Ray through pixel `(col, row)` scaled so that its z component is 1;
    /// the ray parameter therefore equals depth.
    pub fn pixel_ray(&self, col: usize, row: usize) -> Vec3 {
        Vec3::new(
            (col as f64 - self.cx) / self.fx,
            (row as f64 - self.cy) / self.fy,
            1.0,
        )
    }

    pub fn backproject(&self, u: f64, v: f64, depth: f64) -> Result<Vec3> {
        if !(depth.is_finite() && depth > 0.0) {
            return Err(Error::NonPositiveDepth(depth));
        }
        Ok(Vec3::new(
            (u - self.cx) * depth / self.fx,
            (v - self.cy) * depth / self.fy,
            depth,
        ))
    }

    /// Returns `(u, v, depth)`.
    pub fn project(&self, p: &Vec3) -> Result<(f64, f64, f64)> {
        if !(p.z.is_finite() && p.z > 0.0) {
            return Err(Error::NonPositiveDepth(p.z));
        }
        Ok((
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
            p.z,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_quat(rng: &mut impl Rng) -> UnitQuaternion {
        loop {
            let v: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let n = v.iter().map(|c| c * c).sum::<f64>();
            if n > 1e-3 && n <= 1.0 {
                return UnitQuaternion::from_vector(v).unwrap();
            }
        }
    }

    /// Rodrigues' formula, independent of the quaternion path.
    fn rodrigues(axis: Vec3, angle: f64) -> Matrix3<f64> {
        let k = axis.normalize();
        let kx = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
        Matrix3::identity() + angle.sin() * kx + (1.0 - angle.cos()) * kx * kx
    }

    #[test]
    fn identity_quaternion_maps_to_identity() {
        let m = quat_to_matrix(&UnitQuaternion::IDENTITY);
        assert_eq!(*m.matrix(), Matrix3::identity());
    }

    #[test]
    fn thirty_degrees_about_z_matches_rodrigues() {
        let h = 15f64.to_radians();
        let q = UnitQuaternion::new(h.cos(), 0.0, 0.0, h.sin()).unwrap();
        let m = quat_to_matrix(&q);
        let oracle = rodrigues(Vec3::z(), 30f64.to_radians());
        assert!((m.matrix() - oracle).abs().max() < 1e-12);
    }

    #[test]
    fn half_turn_about_z_is_diag() {
        let q = UnitQuaternion::new(0.0, 0.0, 0.0, 1.0).unwrap();
        let m = quat_to_matrix(&q);
        assert_eq!(*m.matrix(), Matrix3::from_diagonal(&Vec3::new(-1.0, -1.0, 1.0)));
    }

    #[test]
    fn non_unit_quaternion_rejected() {
        assert!(matches!(
            UnitQuaternion::new(1.0, 0.1, 0.0, 0.0),
            Err(Error::NonUnitQuaternion { .. })
        ));
        assert!(UnitQuaternion::new(1.0 + 5e-7, 0.0, 0.0, 0.0).is_ok());
    }

    #[test]
    fn matrix_invariants_and_sandwich_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let q = random_quat(&mut rng);
            let r = q.to_rotation_matrix();
            assert!(RotationMatrix::from_matrix(*r.matrix()).is_ok());
            let v = Vec3::new(rng.random(), rng.random(), rng.random());
            assert!((r.apply(&v) - q.rotate(&v)).norm() < 1e-12);
            let back = r.to_quaternion();
            assert!(rotation_geodesic(&q, &back) < 1e-7);
        }
    }

    #[test]
    fn geodesic_examples() {
        let q = UnitQuaternion::about_vertical(0.7);
        assert_eq!(rotation_geodesic(&q, &q), 0.0);
        assert_eq!(rotation_geodesic(&q, &-q), 0.0);
        let h = 15f64.to_radians();
        let z30 = UnitQuaternion::new(h.cos(), 0.0, 0.0, h.sin()).unwrap();
        let d = rotation_geodesic(&UnitQuaternion::IDENTITY, &z30);
        assert!((d - PI / 6.0).abs() < 1e-9);
    }

    #[test]
    fn geodesic_is_a_metric_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let (a, b, c) = (random_quat(&mut rng), random_quat(&mut rng), random_quat(&mut rng));
            let ab = rotation_geodesic(&a, &b);
            assert_eq!(ab, rotation_geodesic(&b, &a));
            assert!((0.0..=PI).contains(&ab));
            assert!(ab <= rotation_geodesic(&a, &c) + rotation_geodesic(&c, &b) + 1e-12);
        }
    }

    #[test]
    fn pose_examples() {
        let p = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(Pose::identity().apply(&p), p);
        let pose = Pose::new(Vec3::new(2.0, 2.0, 2.0), UnitQuaternion::IDENTITY, Vec3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(
            apply_pose(&pose, &Vec3::new(0.5, 0.0, 0.0), PoseDirection::Forward),
            Vec3::new(1.0, 0.0, 1.0)
        );
    }

    #[test]
    fn pose_round_trip_on_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let scale = Vec3::new(rng.random_range(0.2..3.0), rng.random_range(0.2..3.0), rng.random_range(0.2..3.0));
            let t = Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let pose = Pose::new(scale, random_quat(&mut rng), t).unwrap();
            let p = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let back = pose.apply_inverse(&pose.apply(&p));
            assert!((back - p).norm() < 1e-9);
            let aff = pose.affine();
            assert!((aff.inverse(&aff.forward(&p)) - p).norm() < 1e-9);
        }
    }

    #[test]
    fn degenerate_poses_rejected() {
        let q = UnitQuaternion::IDENTITY;
        assert!(Pose::new(Vec3::new(0.0, 1.0, 1.0), q, Vec3::zeros()).is_err());
        assert!(Pose::new(Vec3::new(-1.0, 1.0, 1.0), q, Vec3::zeros()).is_err());
        assert!(Pose::new(Vec3::new(1.0, f64::NAN, 1.0), q, Vec3::zeros()).is_err());
        assert!(Pose::new(Vec3::new(1.0, 1.0, 1.0), q, Vec3::new(f64::INFINITY, 0.0, 0.0)).is_err());
    }

    #[test]
    fn camera_examples() {
        let cam = Camera::default();
        assert_eq!(cam.backproject(320.0, 240.0, 2.0).unwrap(), Vec3::new(0.0, 0.0, 2.0));
        let cam = Camera::new(100.0, 100.0, 32.0, 24.0, 64, 48).unwrap();
        assert_eq!(cam.backproject(132.0, 24.0, 1.0).unwrap(), Vec3::new(1.0, 0.0, 1.0));
        assert!(cam.backproject(1.0, 1.0, 0.0).is_err());
        assert!(cam.project(&Vec3::new(0.0, 0.0, -1.0)).is_err());
    }

    #[test]
    fn camera_round_trip() {
        let cam = Camera::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let (u, v, d) = (rng.random_range(0.0..640.0), rng.random_range(0.0..480.0), rng.random_range(0.1..10.0));
            let p = cam.backproject(u, v, d).unwrap();
            let (u2, v2, d2) = cam.project(&p).unwrap();
            assert!((u - u2).abs() < 1e-9 && (v - v2).abs() < 1e-9 && (d - d2).abs() < 1e-9);
        }
    }

    #[test]
    fn invalid_cameras_rejected() {
        assert!(Camera::new(0.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(Camera::new(1.0, 1.0, 4.0, 1.0, 4, 4).is_err());
        let json = r#"{"fx":1.0,"fy":1.0,"cx":9.0,"cy":1.0,"width":4,"height":4}"#;
        assert!(serde_json::from_str::<Camera>(json).is_err());
    }
}
