//! Per-object component errors, their summaries, and the point-cloud
//! surface errors used to compare scene representations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rotation_geodesic, Vec3};
use crate::registration::NnIndex;
use crate::render::{depth_to_pointcloud, depth_to_pointcloud_masked, render_analytic_with_ids, DepthMap, SurfaceId};
use crate::scene::{FactoredScene, SceneObject};
use crate::voxel::voxel_iou;

/// Errors between a predicted and a ground-truth object. Rotation in
/// radians, translation in meters, scale as mean absolute log2 ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentErrors {
    pub shape_iou: f64,
    pub rot_err: f64,
    pub trans_err: f64,
    pub scale_err: f64,
    pub box_iou: Option<f64>,
}

pub fn translation_error(a: &Vec3, b: &Vec3) -> f64 {
    (a - b).norm()
}

/// (1/3) sum_i |log2 a_i - log2 b_i|
pub fn scale_error(a: &Vec3, b: &Vec3) -> f64 {
    (0..3).map(|i| (a[i].log2() - b[i].log2()).abs()).sum::<f64>() / 3.0
}

pub fn component_errors(pred: &SceneObject, gt: &SceneObject, tau: f64) -> Result<ComponentErrors> {
    Ok(ComponentErrors {
        shape_iou: voxel_iou(pred.shape(), gt.shape(), tau)?,
        rot_err: rotation_geodesic(pred.pose.rotation(), gt.pose.rotation()),
        trans_err: translation_error(pred.pose.translation(), gt.pose.translation()),
        scale_err: scale_error(pred.pose.scale(), gt.pose.scale()),
        box_iou: match (pred.box2d, gt.box2d) {
            (Some(a), Some(b)) => Some(a.iou(&b)),
            _ => None,
        },
    })
}

/// Which side of the threshold counts as a success. Both are strict:
/// `Below` means `error < delta`, `Above` means `overlap > delta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Below,
    Above,
}

impl Direction {
    pub fn passes(&self, value: f64, delta: f64) -> bool {
        match self {
            Direction::Below => value < delta,
            Direction::Above => value > delta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub median: f64,
    pub fraction_within: f64,
    pub threshold: f64,
    pub direction: Direction,
    pub count: usize,
}

/// Median (lower middle for even lengths) and fraction passing `delta`.
pub fn summarize(errors: &[f64], delta: f64, direction: Direction) -> Result<SummaryStats> {
    if errors.is_empty() {
        return Err(Error::Empty("cannot summarize an empty error list"));
    }
    if errors.iter().any(|e| e.is_nan()) {
        return Err(Error::arg("error list contains NaN"));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let passing = errors.iter().filter(|e| direction.passes(**e, delta)).count();
    Ok(SummaryStats {
        median: sorted[(sorted.len() - 1) / 2],
        fraction_within: passing as f64 / errors.len() as f64,
        threshold: delta,
        direction,
        count: errors.len(),
    })
}

/// Mean point-to-nearest-point distance. An empty prediction has no finite
/// error; it is reported as +inf with `empty_prediction` set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceError {
    pub value: f64,
    pub empty_prediction: bool,
}

/// Mean over predicted points of the distance to the nearest ground-truth
/// point (prediction to ground truth only).
pub fn visible_surface_error(pred: &[Vec3], gt: &[Vec3]) -> Result<SurfaceError> {
    if gt.is_empty() {
        return Err(Error::Empty("ground-truth point cloud"));
    }
    if pred.is_empty() {
        return Ok(SurfaceError {
            value: f64::INFINITY,
            empty_prediction: true,
        });
    }
    let index = NnIndex::build(gt)?;
    Ok(SurfaceError {
        value: directed_mean(pred, &index),
        empty_prediction: false,
    })
}

fn directed_mean(from: &[Vec3], to: &NnIndex) -> f64 {
    from.iter().map(|p| to.nearest(p).distance).sum::<f64>() / from.len() as f64
}

/// Symmetric Chamfer distance: the average of both directed means.
pub fn chamfer_distance(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("Chamfer distance needs two non-empty clouds"));
    }
    let (ia, ib) = (NnIndex::build(a)?, NnIndex::build(b)?);
    Ok(0.5 * (directed_mean(a, &ib) + directed_mean(b, &ia)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayoutMode {
    /// Only pixels where the room is the visible surface.
    Modal,
    /// Every pixel, as if there were no objects.
    Amodal,
}

/// Surface error of a predicted depth map against the ground-truth layout.
/// Modal mode masks both clouds to pixels where the room is visible in the
/// full ground-truth render.
pub fn layout_depth_error(pred: &DepthMap, gt_scene: &FactoredScene, mode: LayoutMode) -> Result<SurfaceError> {
    if pred.camera() != &gt_scene.camera {
        return Err(Error::InvalidCamera("prediction and ground truth use different cameras".into()));
    }
    match mode {
        LayoutMode::Amodal => {
            let gt = if gt_scene.room.is_some() {
                render_analytic_with_ids(gt_scene, false)?.depth
            } else {
                gt_scene.layout_depth()?
            };
            visible_surface_error(&depth_to_pointcloud(pred), &depth_to_pointcloud(&gt))
        }
        LayoutMode::Modal => {
            if gt_scene.room.is_none() {
                return Err(Error::arg("modal layout evaluation needs the room geometry"));
            }
            let full = render_analytic_with_ids(gt_scene, true)?;
            let is_room = |idx: usize| full.surface[idx] == SurfaceId::Room;
            let gt = depth_to_pointcloud_masked(&full.depth, is_room);
            visible_surface_error(&depth_to_pointcloud_masked(pred, is_room), &gt)
        }
    }
}
