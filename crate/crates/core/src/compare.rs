//! Cross-representation evaluation. A factored scene, a visible-depth map
//! and a scene occupancy grid are each scored on five tasks: visible depth,
//! scene voxels, individual objects, modal layout and amodal layout.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::metrics::{layout_depth_error, visible_surface_error, LayoutMode, SurfaceError};
use crate::registration::{icp, IcpConfig};
use crate::render::{
    depth_to_pointcloud, depth_to_pointcloud_masked, pointcloud_to_voxels, render_analytic_with_ids,
    render_depth_voxel, render_scene_grid, DepthMap, SurfaceId,
};
use crate::scene::{analytic_scene_voxels, compose_scene_voxels, FactoredScene, SceneObject};
use crate::voxel::{voxel_centers, voxel_iou, GridSpec, VoxelGrid, DEFAULT_TAU};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Panel {
    VisibleDepth,
    SceneVoxels,
    Objects,
    ModalLayout,
    AmodalLayout,
}

impl Panel {
    pub const ALL: [Panel; 5] = [
        Panel::VisibleDepth,
        Panel::SceneVoxels,
        Panel::Objects,
        Panel::ModalLayout,
        Panel::AmodalLayout,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Panel::VisibleDepth => "visible-depth",
            Panel::SceneVoxels => "scene-voxels",
            Panel::Objects => "objects",
            Panel::ModalLayout => "modal-layout",
            Panel::AmodalLayout => "amodal-layout",
        }
    }

    /// Scene voxels report IoU (higher is better); every other panel an error.
    pub fn higher_is_better(&self) -> bool {
        matches!(self, Panel::SceneVoxels)
    }

    pub fn unit(&self) -> &'static str {
        match self {
            Panel::SceneVoxels => "iou",
            Panel::Objects => "normalized-fitness",
            _ => "meters",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Factored,
    Depth,
    Voxels,
}

impl Representation {
    pub const ALL: [Representation; 3] = [Representation::Factored, Representation::Depth, Representation::Voxels];

    pub fn name(&self) -> &'static str {
        match self {
            Representation::Factored => "factored",
            Representation::Depth => "depth",
            Representation::Voxels => "voxels",
        }
    }
}

/// The three competing representations of one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationSet {
    pub factored: FactoredScene,
    pub depth: DepthMap,
    pub voxels: VoxelGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub tau: f64,
    pub icp: IcpConfig,
    /// Count the room shell as scene occupancy. When false, scene voxels are
    /// object occupancy only and depth contributes only pixels that see an
    /// object in the ground truth.
    pub include_layout_voxels: bool,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            icp: IcpConfig::default(),
            include_layout_voxels: true,
        }
    }
}

/// Ground-truth scene occupancy: analytic object voxels, plus the room shell
/// when requested.
pub fn gt_scene_voxels(gt: &FactoredScene, spec: &GridSpec, include_layout: bool) -> Result<VoxelGrid> {
    let mut grid = analytic_scene_voxels(gt, spec)?;
    if include_layout {
        let room_only = FactoredScene {
            objects: Vec::new(),
            ..gt.clone()
        };
        grid.max_merge(&compose_scene_voxels(&room_only, spec, DEFAULT_TAU, true)?)?;
    }
    Ok(grid)
}

/// Each representation computed exactly from the ground truth: the scene
/// itself, its visible depth, and its scene occupancy.
pub fn oracle_representations(gt: &FactoredScene, cfg: &CompareConfig) -> Result<RepresentationSet> {
    Ok(RepresentationSet {
        factored: gt.clone(),
        depth: render_analytic_with_ids(gt, true)?.depth,
        voxels: gt_scene_voxels(gt, &GridSpec::scene_default(), cfg.include_layout_voxels)?,
    })
}

/// One scored (panel, representation, instance) triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanelRecord {
    pub panel: Panel,
    pub representation: Representation,
    /// Object index for the objects panel, 0 otherwise.
    pub instance: usize,
    pub value: f64,
    /// The representation produced no geometry for this task; `value` is
    /// the worst possible score.
    pub empty_prediction: bool,
}

fn posed_shape_points(obj: &SceneObject, tau: f64) -> Result<Vec<Vec3>> {
    let aff = obj.pose.affine();
    Ok(voxel_centers(obj.shape(), tau)?.iter().map(|p| aff.forward(p)).collect())
}

fn surface_record(panel: Panel, rep: Representation, e: SurfaceError) -> PanelRecord {
    PanelRecord {
        panel,
        representation: rep,
        instance: 0,
        value: e.value,
        empty_prediction: e.empty_prediction,
    }
}

/// Scores every representation on every panel against the ground truth.
/// `gt` must carry a room and analytic primitives for each object.
pub fn evaluate_representations(gt: &FactoredScene, reps: &RepresentationSet, cfg: &CompareConfig) -> Result<Vec<PanelRecord>> {
    if gt.room.is_none() {
        return Err(Error::arg("cross-representation evaluation needs the ground-truth room"));
    }
    let cam = gt.camera;
    if reps.factored.camera != cam || *reps.depth.camera() != cam {
        return Err(Error::InvalidCamera("representations must share the ground-truth camera".into()));
    }
    let spec = GridSpec::scene_default();
    if *reps.voxels.spec() != spec {
        return Err(Error::GridMismatch("voxel representation must use the default scene grid".into()));
    }
    let tau = cfg.tau;
    let gt_render = render_analytic_with_ids(gt, true)?;
    let gt_cloud = depth_to_pointcloud(&gt_render.depth);

    let factored_depth = render_depth_voxel(&reps.factored, tau)?;
    let voxel_depth = render_scene_grid(&reps.voxels, &cam, tau)?;
    let clouds = [
        (Representation::Factored, depth_to_pointcloud(&factored_depth)),
        (Representation::Depth, depth_to_pointcloud(&reps.depth)),
        (Representation::Voxels, voxel_centers(&reps.voxels, tau)?),
    ];

    let mut out = Vec::new();
    for (rep, cloud) in &clouds {
        out.push(surface_record(Panel::VisibleDepth, *rep, visible_surface_error(cloud, &gt_cloud)?));
    }

    let gt_vox = gt_scene_voxels(gt, &spec, cfg.include_layout_voxels)?;
    let depth_points = if cfg.include_layout_voxels {
        depth_to_pointcloud(&reps.depth)
    } else {
        depth_to_pointcloud_masked(&reps.depth, |i| matches!(gt_render.surface[i], SurfaceId::Object(_)))
    };
    let vox_preds = [
        (Representation::Factored, compose_scene_voxels(&reps.factored, &spec, tau, cfg.include_layout_voxels)?),
        (Representation::Depth, pointcloud_to_voxels(&depth_points, &spec).grid),
        (Representation::Voxels, reps.voxels.clone()),
    ];
    for (rep, grid) in &vox_preds {
        out.push(PanelRecord {
            panel: Panel::SceneVoxels,
            representation: *rep,
            instance: 0,
            value: voxel_iou(grid, &gt_vox, tau)?,
            empty_prediction: grid.occupied_count(tau) == 0,
        });
    }

    let factored_objects: Vec<Vec3> = reps
        .factored
        .objects
        .iter()
        .map(|o| posed_shape_points(o, tau))
        .collect::<Result<Vec<_>>>()?
        .concat();
    let object_dst = [
        (Representation::Factored, &factored_objects),
        (Representation::Depth, &clouds[1].1),
        (Representation::Voxels, &clouds[2].1),
    ];
    let object_records: Vec<PanelRecord> = gt
        .objects
        .par_iter()
        .enumerate()
        .map(|(n, obj)| {
            let src = posed_shape_points(obj, DEFAULT_TAU)?;
            let (lo, hi) = obj.world_bounds();
            let size = (hi - lo).norm();
            object_dst
                .iter()
                .map(|(rep, dst)| {
                    let (value, empty) = if dst.is_empty() || src.is_empty() {
                        (f64::INFINITY, true)
                    } else {
                        (icp(&src, dst, &cfg.icp, size)?.fitness, false)
                    };
                    Ok(PanelRecord {
                        panel: Panel::Objects,
                        representation: *rep,
                        instance: n,
                        value,
                        empty_prediction: empty,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .concat();
    out.extend(object_records);

    let layout_preds = [
        (Representation::Factored, reps.factored.layout_depth()?),
        (Representation::Depth, reps.depth.clone()),
        (Representation::Voxels, voxel_depth),
    ];
    for (panel, mode) in [(Panel::ModalLayout, LayoutMode::Modal), (Panel::AmodalLayout, LayoutMode::Amodal)] {
        for (rep, d) in &layout_preds {
            out.push(surface_record(panel, *rep, layout_depth_error(d, gt, mode)?));
        }
    }
    Ok(out)
}

/// Cumulative curve of one panel/representation: sorted values paired with
/// the fraction of instances at least as good. Errors sort ascending, IoU
/// descending.
pub fn cumulative_curve(values: &[f64], higher_is_better: bool) -> Vec<(f64, f64)> {
    let mut v = values.to_vec();
    if higher_is_better {
        v.sort_by(|a, b| b.total_cmp(a));
    } else {
        v.sort_by(f64::total_cmp);
    }
    let n = v.len() as f64;
    v.iter().enumerate().map(|(i, x)| (*x, (i + 1) as f64 / n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Camera;
    use crate::scene::{generate_scene, GeneratorConfig};

    fn small_scene(seed: u64) -> FactoredScene {
        let cfg = GeneratorConfig {
            seed,
            camera: Camera::new(519.0 / 8.0, 519.0 / 8.0, 40.0, 30.0, 80, 60).unwrap(),
            ..GeneratorConfig::default()
        };
        generate_scene(&cfg).unwrap().scene
    }

    fn value(records: &[PanelRecord], panel: Panel, rep: Representation) -> f64 {
        records.iter().find(|r| r.panel == panel && r.representation == rep).unwrap().value
    }

    #[test]
    fn oracle_representations_excel_at_their_own_task() {
        let gt = small_scene(4);
        let cfg = CompareConfig::default();
        let reps = oracle_representations(&gt, &cfg).unwrap();
        let rec = evaluate_representations(&gt, &reps, &cfg).unwrap();
        assert_eq!(rec.len(), 3 * 4 + 3 * gt.objects.len());
        assert_eq!(value(&rec, Panel::VisibleDepth, Representation::Depth), 0.0);
        assert_eq!(value(&rec, Panel::SceneVoxels, Representation::Voxels), 1.0);
        // disparity storage round-trips depth to within an ulp
        assert!(value(&rec, Panel::AmodalLayout, Representation::Factored) < 1e-12);
        assert!(value(&rec, Panel::SceneVoxels, Representation::Factored) > value(&rec, Panel::SceneVoxels, Representation::Depth));
        for r in rec.iter().filter(|r| r.panel == Panel::Objects && r.representation == Representation::Factored) {
            assert!(r.value < 1e-9, "{r:?}");
        }
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let gt = small_scene(5);
        let cfg = CompareConfig::default();
        let mut reps = oracle_representations(&gt, &cfg).unwrap();
        reps.depth = DepthMap::empty(Camera::default_with_resolution(8, 6).unwrap());
        assert!(evaluate_representations(&gt, &reps, &cfg).is_err());
    }

    #[test]
    fn curves_are_monotone() {
        let c = cumulative_curve(&[0.3, 0.1, 0.2], false);
        assert_eq!(c, vec![(0.1, 1.0 / 3.0), (0.2, 2.0 / 3.0), (0.3, 1.0)]);
        let c = cumulative_curve(&[0.3, 0.9], true);
        assert_eq!(c, vec![(0.9, 0.5), (0.3, 1.0)]);
    }
}
