//! JSON report records emitted by the command-line tool. Angles are
//! radians; fields ending in `_deg` are degree copies for reading.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_6;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compare::{cumulative_curve, evaluate_representations, CompareConfig, Panel, PanelRecord, Representation, RepresentationSet};
use crate::detection::{ap_sweep_tables, build_tables, evaluate_per_class, ImageDetections, SweepRow, ThresholdTuple};
use crate::error::{Error, Result};
use crate::losses::KernelCheck;
use crate::metrics::{component_errors, layout_depth_error, summarize, Direction, LayoutMode, SummaryStats};
use crate::scene::FactoredScene;

pub const REPORT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedEntry {
    pub file: String,
    pub seed: u64,
    pub objects: usize,
    pub requested_objects: usize,
    pub placement_shortfall: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenReport {
    pub report: String,
    pub version: u64,
    pub base_seed: u64,
    pub scenes: Vec<GeneratedEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectEvalRecord {
    pub scene: String,
    pub index: usize,
    pub class: Option<String>,
    pub shape_iou: f64,
    pub rot_err_rad: f64,
    pub trans_err_m: f64,
    pub scale_err_log2: f64,
    pub box_iou: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub shape_iou: SummaryStats,
    pub rot_err_rad: SummaryStats,
    /// Median rotation error in degrees, for reading only.
    pub rot_err_median_deg: f64,
    pub trans_err_m: SummaryStats,
    pub scale_err_log2: SummaryStats,
    pub box_iou: Option<SummaryStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutEvalRecord {
    pub scene: String,
    pub amodal_error_m: f64,
    pub empty_prediction: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub report: String,
    pub version: u64,
    pub tau: f64,
    pub objects: Vec<ObjectEvalRecord>,
    pub summary: Option<EvalSummary>,
    pub layout: Vec<LayoutEvalRecord>,
    pub layout_median_m: Option<f64>,
}

/// A prediction and its ground truth, named for reporting.
pub struct ScenePair<'a> {
    pub name: String,
    pub pred: &'a FactoredScene,
    pub gt: &'a FactoredScene,
}

/// Component errors of objects paired by index, with summaries at the
/// default detection thresholds, and the amodal layout error of every
/// prediction that carries a layout.
pub fn evaluate_pairs(pairs: &[ScenePair<'_>], tau: f64) -> Result<EvalReport> {
    let mut objects = Vec::new();
    let mut layout = Vec::new();
    for p in pairs {
        if p.pred.objects.len() != p.gt.objects.len() {
            return Err(Error::DimensionMismatch {
                expected: p.gt.objects.len(),
                actual: p.pred.objects.len(),
            });
        }
        for (i, (a, b)) in p.pred.objects.iter().zip(&p.gt.objects).enumerate() {
            let e = component_errors(a, b, tau)?;
            objects.push(ObjectEvalRecord {
                scene: p.name.clone(),
                index: i,
                class: b.class.map(|c| c.name().to_string()),
                shape_iou: e.shape_iou,
                rot_err_rad: e.rot_err,
                trans_err_m: e.trans_err,
                scale_err_log2: e.scale_err,
                box_iou: e.box_iou,
            });
        }
        if p.pred.layout.is_some() && (p.gt.room.is_some() || p.gt.layout.is_some()) {
            let e = layout_depth_error(&p.pred.layout_depth()?, p.gt, LayoutMode::Amodal)?;
            layout.push(LayoutEvalRecord {
                scene: p.name.clone(),
                amodal_error_m: e.value,
                empty_prediction: e.empty_prediction,
            });
        }
    }
    let col = |f: fn(&ObjectEvalRecord) -> f64| objects.iter().map(f).collect::<Vec<_>>();
    let summary = if objects.is_empty() {
        None
    } else {
        let rot = summarize(&col(|o| o.rot_err_rad), FRAC_PI_6, Direction::Below)?;
        let boxes: Vec<f64> = objects.iter().filter_map(|o| o.box_iou).collect();
        Some(EvalSummary {
            shape_iou: summarize(&col(|o| o.shape_iou), 0.25, Direction::Above)?,
            rot_err_median_deg: rot.median.to_degrees(),
            rot_err_rad: rot,
            trans_err_m: summarize(&col(|o| o.trans_err_m), 1.0, Direction::Below)?,
            scale_err_log2: summarize(&col(|o| o.scale_err_log2), 0.5, Direction::Below)?,
            box_iou: if boxes.is_empty() { None } else { Some(summarize(&boxes, 0.5, Direction::Above)?) },
        })
    };
    let layout_median_m = if layout.is_empty() {
        None
    } else {
        Some(summarize(&layout.iter().map(|l| l.amodal_error_m).collect::<Vec<_>>(), 0.0, Direction::Below)?.median)
    };
    Ok(EvalReport {
        report: "eval".into(),
        version: REPORT_VERSION,
        tau,
        objects,
        summary,
        layout,
        layout_median_m,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApReport {
    pub report: String,
    pub version: u64,
    pub tau: f64,
    pub thresholds: ThresholdTuple,
    pub images: usize,
    pub detections: usize,
    pub ground_truth: usize,
    pub ap: f64,
    pub sweep: Vec<SweepRow>,
    pub per_class: BTreeMap<String, f64>,
}

pub fn ap_report(images: &[ImageDetections], thresholds: &ThresholdTuple, tau: f64, per_class: bool) -> Result<ApReport> {
    let tables = build_tables(images, tau)?;
    let sweep = ap_sweep_tables(&tables, thresholds)?;
    let per_class = if per_class {
        evaluate_per_class(images, thresholds, tau)?
            .into_iter()
            .map(|(c, o)| (c.name().to_string(), o.ap))
            .collect()
    } else {
        BTreeMap::new()
    };
    Ok(ApReport {
        report: "ap".into(),
        version: REPORT_VERSION,
        tau,
        thresholds: *thresholds,
        images: images.len(),
        detections: images.iter().map(|i| i.detections.len()).sum(),
        ground_truth: images.iter().map(|i| i.ground_truth.len()).sum(),
        ap: sweep[0].ap,
        sweep,
        per_class,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub scene: String,
    #[serde(flatten)]
    pub record: PanelRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSummary {
    pub panel: Panel,
    pub representation: Representation,
    pub unit: String,
    pub count: usize,
    pub empty_predictions: usize,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub report: String,
    pub version: u64,
    pub config: CompareConfig,
    pub scenes: usize,
    pub summary: Vec<PanelSummary>,
    pub records: Vec<SceneRecord>,
}

/// One row of a cumulative curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub panel: String,
    pub representation: String,
    pub unit: String,
    pub value: f64,
    pub fraction: f64,
}

/// Scores every scene in parallel (output order follows the input).
pub fn compare_report(scenes: &[(String, FactoredScene, RepresentationSet)], cfg: &CompareConfig) -> Result<CompareReport> {
    let per_scene: Vec<Vec<SceneRecord>> = scenes
        .par_iter()
        .map(|(name, gt, reps)| {
            Ok(evaluate_representations(gt, reps, cfg)?
                .into_iter()
                .map(|record| SceneRecord {
                    scene: name.clone(),
                    record,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let records: Vec<SceneRecord> = per_scene.concat();
    let mut summary = Vec::new();
    for panel in Panel::ALL {
        for rep in Representation::ALL {
            let sel: Vec<&PanelRecord> = records
                .iter()
                .map(|r| &r.record)
                .filter(|r| r.panel == panel && r.representation == rep)
                .collect();
            if sel.is_empty() {
                continue;
            }
            let values: Vec<f64> = sel.iter().map(|r| r.value).collect();
            let dir = if panel.higher_is_better() { Direction::Above } else { Direction::Below };
            summary.push(PanelSummary {
                panel,
                representation: rep,
                unit: panel.unit().into(),
                count: sel.len(),
                empty_predictions: sel.iter().filter(|r| r.empty_prediction).count(),
                median: summarize(&values, 0.0, dir)?.median,
            });
        }
    }
    Ok(CompareReport {
        report: "compare-reps".into(),
        version: REPORT_VERSION,
        config: *cfg,
        scenes: scenes.len(),
        summary,
        records,
    })
}

pub fn curve_rows(report: &CompareReport) -> Vec<CurveRow> {
    let mut rows = Vec::new();
    for panel in Panel::ALL {
        for rep in Representation::ALL {
            let values: Vec<f64> = report
                .records
                .iter()
                .map(|r| &r.record)
                .filter(|r| r.panel == panel && r.representation == rep)
                .map(|r| r.value)
                .collect();
            for (value, fraction) in cumulative_curve(&values, panel.higher_is_better()) {
                rows.push(CurveRow {
                    panel: panel.name().into(),
                    representation: rep.name().into(),
                    unit: panel.unit().into(),
                    value,
                    fraction,
                });
            }
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub report: String,
    pub version: u64,
    pub seed: u64,
    pub points: usize,
    pub step: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub kernels: Vec<KernelCheck>,
}

pub fn grad_check_report(seed: u64, points: usize, step: f64, tolerance: f64) -> Result<GradCheckReport> {
    let kernels = crate::losses::gradient_suite(seed, points, step)?;
    Ok(GradCheckReport {
        report: "grad-check".into(),
        version: REPORT_VERSION,
        seed,
        points,
        step,
        tolerance,
        passed: kernels.iter().all(|k| k.max_rel_error < tolerance),
        kernels,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalLabelRecord {
    pub index: usize,
    pub label: String,
    pub gt: Option<usize>,
    pub iou: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalReport {
    pub report: String,
    pub version: u64,
    pub foreground: usize,
    pub background: usize,
    pub ignored: usize,
    pub labels: Vec<ProposalLabelRecord>,
}

pub fn proposal_report(labels: &[crate::detection::ProposalLabel]) -> ProposalReport {
    use crate::detection::ProposalLabel;
    let records: Vec<ProposalLabelRecord> = labels
        .iter()
        .enumerate()
        .map(|(index, l)| match l {
            ProposalLabel::Foreground { gt, iou } => ProposalLabelRecord {
                index,
                label: "foreground".into(),
                gt: Some(*gt),
                iou: Some(*iou),
            },
            ProposalLabel::Background => ProposalLabelRecord {
                index,
                label: "background".into(),
                gt: None,
                iou: None,
            },
            ProposalLabel::Ignore => ProposalLabelRecord {
                index,
                label: "ignore".into(),
                gt: None,
                iou: None,
            },
        })
        .collect();
    let count = |name: &str| records.iter().filter(|r| r.label == name).count();
    ProposalReport {
        report: "proposals".into(),
        version: REPORT_VERSION,
        foreground: count("foreground"),
        background: count("background"),
        ignored: count("ignore"),
        labels: records,
    }
}
