//! Proposal labelling, five-predicate detection matching and average
//! precision, including the one-predicate relaxation sweep.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_6;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{component_errors, ComponentErrors};
use crate::scene::{Box2d, ObjectClass, SceneObject};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Predicate {
    Box2d,
    Shape,
    Rotation,
    Translation,
    Scale,
}

impl Predicate {
    pub const ALL: [Predicate; 5] = [
        Predicate::Box2d,
        Predicate::Shape,
        Predicate::Rotation,
        Predicate::Translation,
        Predicate::Scale,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Predicate::Box2d => "box2d",
            Predicate::Shape => "shape",
            Predicate::Rotation => "rot",
            Predicate::Translation => "trans",
            Predicate::Scale => "scale",
        }
    }
}

/// Detection thresholds; `None` is a wildcard. A detection is a true
/// positive when box IoU > `box_iou`, shape IoU > `shape_iou`, and the
/// rotation, translation and scale errors are below their thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdTuple {
    pub box_iou: Option<f64>,
    pub shape_iou: Option<f64>,
    pub rot: Option<f64>,
    pub trans: Option<f64>,
    pub scale: Option<f64>,
}

impl Default for ThresholdTuple {
    fn default() -> Self {
        Self {
            box_iou: Some(0.5),
            shape_iou: Some(0.25),
            rot: Some(FRAC_PI_6),
            trans: Some(1.0),
            scale: Some(0.5),
        }
    }
}

impl ThresholdTuple {
    pub const WILDCARD: ThresholdTuple = ThresholdTuple {
        box_iou: None,
        shape_iou: None,
        rot: None,
        trans: None,
        scale: None,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, v, iou) in [
            ("box_iou", self.box_iou, true),
            ("shape_iou", self.shape_iou, true),
            ("rot", self.rot, false),
            ("trans", self.trans, false),
            ("scale", self.scale, false),
        ] {
            if let Some(v) = v {
                let ok = v.is_finite() && v > 0.0 && (!iou || v <= 1.0);
                if !ok {
                    return Err(Error::arg(format!("threshold {name} = {v} is out of range")));
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, p: Predicate) -> Option<f64> {
        match p {
            Predicate::Box2d => self.box_iou,
            Predicate::Shape => self.shape_iou,
            Predicate::Rotation => self.rot,
            Predicate::Translation => self.trans,
            Predicate::Scale => self.scale,
        }
    }

    pub fn set(&mut self, p: Predicate, v: Option<f64>) {
        let slot = match p {
            Predicate::Box2d => &mut self.box_iou,
            Predicate::Shape => &mut self.shape_iou,
            Predicate::Rotation => &mut self.rot,
            Predicate::Translation => &mut self.trans,
            Predicate::Scale => &mut self.scale,
        };
        *slot = v;
    }

    /// Copy with one predicate wildcarded.
    pub fn without(&self, p: Predicate) -> Self {
        let mut t = *self;
        t.set(p, None);
        t
    }

    /// Copy keeping only the given predicates.
    pub fn only(&self, keep: &[Predicate]) -> Self {
        let mut t = Self::WILDCARD;
        for &p in keep {
            t.set(p, self.get(p));
        }
        t
    }

    pub fn accepts(&self, e: &ComponentErrors) -> bool {
        let box_ok = match self.box_iou {
            None => true,
            Some(d) => e.box_iou.is_some_and(|v| v > d),
        };
        box_ok
            && self.shape_iou.is_none_or(|d| e.shape_iou > d)
            && self.rot.is_none_or(|d| e.rot_err < d)
            && self.trans.is_none_or(|d| e.trans_err < d)
            && self.scale.is_none_or(|d| e.scale_err < d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "label", rename_all = "lowercase")]
pub enum ProposalLabel {
    Foreground { gt: usize, iou: f64 },
    Background,
    Ignore,
}

/// Foreground when the best IoU with any ground-truth box exceeds 0.7
/// (ties go to the lowest ground-truth index), background below 0.3,
/// ignored otherwise.
pub fn assign_proposals(proposals: &[Box2d], gt_boxes: &[Box2d]) -> Vec<ProposalLabel> {
    proposals
        .iter()
        .map(|p| {
            let mut best: Option<(usize, f64)> = None;
            for (g, b) in gt_boxes.iter().enumerate() {
                let iou = p.iou(b);
                if best.is_none_or(|(_, v)| iou > v) {
                    best = Some((g, iou));
                }
            }
            match best {
                Some((gt, iou)) if iou > 0.7 => ProposalLabel::Foreground { gt, iou },
                Some((_, iou)) if iou >= 0.3 => ProposalLabel::Ignore,
                _ => ProposalLabel::Background,
            }
        })
        .collect()
}

/// One image's detections and ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageDetections {
    pub detections: Vec<SceneObject>,
    pub ground_truth: Vec<SceneObject>,
}

/// All detection/ground-truth component errors for one image, computed once
/// and reused for every threshold tuple.
#[derive(Debug, Clone)]
pub struct PairTable {
    scores: Vec<f64>,
    num_gt: usize,
    errors: Vec<Vec<ComponentErrors>>,
}

impl PairTable {
    pub fn new(image: &ImageDetections, tau: f64) -> Result<Self> {
        let errors = image
            .detections
            .iter()
            .map(|d| image.ground_truth.iter().map(|g| component_errors(d, g, tau)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            scores: image.detections.iter().map(|d| d.score()).collect(),
            num_gt: image.ground_truth.len(),
            errors,
        })
    }

    /// Greedy matching in descending score order (ties keep insertion
    /// order). Returns the matched ground-truth index per detection.
    pub fn match_detections(&self, theta: &ThresholdTuple) -> Vec<Option<usize>> {
        let mut order: Vec<usize> = (0..self.scores.len()).collect();
        order.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]).then(a.cmp(&b)));
        let mut taken = vec![false; self.num_gt];
        let mut matched = vec![None; self.scores.len()];
        for d in order {
            let mut best: Option<(usize, f64)> = None;
            for g in 0..self.num_gt {
                let e = &self.errors[d][g];
                if taken[g] || !theta.accepts(e) {
                    continue;
                }
                // higher key is better
                let key = match theta.box_iou {
                    Some(_) => e.box_iou.unwrap_or(0.0),
                    None => -e.trans_err,
                };
                if best.is_none_or(|(_, k)| key > k) {
                    best = Some((g, key));
                }
            }
            if let Some((g, _)) = best {
                taken[g] = true;
                matched[d] = Some(g);
            }
        }
        matched
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image: usize,
    pub detection: usize,
    pub score: f64,
    pub matched_gt: Option<usize>,
    pub true_positive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    /// Detections in ranking order.
    pub records: Vec<DetectionRecord>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub num_gt: usize,
    pub ap: f64,
}

/// Area under the precision envelope, summed at every recall step.
pub fn average_precision(precision: &[f64], recall: &[f64]) -> f64 {
    let mut envelope = precision.to_vec();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut prev = 0.0;
    let mut ap = 0.0;
    for (p, r) in envelope.iter().zip(recall) {
        ap += (r - prev) * p;
        prev = *r;
    }
    ap
}

fn outcome_from_tables(tables: &[PairTable], theta: &ThresholdTuple) -> EvalOutcome {
    let matches: Vec<Vec<Option<usize>>> = tables.par_iter().map(|t| t.match_detections(theta)).collect();
    let mut records: Vec<DetectionRecord> = tables
        .iter()
        .zip(&matches)
        .enumerate()
        .flat_map(|(image, (t, m))| {
            t.scores.iter().zip(m).enumerate().map(move |(detection, (&score, &matched_gt))| DetectionRecord {
                image,
                detection,
                score,
                matched_gt,
                true_positive: matched_gt.is_some(),
            })
        })
        .collect();
    records.sort_by(|a, b| b.score.total_cmp(&a.score).then((a.image, a.detection).cmp(&(b.image, b.detection))));
    let num_gt: usize = tables.iter().map(|t| t.num_gt).sum();
    let mut tp = 0usize;
    let mut precision = Vec::with_capacity(records.len());
    let mut recall = Vec::with_capacity(records.len());
    for (n, r) in records.iter().enumerate() {
        tp += r.true_positive as usize;
        precision.push(tp as f64 / (n + 1) as f64);
        recall.push(if num_gt == 0 { 0.0 } else { tp as f64 / num_gt as f64 });
    }
    let ap = if num_gt == 0 { 0.0 } else { average_precision(&precision, &recall) };
    EvalOutcome {
        records,
        precision,
        recall,
        num_gt,
        ap,
    }
}

pub fn build_tables(images: &[ImageDetections], tau: f64) -> Result<Vec<PairTable>> {
    images.par_iter().map(|im| PairTable::new(im, tau)).collect()
}

/// Dataset-level evaluation, class-agnostic.
pub fn evaluate_dataset(images: &[ImageDetections], theta: &ThresholdTuple, tau: f64) -> Result<EvalOutcome> {
    theta.validate()?;
    Ok(outcome_from_tables(&build_tables(images, tau)?, theta))
}

/// Single-image evaluation.
pub fn evaluate_detections(
    dets: &[SceneObject],
    gts: &[SceneObject],
    theta: &ThresholdTuple,
    tau: f64,
) -> Result<EvalOutcome> {
    let image = ImageDetections {
        detections: dets.to_vec(),
        ground_truth: gts.to_vec(),
    };
    evaluate_dataset(std::slice::from_ref(&image), theta, tau)
}

/// Evaluation restricted to each class in turn. Unlabelled objects are
/// skipped.
pub fn evaluate_per_class(
    images: &[ImageDetections],
    theta: &ThresholdTuple,
    tau: f64,
) -> Result<BTreeMap<ObjectClass, EvalOutcome>> {
    let mut out = BTreeMap::new();
    for class in ObjectClass::ALL {
        let filtered: Vec<ImageDetections> = images
            .iter()
            .map(|im| ImageDetections {
                detections: im.detections.iter().filter(|o| o.class == Some(class)).cloned().collect(),
                ground_truth: im.ground_truth.iter().filter(|o| o.class == Some(class)).cloned().collect(),
            })
            .collect();
        if filtered.iter().all(|im| im.detections.is_empty() && im.ground_truth.is_empty()) {
            continue;
        }
        out.insert(class, evaluate_dataset(&filtered, theta, tau)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub name: String,
    pub thresholds: ThresholdTuple,
    pub ap: f64,
}

/// The threshold tuples of the relaxation sweep: the full tuple, each
/// predicate removed in turn, box-only, and box plus each other predicate.
pub fn sweep_tuples(base: &ThresholdTuple) -> Vec<(String, ThresholdTuple)> {
    let mut rows = vec![("all".to_string(), *base)];
    for p in [
        Predicate::Shape,
        Predicate::Rotation,
        Predicate::Translation,
        Predicate::Scale,
        Predicate::Box2d,
    ] {
        rows.push((format!("all-{}", p.name()), base.without(p)));
    }
    rows.push(("box2d".to_string(), base.only(&[Predicate::Box2d])));
    for p in [Predicate::Shape, Predicate::Rotation, Predicate::Translation, Predicate::Scale] {
        rows.push((format!("box2d+{}", p.name()), base.only(&[Predicate::Box2d, p])));
    }
    rows
}

pub fn ap_sweep_tables(tables: &[PairTable], base: &ThresholdTuple) -> Result<Vec<SweepRow>> {
    base.validate()?;
    Ok(sweep_tuples(base)
        .into_iter()
        .map(|(name, thresholds)| SweepRow {
            ap: outcome_from_tables(tables, &thresholds).ap,
            name,
            thresholds,
        })
        .collect())
}

pub fn ap_sweep(images: &[ImageDetections], base: &ThresholdTuple, tau: f64) -> Result<Vec<SweepRow>> {
    ap_sweep_tables(&build_tables(images, tau)?, base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Camera, Pose, UnitQuaternion, Vec3};
    use crate::scene::{generate_scene, GeneratorConfig};
    use crate::voxel::Cuboid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn obj(t: Vec3, b: [f64; 4], score: f64) -> SceneObject {
        let cube = vec![Cuboid::new(Vec3::zeros(), Vec3::repeat(0.3)).unwrap()];
        SceneObject::from_primitives(cube, Pose::new(Vec3::repeat(1.0), UnitQuaternion::IDENTITY, t).unwrap(), score)
            .unwrap()
            .with_box(Box2d::try_from(b).unwrap())
    }

    #[test]
    fn proposal_labels() {
        let gt = [Box2d::new(0.0, 0.0, 10.0, 10.0).unwrap()];
        let props = [
            gt[0],
            Box2d::new(20.0, 20.0, 30.0, 30.0).unwrap(),
            // half-overlap: intersection 50, union 150... widen to get exactly 0.5
            Box2d::new(0.0, 0.0, 10.0, 5.0).unwrap(),
        ];
        let labels = assign_proposals(&props, &gt);
        assert_eq!(labels[0], ProposalLabel::Foreground { gt: 0, iou: 1.0 });
        assert_eq!(labels[1], ProposalLabel::Background);
        // area 50 inside area 100: IoU 50 / 100 = 0.5
        assert_eq!(props[2].iou(&gt[0]), 0.5);
        assert_eq!(labels[2], ProposalLabel::Ignore);
        let twin = [gt[0], gt[0]];
        assert_eq!(assign_proposals(&gt, &twin)[0], ProposalLabel::Foreground { gt: 0, iou: 1.0 });
    }

    #[test]
    fn perfect_detector() {
        let scene = generate_scene(&GeneratorConfig {
            seed: 7,
            object_count: [3, 3],
            camera: Camera::default_with_resolution(64, 48).unwrap(),
            ..Default::default()
        })
        .unwrap()
        .scene;
        let r = evaluate_detections(&scene.objects, &scene.objects, &ThresholdTuple::default(), 0.5).unwrap();
        assert_eq!(r.ap, 1.0);
    }

    #[test]
    fn one_of_two_found() {
        let gts = vec![obj(Vec3::new(0.0, 0.0, 3.0), [0.0, 0.0, 10.0, 10.0], 1.0), obj(Vec3::new(2.0, 0.0, 3.0), [20.0, 0.0, 30.0, 10.0], 1.0)];
        let dets = vec![gts[0].clone(), obj(Vec3::new(-2.0, 0.0, 3.0), [40.0, 0.0, 50.0, 10.0], 0.5)];
        let r = evaluate_detections(&dets, &gts, &ThresholdTuple::default(), 0.5).unwrap();
        assert_eq!(r.precision, vec![1.0, 0.5]);
        assert_eq!(r.recall, vec![0.5, 0.5]);
        assert_eq!(r.ap, 0.5);
    }

    #[test]
    fn boxes_below_threshold_give_zero_ap() {
        let gts = vec![obj(Vec3::new(0.0, 0.0, 3.0), [0.0, 0.0, 10.0, 10.0], 1.0)];
        let dets = vec![obj(Vec3::new(0.0, 0.0, 3.0), [8.0, 8.0, 18.0, 18.0], 0.9)];
        let theta = ThresholdTuple::default().only(&[Predicate::Box2d]);
        assert_eq!(evaluate_detections(&dets, &gts, &theta, 0.5).unwrap().ap, 0.0);
        assert_eq!(evaluate_detections(&dets, &[], &theta, 0.5).unwrap().ap, 0.0);
    }

    #[test]
    fn sweep_rows() {
        let names: Vec<String> = sweep_tuples(&ThresholdTuple::default()).into_iter().map(|r| r.0).collect();
        assert_eq!(names.len(), 11);
        assert_eq!(names[0], "all");
        assert!(names.contains(&"all-rot".to_string()) && names.contains(&"box2d+scale".to_string()));
        assert!(ThresholdTuple {
            box_iou: Some(1.5),
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    fn random_image(rng: &mut ChaCha8Rng) -> ImageDetections {
        let n_gt = rng.random_range(0..4);
        let gts: Vec<SceneObject> = (0..n_gt)
            .map(|g| obj(Vec3::new(g as f64 * 1.5, 0.0, 3.0), [g as f64 * 20.0, 0.0, g as f64 * 20.0 + 10.0, 10.0], 1.0))
            .collect();
        let n_det = rng.random_range(0..6);
        let dets = (0..n_det)
            .map(|_| {
                let g = rng.random_range(0..4) as f64;
                let jitter = rng.random_range(-3.0..3.0);
                let t = Vec3::new(g * 1.5 + rng.random_range(-1.0..1.0), 0.0, 3.0);
                let score = (rng.random_range(0..4) as f64) / 4.0;
                obj(t, [g * 20.0 + jitter, 0.0, g * 20.0 + 10.0 + jitter, 10.0], score)
            })
            .collect();
        ImageDetections {
            detections: dets,
            ground_truth: gts,
        }
    }

    // Straightforward re-implementation of the matching rule.
    fn brute_match(im: &ImageDetections, theta: &ThresholdTuple) -> Vec<Option<usize>> {
        let n = im.detections.len();
        let mut order: Vec<usize> = (0..n).collect();
        // stable sort keeps insertion order for equal scores
        order.sort_by(|&a, &b| im.detections[b].score().partial_cmp(&im.detections[a].score()).unwrap());
        let mut used = vec![false; im.ground_truth.len()];
        let mut out = vec![None; n];
        for d in order {
            let mut cands: Vec<(usize, f64)> = Vec::new();
            for (g, gt) in im.ground_truth.iter().enumerate() {
                let e = component_errors(&im.detections[d], gt, 0.5).unwrap();
                if !used[g] && theta.accepts(&e) {
                    let key = if theta.box_iou.is_some() { e.box_iou.unwrap() } else { -e.trans_err };
                    cands.push((g, key));
                }
            }
            let best = cands.iter().fold(None::<(usize, f64)>, |acc, &(g, k)| match acc {
                Some((_, bk)) if bk >= k => acc,
                _ => Some((g, k)),
            });
            if let Some((g, _)) = best {
                used[g] = true;
                out[d] = Some(g);
            }
        }
        out
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..60 {
            let images: Vec<_> = (0..3).map(|_| random_image(&mut rng)).collect();
            let tables = build_tables(&images, 0.5).unwrap();
            for (_, theta) in sweep_tuples(&ThresholdTuple::default()) {
                for (im, t) in images.iter().zip(&tables) {
                    let m = t.match_detections(&theta);
                    assert_eq!(m, brute_match(im, &theta));
                    let tp = m.iter().flatten().count();
                    let mut distinct: Vec<_> = m.iter().flatten().collect();
                    distinct.sort();
                    distinct.dedup();
                    assert_eq!(tp, distinct.len());
                }
            }
            // monotone score transform leaves AP unchanged
            let squashed: Vec<_> = images
                .iter()
                .map(|im| {
                    let mut im = im.clone();
                    for d in &mut im.detections {
                        let s = d.score();
                        d.set_score(s * s * 0.5).unwrap();
                    }
                    im
                })
                .collect();
            let a = evaluate_dataset(&images, &ThresholdTuple::default(), 0.5).unwrap().ap;
            let b = evaluate_dataset(&squashed, &ThresholdTuple::default(), 0.5).unwrap().ap;
            assert_eq!(a, b);
        }
    }

    fn shaped(shape: Vec<Cuboid>, yaw: f64, t: Vec3, b: [f64; 4], score: f64) -> SceneObject {
        let pose = Pose::new(Vec3::repeat(1.0), UnitQuaternion::about_vertical(yaw), t).unwrap();
        SceneObject::from_primitives(shape, pose, score).unwrap().with_box(Box2d::try_from(b).unwrap())
    }

    // Greedy matching takes the best acceptable ground truth at each step, so
    // widening the acceptable set can let an early detection take a ground
    // truth that a later detection needed.
    #[test]
    fn relaxation_can_lower_greedy_ap() {
        let left = vec![Cuboid::from_bounds(Vec3::repeat(-0.5), Vec3::new(0.0, 0.5, 0.5)).unwrap()];
        let right = vec![Cuboid::from_bounds(Vec3::new(0.0, -0.5, -0.5), Vec3::repeat(0.5)).unwrap()];
        let full = vec![Cuboid::new(Vec3::zeros(), Vec3::repeat(0.5)).unwrap()];
        let quarter = std::f64::consts::FRAC_PI_2;
        let gts = vec![
            shaped(left, 0.0, Vec3::new(0.0, 0.0, 3.0), [0.0, 0.0, 10.0, 10.0], 1.0),
            shaped(right.clone(), quarter, Vec3::new(0.2, 0.0, 3.0), [2.0, 0.0, 12.0, 10.0], 1.0),
        ];
        let dets = vec![
            shaped(full, 0.0, Vec3::new(0.1, 0.0, 3.0), [2.0, 0.0, 12.0, 10.0], 0.9),
            shaped(right, quarter, Vec3::new(0.2, 0.0, 3.0), [2.0, 0.0, 12.0, 10.0], 0.8),
        ];
        let base = ThresholdTuple::default();
        assert_eq!(evaluate_detections(&dets, &gts, &base, 0.5).unwrap().ap, 1.0);
        let relaxed = base.without(Predicate::Rotation);
        assert_eq!(evaluate_detections(&dets, &gts, &relaxed, 0.5).unwrap().ap, 0.5);
    }

    #[test]
    fn per_class_split() {
        let a = obj(Vec3::new(0.0, 0.0, 3.0), [0.0, 0.0, 10.0, 10.0], 1.0).with_class(ObjectClass::Chair);
        let b = obj(Vec3::new(2.0, 0.0, 3.0), [20.0, 0.0, 30.0, 10.0], 1.0).with_class(ObjectClass::Bed);
        let images = vec![ImageDetections {
            detections: vec![a.clone()],
            ground_truth: vec![a, b],
        }];
        let per = evaluate_per_class(&images, &ThresholdTuple::default(), 0.5).unwrap();
        assert_eq!(per[&ObjectClass::Chair].ap, 1.0);
        assert_eq!(per[&ObjectClass::Bed].ap, 0.0);
        assert_eq!(per.len(), 2);
    }
}
