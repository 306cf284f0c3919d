//! Training objectives as value-and-gradient kernels over flat slices, plus
//! a central-difference gradient checker.
//!
//! Every logarithm clamps its argument into [EPS, 1 - EPS]; inside a clamp
//! the gradient is zero.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::UnitQuaternion;
use crate::scene::Layout;
use crate::voxel::VoxelGrid;

pub const EPS: f64 = 1e-7;
pub const NUM_BINS: usize = 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossValueGrad {
    pub value: f64,
    /// Gradient with respect to the prediction, same layout as the input.
    pub grad: Vec<f64>,
}

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() == b.len() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: b.len(),
            actual: a.len(),
        })
    }
}

/// sum |pred - gt|; the subgradient at exact ties is 0.
pub fn layout_l1(pred: &[f64], gt: &[f64]) -> Result<LossValueGrad> {
    same_len(pred, gt)?;
    let value = pred.iter().zip(gt).map(|(p, g)| (p - g).abs()).sum();
    let grad = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| match p.partial_cmp(g) {
            Some(std::cmp::Ordering::Greater) => 1.0,
            Some(std::cmp::Ordering::Less) => -1.0,
            _ => 0.0,
        })
        .collect();
    Ok(LossValueGrad { value, grad })
}

pub fn layout_l1_maps(pred: &Layout, gt: &Layout) -> Result<LossValueGrad> {
    if (pred.width(), pred.height()) != (gt.width(), gt.height()) {
        return Err(Error::arg("layouts differ in size"));
    }
    layout_l1(pred.disparity(), gt.disparity())
}

fn clamp_prob(p: f64) -> (f64, bool) {
    if p < EPS {
        (EPS, true)
    } else if p > 1.0 - EPS {
        (1.0 - EPS, true)
    } else {
        (p, false)
    }
}

/// Mean per-voxel binary cross-entropy, -(1/N) sum [v ln p + (1-v) ln(1-p)].
/// Ground truth must be exactly 0 or 1.
pub fn voxel_bce(pred: &[f64], gt: &[f64]) -> Result<LossValueGrad> {
    same_len(pred, gt)?;
    if pred.is_empty() {
        return Err(Error::Empty("voxel cross-entropy over zero voxels"));
    }
    if let Some(v) = gt.iter().find(|v| **v != 0.0 && **v != 1.0) {
        return Err(Error::arg(format!("ground-truth occupancy {v} is not binary")));
    }
    let n = pred.len() as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &v) in pred.iter().zip(gt) {
        let (p, clamped) = clamp_prob(p);
        value -= v * p.ln() + (1.0 - v) * (1.0 - p).ln();
        grad.push(if clamped { 0.0 } else { -(v / p - (1.0 - v) / (1.0 - p)) / n });
    }
    Ok(LossValueGrad { value: value / n, grad })
}

pub fn voxel_bce_grids(pred: &VoxelGrid, gt: &VoxelGrid) -> Result<LossValueGrad> {
    if pred.spec() != gt.spec() {
        return Err(Error::GridMismatch("prediction and ground truth grids differ".into()));
    }
    let p: Vec<f64> = pred.data().iter().map(|&v| v as f64).collect();
    let g: Vec<f64> = gt.data().iter().map(|&v| v as f64).collect();
    voxel_bce(&p, &g)
}

/// Probabilities over the rotation bins.
#[derive(Debug, Clone, PartialEq)]
pub struct BinDistribution(Vec<f64>);

impl BinDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() != NUM_BINS {
            return Err(Error::DimensionMismatch {
                expected: NUM_BINS,
                actual: probs.len(),
            });
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::arg("bin probabilities must be finite and non-negative"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::arg(format!("bin probabilities sum to {sum}")));
        }
        Ok(Self(probs))
    }

    pub fn uniform() -> Self {
        Self(vec![1.0 / NUM_BINS as f64; NUM_BINS])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }
}

/// -ln p_k on raw probabilities; the gradient is non-zero only at `k`.
pub fn rot_class_nll(probs: &[f64], k: usize) -> Result<LossValueGrad> {
    if k >= probs.len() {
        return Err(Error::arg(format!("bin {k} out of range for {} bins", probs.len())));
    }
    let (p, clamped) = clamp_prob(probs[k]);
    let mut grad = vec![0.0; probs.len()];
    if !clamped {
        grad[k] = -1.0 / p;
    }
    Ok(LossValueGrad { value: -p.ln(), grad })
}

pub fn rot_class_nll_dist(dist: &BinDistribution, k: usize) -> Result<LossValueGrad> {
    rot_class_nll(dist.probs(), k)
}

/// min(|u - q|, |u + q|) where u is the normalized raw prediction. The
/// gradient is taken through the normalization.
pub fn rot_regression(pred_raw: &[f64], gt: &UnitQuaternion) -> Result<LossValueGrad> {
    if pred_raw.len() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            actual: pred_raw.len(),
        });
    }
    let norm = pred_raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::arg("raw quaternion prediction is zero"));
    }
    let u: Vec<f64> = pred_raw.iter().map(|v| v / norm).collect();
    let q = gt.to_array();
    let sign = if u.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>() >= 0.0 { 1.0 } else { -1.0 };
    let diff: Vec<f64> = u.iter().zip(&q).map(|(a, b)| a - sign * b).collect();
    let value = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
    if value == 0.0 {
        return Ok(LossValueGrad { value, grad: vec![0.0; 4] });
    }
    let g: Vec<f64> = diff.iter().map(|v| v / value).collect();
    let gu: f64 = g.iter().zip(&u).map(|(a, b)| a * b).sum();
    let grad = g.iter().zip(&u).map(|(gi, ui)| (gi - gu * ui) / norm).collect();
    Ok(LossValueGrad { value, grad })
}

/// Translation loss |t_pred - t_gt|^2 and log-space scale loss
/// |ln c_pred - ln c_gt|^2 (natural log).
pub fn trans_scale_l2(
    pred_t: &[f64; 3],
    gt_t: &[f64; 3],
    pred_c: &[f64; 3],
    gt_c: &[f64; 3],
) -> Result<(LossValueGrad, LossValueGrad)> {
    if pred_c.iter().chain(gt_c).any(|c| !(c.is_finite() && *c > 0.0)) {
        return Err(Error::arg("scales must be strictly positive"));
    }
    let dt: Vec<f64> = pred_t.iter().zip(gt_t).map(|(a, b)| a - b).collect();
    let lt = LossValueGrad {
        value: dt.iter().map(|v| v * v).sum(),
        grad: dt.iter().map(|v| 2.0 * v).collect(),
    };
    let dc: Vec<f64> = pred_c.iter().zip(gt_c).map(|(a, b)| a.ln() - b.ln()).collect();
    let lc = LossValueGrad {
        value: dc.iter().map(|v| v * v).sum(),
        grad: dc.iter().zip(pred_c).map(|(d, c)| 2.0 * d / c).collect(),
    };
    Ok((lt, lc))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FgLabel {
    Foreground,
    Background,
}

/// -ln f for foreground proposals, -ln(1 - f) for background ones.
pub fn foreground_ce(f: f64, label: FgLabel) -> LossValueGrad {
    let (p, clamped) = clamp_prob(f);
    let (value, g) = match label {
        FgLabel::Foreground => (-p.ln(), -1.0 / p),
        FgLabel::Background => (-(1.0 - p).ln(), 1.0 / (1.0 - p)),
    };
    LossValueGrad {
        value,
        grad: vec![if clamped { 0.0 } else { g }],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub shape: f64,
    pub rot: f64,
    pub trans: f64,
    pub scale: f64,
    pub foreground: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            shape: 1.0,
            rot: 1.0,
            trans: 1.0,
            scale: 1.0,
            foreground: 1.0,
        }
    }
}

/// Predictions and targets of one proposal.
#[derive(Debug, Clone, PartialEq)]
pub enum ProposalTerms {
    Foreground {
        shape_pred: Vec<f64>,
        shape_gt: Vec<f64>,
        rot_probs: Vec<f64>,
        rot_bin: usize,
        t_pred: [f64; 3],
        t_gt: [f64; 3],
        c_pred: [f64; 3],
        c_gt: [f64; 3],
        f: f64,
    },
    Background {
        f: f64,
    },
}

impl ProposalTerms {
    /// Prediction parameters in gradient order: shape, bin probabilities,
    /// translation, scale, foreground score (background: score only).
    pub fn params(&self) -> Vec<f64> {
        match self {
            ProposalTerms::Foreground {
                shape_pred,
                rot_probs,
                t_pred,
                c_pred,
                f,
                ..
            } => shape_pred
                .iter()
                .chain(rot_probs)
                .chain(t_pred)
                .chain(c_pred)
                .chain(std::iter::once(f))
                .copied()
                .collect(),
            ProposalTerms::Background { f } => vec![*f],
        }
    }

    /// Copy with the prediction parameters replaced, consuming them from
    /// the front of `params`.
    pub fn with_params(&self, params: &mut impl Iterator<Item = f64>) -> Result<Self> {
        let mut next = || params.next().ok_or(Error::Empty("parameter vector too short"));
        Ok(match self {
            ProposalTerms::Foreground {
                shape_pred,
                shape_gt,
                rot_probs,
                rot_bin,
                t_gt,
                c_gt,
                ..
            } => {
                let shape_pred = (0..shape_pred.len()).map(|_| next()).collect::<Result<_>>()?;
                let rot_probs = (0..rot_probs.len()).map(|_| next()).collect::<Result<_>>()?;
                let t_pred = [next()?, next()?, next()?];
                let c_pred = [next()?, next()?, next()?];
                ProposalTerms::Foreground {
                    shape_pred,
                    shape_gt: shape_gt.clone(),
                    rot_probs,
                    rot_bin: *rot_bin,
                    t_pred,
                    t_gt: *t_gt,
                    c_pred,
                    c_gt: *c_gt,
                    f: next()?,
                }
            }
            ProposalTerms::Background { .. } => ProposalTerms::Background { f: next()? },
        })
    }
}

/// Weighted sum over proposals of shape, rotation, translation, scale and
/// foreground terms (foreground proposals) or the background term. The
/// gradient concatenates the per-proposal blocks in `ProposalTerms::params`
/// order.
pub fn combined_objective(terms: &[ProposalTerms], w: &LossWeights) -> Result<LossValueGrad> {
    let mut value = 0.0;
    let mut grad = Vec::new();
    let mut push = |l: LossValueGrad, weight: f64, value: &mut f64| {
        *value += weight * l.value;
        grad.extend(l.grad.iter().map(|g| weight * g));
    };
    for t in terms {
        match t {
            ProposalTerms::Foreground {
                shape_pred,
                shape_gt,
                rot_probs,
                rot_bin,
                t_pred,
                t_gt,
                c_pred,
                c_gt,
                f,
            } => {
                push(voxel_bce(shape_pred, shape_gt)?, w.shape, &mut value);
                push(rot_class_nll(rot_probs, *rot_bin)?, w.rot, &mut value);
                let (lt, lc) = trans_scale_l2(t_pred, t_gt, c_pred, c_gt)?;
                push(lt, w.trans, &mut value);
                push(lc, w.scale, &mut value);
                push(foreground_ce(*f, FgLabel::Foreground), w.foreground, &mut value);
            }
            ProposalTerms::Background { f } => {
                push(foreground_ce(*f, FgLabel::Background), w.foreground, &mut value);
            }
        }
    }
    Ok(LossValueGrad { value, grad })
}

/// Objective of `terms` evaluated at a flat parameter vector.
pub fn combined_at(terms: &[ProposalTerms], w: &LossWeights, params: &[f64]) -> Result<LossValueGrad> {
    let mut it = params.iter().copied();
    let rebuilt = terms.iter().map(|t| t.with_params(&mut it)).collect::<Result<Vec<_>>>()?;
    combined_objective(&rebuilt, w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdReport {
    pub max_rel_error: f64,
    /// Component where the maximum was attained.
    pub worst_index: usize,
}

/// Compares the analytic gradient of `loss` at `point` with central
/// differences of step `step`. The relative error of a component is
/// |a - n| / max(|a|, |n|, 1e-8).
pub fn finite_diff_check(
    loss: impl Fn(&[f64]) -> Result<LossValueGrad>,
    point: &[f64],
    step: f64,
) -> Result<FdReport> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::arg("finite-difference step must be positive"));
    }
    let analytic = loss(point)?;
    same_len(&analytic.grad, point)?;
    let mut x = point.to_vec();
    let mut report = FdReport {
        max_rel_error: 0.0,
        worst_index: 0,
    };
    for i in 0..point.len() {
        x[i] = point[i] + step;
        let up = loss(&x)?.value;
        x[i] = point[i] - step;
        let down = loss(&x)?.value;
        x[i] = point[i];
        let numeric = (up - down) / (2.0 * step);
        let a = analytic.grad[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        if err > report.max_rel_error {
            report = FdReport {
                max_rel_error: err,
                worst_index: i,
            };
        }
    }
    Ok(report)
}

/// Finite-difference verification of one kernel over many random points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelCheck {
    pub kernel: String,
    pub points: usize,
    pub max_rel_error: f64,
    /// Index of the point where the maximum was attained.
    pub worst_point: usize,
}

pub const GRAD_KERNELS: [&str; 9] = [
    "layout-l1",
    "voxel-bce",
    "rot-class-nll",
    "rot-regression",
    "trans-l2",
    "scale-l2",
    "foreground-ce",
    "background-ce",
    "combined",
];

fn random_probs(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

fn random_vec3(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> [f64; 3] {
    [0; 3].map(|_| rng.random_range(lo..hi))
}

fn random_terms(rng: &mut ChaCha8Rng) -> Vec<ProposalTerms> {
    (0..3)
        .map(|_| {
            if rng.random_bool(0.3) {
                return ProposalTerms::Background {
                    f: rng.random_range(0.05..0.95),
                };
            }
            let n = 8;
            ProposalTerms::Foreground {
                shape_pred: (0..n).map(|_| rng.random_range(0.05..0.95)).collect(),
                shape_gt: (0..n).map(|_| rng.random_range(0..2) as f64).collect(),
                rot_probs: random_probs(rng, NUM_BINS),
                rot_bin: rng.random_range(0..NUM_BINS),
                t_pred: random_vec3(rng, -2.0, 2.0),
                t_gt: random_vec3(rng, -2.0, 2.0),
                c_pred: random_vec3(rng, 0.3, 2.0),
                c_gt: random_vec3(rng, 0.3, 2.0),
                f: rng.random_range(0.05..0.95),
            }
        })
        .collect()
}

/// Runs `finite_diff_check` for `kernel` at `points` seeded random inputs.
/// Inputs keep a margin from the kinks of the non-smooth kernels (ties of
/// the L1 loss, the switch between q and -q in the regression loss).
pub fn check_kernel(kernel: &str, seed: u64, points: usize, step: f64) -> Result<KernelCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = (0.0f64, 0usize);
    for n in 0..points {
        let rep = match kernel {
            "layout-l1" => {
                let gt: Vec<f64> = (0..32).map(|_| rng.random_range(0.1..1.0)).collect();
                let pred: Vec<f64> = gt
                    .iter()
                    .map(|g| g + rng.random_range(0.01..0.2) * if rng.random_bool(0.5) { 1.0 } else { -1.0 })
                    .collect();
                finite_diff_check(|p| layout_l1(p, &gt), &pred, step)?
            }
            "voxel-bce" => {
                let gt: Vec<f64> = (0..64).map(|_| rng.random_range(0..2) as f64).collect();
                let pred: Vec<f64> = (0..64).map(|_| rng.random_range(0.05..0.95)).collect();
                finite_diff_check(|p| voxel_bce(p, &gt), &pred, step)?
            }
            "rot-class-nll" => {
                let probs = random_probs(&mut rng, NUM_BINS);
                let k = rng.random_range(0..NUM_BINS);
                finite_diff_check(|p| rot_class_nll(p, k), &probs, step)?
            }
            "rot-regression" => {
                let q = UnitQuaternion::from_vector([0; 4].map(|_| rng.random_range(-1.0..1.0)))?;
                let raw = loop {
                    let v: [f64; 4] = [0; 4].map(|_| rng.random_range(-1.0..1.0));
                    let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
                    let dot = q.to_array().iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() / norm;
                    if norm > 0.2 && dot.abs() > 0.1 && dot.abs() < 0.99 {
                        break v;
                    }
                };
                finite_diff_check(|p| rot_regression(p, &q), &raw, step)?
            }
            "trans-l2" => {
                let (t, gt) = (random_vec3(&mut rng, -3.0, 3.0), random_vec3(&mut rng, -3.0, 3.0));
                let c = [1.0; 3];
                finite_diff_check(|p| Ok(trans_scale_l2(&[p[0], p[1], p[2]], &gt, &c, &c)?.0), &t, step)?
            }
            "scale-l2" => {
                let (c, gt) = (random_vec3(&mut rng, 0.2, 3.0), random_vec3(&mut rng, 0.2, 3.0));
                let t = [0.0; 3];
                finite_diff_check(|p| Ok(trans_scale_l2(&t, &t, &[p[0], p[1], p[2]], &gt)?.1), &c, step)?
            }
            "foreground-ce" | "background-ce" => {
                let label = if kernel == "foreground-ce" { FgLabel::Foreground } else { FgLabel::Background };
                let f = rng.random_range(0.05..0.95);
                finite_diff_check(|p| Ok(foreground_ce(p[0], label)), &[f], step)?
            }
            "combined" => {
                let terms = random_terms(&mut rng);
                let w = LossWeights {
                    shape: rng.random_range(0.5..2.0),
                    rot: rng.random_range(0.5..2.0),
                    trans: rng.random_range(0.5..2.0),
                    scale: rng.random_range(0.5..2.0),
                    foreground: rng.random_range(0.5..2.0),
                };
                let params: Vec<f64> = terms.iter().flat_map(|t| t.params()).collect();
                finite_diff_check(|p| combined_at(&terms, &w, p), &params, step)?
            }
            other => return Err(Error::arg(format!("unknown loss kernel {other:?}"))),
        };
        if rep.max_rel_error > worst.0 || n == 0 {
            worst = (rep.max_rel_error, n);
        }
    }
    Ok(KernelCheck {
        kernel: kernel.to_string(),
        points,
        max_rel_error: worst.0,
        worst_point: worst.1,
    })
}

/// Every kernel in `GRAD_KERNELS`, each with its own derived seed.
pub fn gradient_suite(seed: u64, points: usize, step: f64) -> Result<Vec<KernelCheck>> {
    GRAD_KERNELS
        .iter()
        .enumerate()
        .map(|(i, k)| check_kernel(k, seed.wrapping_add(i as u64), points, step))
        .collect()
}
