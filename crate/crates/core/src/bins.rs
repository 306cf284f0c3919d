//! Rotation bins: k-means over unit quaternions under the sign-folded
//! chordal distance d(a, b) = min(|a - b|, |a + b|) = sqrt(2 - 2 |a.b|).

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_distr::Normal;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{UnitQuaternion, Vec3};

pub const DEFAULT_BINS: usize = 24;
pub const MAX_LLOYD_ITERS: usize = 100;

/// Squared sign-folded chordal distance.
pub fn antipodal_dist2(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (2.0 - 2.0 * dot.abs()).max(0.0)
}

pub fn antipodal_distance(a: &UnitQuaternion, b: &UnitQuaternion) -> f64 {
    antipodal_dist2(&a.to_array(), &b.to_array()).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinSet {
    pub representatives: Vec<UnitQuaternion>,
    pub seed: u64,
    /// Weighted sum of squared distances of the training samples to their
    /// representatives.
    pub inertia: f64,
    /// Inertia after every Lloyd iteration.
    pub inertia_history: Vec<f64>,
}

impl BinSet {
    pub fn len(&self) -> usize {
        self.representatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.representatives.is_empty()
    }

    /// Smallest sign-folded rotation angle between two representatives.
    pub fn min_separation_angle(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in self.representatives.iter().enumerate() {
            for b in &self.representatives[i + 1..] {
                best = best.min(a.angle_to(b));
            }
        }
        best
    }
}

// Sign convention for stored quaternions: first non-zero component positive.
fn canonical(q: &UnitQuaternion) -> [f64; 4] {
    let a = q.to_array();
    match a.iter().find(|v| **v != 0.0) {
        Some(v) if *v < 0.0 => a.map(|x| -x),
        _ => a,
    }
}

fn nearest(p: &[f64; 4], centers: &[[f64; 4]]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d = antipodal_dist2(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Deterministic greedy k-means++ seeding followed by Lloyd iterations. Samples are
/// deduplicated (up to sign) and weighted by multiplicity, so repeating the
/// whole sample set yields the same representatives. A cluster that loses
/// all its samples is reseeded at the sample farthest from its centroid.
pub fn cluster_quaternions(samples: &[UnitQuaternion], k: usize, seed: u64) -> Result<BinSet> {
    if k == 0 {
        return Err(Error::arg("need at least one bin"));
    }
    let mut pts: Vec<[f64; 4]> = samples.iter().map(canonical).collect();
    pts.sort_by(|a, b| a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
    let mut unique: Vec<[f64; 4]> = Vec::new();
    let mut weight: Vec<f64> = Vec::new();
    for p in pts {
        if unique.last() == Some(&p) {
            *weight.last_mut().expect("parallel to unique") += 1.0;
        } else {
            unique.push(p);
            weight.push(1.0);
        }
    }
    if unique.len() < k {
        return Err(Error::arg(format!("{} distinct rotations for {k} bins", unique.len())));
    }

    // Greedy k-means++: each step draws a few D^2-weighted candidates and
    // keeps the one that lowers the potential most.
    let trials = 2 + (k as f64).ln().floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = WeightedIndex::new(&weight).map_err(|e| Error::arg(e.to_string()))?.sample(&mut rng);
    let mut centers = vec![unique[first]];
    let mut d2: Vec<f64> = unique.iter().map(|p| antipodal_dist2(p, &centers[0])).collect();
    while centers.len() < k {
        let w: Vec<f64> = d2.iter().zip(&weight).map(|(d, w)| d * w).collect();
        let pick = WeightedIndex::new(&w)
            .map_err(|_| Error::Degenerate("samples collapse onto fewer rotations than bins".into()))?;
        let mut best: Option<(usize, f64)> = None;
        for _ in 0..trials {
            let c = pick.sample(&mut rng);
            let potential: f64 = unique
                .iter()
                .zip(&d2)
                .zip(&weight)
                .map(|((p, d), w)| w * d.min(antipodal_dist2(p, &unique[c])))
                .sum();
            if best.is_none_or(|(_, b)| potential < b) {
                best = Some((c, potential));
            }
        }
        let next = best.expect("at least one trial").0;
        centers.push(unique[next]);
        for (d, p) in d2.iter_mut().zip(&unique) {
            *d = d.min(antipodal_dist2(p, &unique[next]));
        }
    }

    let mut assign = vec![usize::MAX; unique.len()];
    let mut history = Vec::new();
    for _ in 0..MAX_LLOYD_ITERS {
        let mut changed = false;
        let mut dist = vec![0.0; unique.len()];
        for (i, p) in unique.iter().enumerate() {
            let (c, d) = nearest(p, &centers);
            changed |= assign[i] != c;
            assign[i] = c;
            dist[i] = d;
        }
        history.push(dist.iter().zip(&weight).map(|(d, w)| d * w).sum::<f64>());
        if !changed {
            break;
        }
        let mut sums = vec![[0.0f64; 4]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in unique.iter().enumerate() {
            let c = assign[i];
            let dot: f64 = p.iter().zip(&centers[c]).map(|(a, b)| a * b).sum();
            let s = if dot < 0.0 { -weight[i] } else { weight[i] };
            for a in 0..4 {
                sums[c][a] += s * p[a];
            }
            counts[c] += 1;
        }
        for c in 0..k {
            let n = sums[c].iter().map(|v| v * v).sum::<f64>().sqrt();
            if counts[c] == 0 || n == 0.0 {
                // reseed at the worst-served sample
                let far = (0..unique.len()).fold(0, |b, i| if dist[i] > dist[b] { i } else { b });
                centers[c] = unique[far];
                assign[far] = c;
                dist[far] = 0.0;
            } else {
                centers[c] = sums[c].map(|v| v / n);
            }
        }
    }
    let inertia = *history.last().expect("at least one iteration");
    let representatives = centers
        .iter()
        .map(|c| UnitQuaternion::from_vector(canonical(&UnitQuaternion::from_vector(*c).expect("unit centroid"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(BinSet {
        representatives,
        seed,
        inertia,
        inertia_history: history,
    })
}

/// Index of the nearest representative; ties go to the lowest index.
pub fn assign_bin(q: &UnitQuaternion, bins: &BinSet) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, r) in bins.representatives.iter().enumerate() {
        let s = r.dot(q).abs();
        if s > best.1 {
            best = (i, s);
        }
    }
    best.0
}

/// The 24 proper rotations of the cube, as quaternions.
pub fn octahedral_group() -> Vec<UnitQuaternion> {
    let h = 0.5;
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = vec![[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
    for sx in [h, -h] {
        for sy in [h, -h] {
            for sz in [h, -h] {
                out.push([h, sx, sy, sz]);
            }
        }
    }
    for (i, j) in [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)] {
        for s in [r, -r] {
            let mut q = [0.0; 4];
            q[i] = r;
            q[j] = s;
            out.push(q);
        }
    }
    out.into_iter().map(|q| UnitQuaternion::from_vector(q).expect("unit by construction")).collect()
}

/// Uniformly distributed rotation: a normalized 4D Gaussian sample.
pub fn random_quaternion(rng: &mut impl Rng) -> UnitQuaternion {
    perturbed_quaternion(&UnitQuaternion::IDENTITY, 1e6, rng)
}

/// `q` plus isotropic Gaussian noise of deviation `sigma` per component,
/// renormalized, with a random sign.
pub fn perturbed_quaternion(q: &UnitQuaternion, sigma: f64, rng: &mut impl Rng) -> UnitQuaternion {
    let n = Normal::new(0.0, sigma).expect("finite positive deviation");
    let a = q.to_array();
    let v = [a[0] + rng.sample(n), a[1] + rng.sample(n), a[2] + rng.sample(n), a[3] + rng.sample(n)];
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    UnitQuaternion::from_vector(v.map(|x| sign * x / norm)).expect("non-degenerate sample")
}

/// Tight mixture around a tilted copy of the 24 rotations of the cube:
/// `per_mode` samples per mode with component noise `sigma`. Returns the
/// samples and their generating mode.
pub fn synthetic_mixture(per_mode: usize, sigma: f64, seed: u64) -> (Vec<UnitQuaternion>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tilt = UnitQuaternion::from_axis_angle(&Vec3::new(0.3, 0.5, 0.8), 0.4).expect("non-zero axis");
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for (m, g) in octahedral_group().iter().enumerate() {
        let mode = tilt * *g;
        for _ in 0..per_mode {
            samples.push(perturbed_quaternion(&mode, sigma, &mut rng));
            labels.push(m);
        }
    }
    (samples, labels)
}
