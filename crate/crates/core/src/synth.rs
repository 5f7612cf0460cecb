//! Synthetic pair generator with known ground truth, and the evaluator.
//!
//! Clouds are bent 2D grids embedded in 3D. Every point has an intrinsic
//! coordinate `(u, v)`; features are low-frequency cosines of that
//! coordinate plus Gaussian noise, so semantically close points are
//! spatially close. All draws come from one seeded stream in a fixed order.
//!
//! Coordinates are rounded to a dyadic grid and the rigid motion is a signed
//! axis permutation plus a dyadic translation. Every step is exact in binary
//! floating point, so intra-set distances survive the motion bit for bit.

use std::collections::BTreeSet;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::Match;
use crate::rng::{seeded, SeededRng};
use crate::types::{FeatureMatrix, PairProblem, PointSet3D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Rigid,
    MirrorAlias,
    PartialOverlap,
    Noisy,
    BrokenStructure,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::Rigid,
        ScenarioKind::MirrorAlias,
        ScenarioKind::PartialOverlap,
        ScenarioKind::Noisy,
        ScenarioKind::BrokenStructure,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Rigid => "rigid",
            ScenarioKind::MirrorAlias => "mirror_alias",
            ScenarioKind::PartialOverlap => "partial_overlap",
            ScenarioKind::Noisy => "noisy",
            ScenarioKind::BrokenStructure => "broken_structure",
        }
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown scenario '{s}'")))
    }
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub n_points: usize,
    pub seed: u64,
    pub feature_dim: usize,
    /// Feature noise std; `noisy` also jitters target points by this much.
    pub noise_sigma: f64,
    /// Used by `partial_overlap` only.
    pub overlap_fraction: f64,
    /// Used by `mirror_alias` only.
    pub alias_fraction: f64,
}

impl Scenario {
    pub fn new(kind: ScenarioKind, n_points: usize, seed: u64) -> Self {
        Self {
            kind,
            n_points,
            seed,
            feature_dim: 16,
            noise_sigma: 0.0,
            overlap_fraction: 0.5,
            alias_fraction: 0.8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.n_points < 4 {
            return bad(format!("n_points must be >= 4, got {}", self.n_points));
        }
        if self.feature_dim < 2 {
            return bad(format!("feature_dim must be >= 2, got {}", self.feature_dim));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        if !(self.overlap_fraction > 0.0 && self.overlap_fraction <= 1.0) {
            return bad(format!(
                "overlap_fraction must lie in (0, 1], got {}",
                self.overlap_fraction
            ));
        }
        if !(0.0..=1.0).contains(&self.alias_fraction) {
            return bad(format!(
                "alias_fraction must lie in [0, 1], got {}",
                self.alias_fraction
            ));
        }
        if self.kind == ScenarioKind::MirrorAlias && !self.n_points.is_multiple_of(2) {
            return bad(format!("mirror_alias needs an even n_points, got {}", self.n_points));
        }
        Ok(())
    }

    /// Number of matched pairs for `partial_overlap`.
    pub fn overlap_count(&self) -> usize {
        ((self.overlap_fraction * self.n_points as f64).round() as usize).clamp(1, self.n_points)
    }
}

/// Partial source-to-target map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// `assignment[i]` is the true target of source `i`, if any.
    pub assignment: Vec<Option<usize>>,
    pub unmatched_sources: Vec<usize>,
    pub unmatched_targets: Vec<usize>,
}

impl GroundTruth {
    /// Builds the record from a partial map and checks injectivity.
    pub fn new(assignment: Vec<Option<usize>>, m: usize) -> Result<Self> {
        let mut hit = vec![false; m];
        for &t in assignment.iter().flatten() {
            if t >= m {
                return Err(Error::DimensionMismatch(format!("target {t} outside {m}")));
            }
            if hit[t] {
                return Err(Error::InvalidParameter(format!("target {t} assigned twice")));
            }
            hit[t] = true;
        }
        let unmatched_sources = (0..assignment.len()).filter(|&i| assignment[i].is_none()).collect();
        let unmatched_targets = (0..m).filter(|&j| !hit[j]).collect();
        Ok(Self {
            assignment,
            unmatched_sources,
            unmatched_targets,
        })
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.assignment
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.map(|t| (i, t)))
            .collect()
    }

    pub fn n_assigned(&self) -> usize {
        self.assignment.iter().flatten().count()
    }

    pub fn n_sources(&self) -> usize {
        self.assignment.len()
    }

    pub fn n_targets(&self) -> usize {
        self.n_assigned() + self.unmatched_targets.len()
    }
}

/// Intrinsic surface coordinate.
type Uv = [f64; 2];

fn normal(rng: &mut SeededRng) -> f64 {
    StandardNormal.sample(rng)
}

/// Spacing for a grid of `count` points over roughly `[-1, 1]^2`.
fn spacing(count: usize) -> f64 {
    2.0 / (count as f64).sqrt()
}

/// `count` jittered grid points, column-major so a prefix is a contiguous
/// left part of the sheet.
fn grid(count: usize, rng: &mut SeededRng) -> Vec<Uv> {
    let cols = (count as f64).sqrt().ceil() as usize;
    let rows = count.div_ceil(cols);
    let h = spacing(count);
    let mut out = Vec::with_capacity(count);
    'fill: for c in 0..cols {
        for r in 0..rows {
            if out.len() == count {
                break 'fill;
            }
            let u = (c as f64 - (cols as f64 - 1.0) / 2.0) * h;
            let v = (r as f64 - (rows as f64 - 1.0) / 2.0) * h;
            out.push([
                u + rng.random_range(-0.15..0.15) * h,
                v + rng.random_range(-0.15..0.15) * h,
            ]);
        }
    }
    out
}

/// Mirror pairs: point `2p` at `(u, v)` with `u > 0`, point `2p + 1` at
/// `(-u, v)`.
fn mirror_grid(pairs: usize, rng: &mut SeededRng) -> Vec<Uv> {
    let h = spacing(2 * pairs);
    let cols = ((pairs as f64 / 2.0).sqrt().ceil() as usize).max(1);
    let rows = pairs.div_ceil(cols);
    let mut out = Vec::with_capacity(2 * pairs);
    for p in 0..pairs {
        let (c, r) = (p / rows, p % rows);
        let u = (c as f64 + 0.5) * h + rng.random_range(-0.15..0.15) * h;
        let v = (r as f64 - (rows as f64 - 1.0) / 2.0) * h + rng.random_range(-0.15..0.15) * h;
        out.push([u, v]);
        out.push([-u, v]);
    }
    out
}

/// Bent sheet, symmetric under `u -> -u`.
fn embed(p: Uv) -> [f64; 3] {
    [p[0], p[1], 0.4 * p[0] * p[0] - 0.2 * p[1]]
}

type Mat3 = [[f64; 3]; 3];

/// Resolution of the coordinate grid.
const GRID_STEP: f64 = 1.0 / (1u64 << 20) as f64;

fn quantize(x: f64) -> f64 {
    (x / GRID_STEP).round() * GRID_STEP
}

/// One of the 24 proper rotations mapping axes to signed axes.
fn random_rotation(rng: &mut SeededRng) -> Mat3 {
    const PERMS: [([usize; 3], f64); 6] = [
        ([0, 1, 2], 1.0),
        ([1, 2, 0], 1.0),
        ([2, 0, 1], 1.0),
        ([0, 2, 1], -1.0),
        ([2, 1, 0], -1.0),
        ([1, 0, 2], -1.0),
    ];
    let (perm, parity) = PERMS[rng.random_range(0..6)];
    let mut signs = [1.0, 1.0, 1.0];
    signs[0] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    signs[1] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    signs[2] = parity * signs[0] * signs[1];
    let mut r = [[0.0; 3]; 3];
    for k in 0..3 {
        r[k][perm[k]] = signs[k];
    }
    r
}

/// Rotation by `angle` about a random axis.
fn axis_rotation(angle: f64, rng: &mut SeededRng) -> Mat3 {
    let a: [f64; 3] = std::array::from_fn(|_| normal(rng));
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let [x, y, z] = a.map(|c| c / norm);
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}

fn apply(r: &Mat3, p: [f64; 3], t: [f64; 3]) -> [f64; 3] {
    std::array::from_fn(|k| r[k][0] * p[0] + r[k][1] * p[1] + r[k][2] * p[2] + t[k])
}

/// Low-frequency feature field `f_k(uv) = cos(w_k . uv + phi_k)`.
struct Field {
    freq: Vec<Uv>,
    phase: Vec<f64>,
}

impl Field {
    fn sample(dim: usize, rng: &mut SeededRng) -> Self {
        let freq = (0..dim).map(|_| [1.5 * normal(rng), 1.5 * normal(rng)]).collect();
        let phase = (0..dim).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        Self { freq, phase }
    }

    fn eval(&self, p: Uv) -> Vec<f64> {
        self.freq
            .iter()
            .zip(&self.phase)
            .map(|(w, phi)| (w[0] * p[0] + w[1] * p[1] + phi).cos())
            .collect()
    }
}

fn noisy_features(clean: &[Vec<f64>], sigma: f64, rng: &mut SeededRng) -> Result<FeatureMatrix> {
    let dim = clean[0].len();
    let mut data = Array2::zeros((clean.len(), dim));
    for (i, row) in clean.iter().enumerate() {
        for (k, &x) in row.iter().enumerate() {
            data[[i, k]] = x + sigma * normal(rng);
        }
    }
    FeatureMatrix::new(data)
}

/// Source and target coordinates, clean source features, true targets.
type Layout = (Vec<Uv>, Vec<Uv>, Vec<Vec<f64>>, Vec<Option<usize>>);

/// Builds the pair and its ground truth. Bit-deterministic in `scn`.
pub fn generate(scn: &Scenario) -> Result<(PairProblem, GroundTruth)> {
    scn.validate()?;
    let mut rng = seeded(scn.seed);
    let n = scn.n_points;
    let field = Field::sample(scn.feature_dim, &mut rng);

    // Intrinsic coordinates of source and target, source features, and the
    // true target of every source.
    let (uv_a, uv_b, clean_a, assignment): Layout = match scn.kind {
        ScenarioKind::MirrorAlias => {
            let uv = mirror_grid(n / 2, &mut rng);
            let mut pair_ids: Vec<usize> = (0..n / 2).collect();
            pair_ids.shuffle(&mut rng);
            let aliased_count = (scn.alias_fraction * (n / 2) as f64).round() as usize;
            let mut aliased = vec![false; n / 2];
            for &p in &pair_ids[..aliased_count] {
                aliased[p] = true;
            }
            let clean = uv
                .iter()
                .enumerate()
                .map(|(i, &p)| {
                    if aliased[i / 2] {
                        field.eval([p[0].abs(), p[1]])
                    } else {
                        field.eval(p)
                    }
                })
                .collect();
            (uv.clone(), uv, clean, (0..n).map(Some).collect())
        }
        ScenarioKind::PartialOverlap => {
            let k = scn.overlap_count();
            let all = grid(2 * n - k, &mut rng);
            let uv_a = all[..n].to_vec();
            let uv_b = all[n - k..].to_vec();
            let clean = uv_a.iter().map(|&p| field.eval(p)).collect();
            let assignment = (0..n).map(|i| (i >= n - k).then(|| i - (n - k))).collect();
            (uv_a, uv_b, clean, assignment)
        }
        _ => {
            let uv = grid(n, &mut rng);
            let clean = uv.iter().map(|&p| field.eval(p)).collect();
            (uv.clone(), uv, clean, (0..n).map(Some).collect())
        }
    };

    // Target features come from the same field at the target's own
    // coordinate; aliased mirror twins share one clean vector.
    let clean_b: Vec<Vec<f64>> = match scn.kind {
        ScenarioKind::MirrorAlias => clean_a.clone(),
        _ => uv_b.iter().map(|&p| field.eval(p)).collect(),
    };

    let on_grid = |p: Uv| embed(p).map(quantize);
    let pts_a: Vec<[f64; 3]> = uv_a.iter().map(|&p| on_grid(p)).collect();
    let mut local: Vec<[f64; 3]> = uv_b.iter().map(|&p| on_grid(p)).collect();

    if scn.kind == ScenarioKind::BrokenStructure {
        // The quarter of the sheet with the largest u moves as one piece.
        let mut order: Vec<usize> = (0..local.len()).collect();
        order.sort_by(|&x, &y| uv_b[y][0].total_cmp(&uv_b[x][0]));
        let piece = &order[..local.len().div_ceil(4)];
        let mut centroid = [0.0; 3];
        for &i in piece {
            for c in 0..3 {
                centroid[c] += local[i][c] / piece.len() as f64;
            }
        }
        let rot = axis_rotation(0.6, &mut rng);
        let shift: [f64; 3] = std::array::from_fn(|_| 0.3 * normal(&mut rng));
        for &i in piece {
            let rel = std::array::from_fn(|c| local[i][c] - centroid[c]);
            let back = std::array::from_fn(|c| centroid[c] + shift[c]);
            local[i] = apply(&rot, rel, back);
        }
    }

    let rot = random_rotation(&mut rng);
    let trans: [f64; 3] = std::array::from_fn(|_| quantize(normal(&mut rng).clamp(-4.0, 4.0)));
    let mut pts_b: Vec<[f64; 3]> = local.iter().map(|&p| apply(&rot, p, trans)).collect();

    if scn.kind == ScenarioKind::Noisy {
        for p in pts_b.iter_mut() {
            for c in p.iter_mut() {
                *c += scn.noise_sigma * normal(&mut rng);
            }
        }
    }

    let feat_a = noisy_features(&clean_a, scn.noise_sigma, &mut rng)?;
    let feat_b = noisy_features(&clean_b, scn.noise_sigma, &mut rng)?;
    let m = pts_b.len();
    let prob = PairProblem::uniform(feat_a, feat_b, PointSet3D::new(pts_a)?, PointSet3D::new(pts_b)?)?;
    Ok((prob, GroundTruth::new(assignment, m)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Share of emitted matches within `radius` of the true target; `None`
    /// when nothing was emitted.
    pub precision: Option<f64>,
    /// Share of ground-truth pairs with an emitted match within `radius`.
    pub recall: f64,
    /// Share of ground-truth pairs whose exact target was emitted.
    pub accuracy: f64,
    pub emitted: usize,
    pub assigned: usize,
}

/// Scores matches against ground truth. A match from a source with no true
/// target is always wrong. Distances are measured among target points.
pub fn evaluate(matches: &[Match], gt: &GroundTruth, radius: f64, pts_b: &PointSet3D) -> Result<Metrics> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidParameter(format!("radius must be > 0, got {radius}")));
    }
    if gt.n_targets() != pts_b.len() {
        return Err(Error::DimensionMismatch(format!(
            "ground truth has {} targets, point set has {}",
            gt.n_targets(),
            pts_b.len()
        )));
    }
    if let Some(bad) = matches
        .iter()
        .find(|mt| mt.source >= gt.n_sources() || mt.target >= pts_b.len())
    {
        return Err(Error::DimensionMismatch(format!(
            "match ({}, {}) outside {}x{}",
            bad.source,
            bad.target,
            gt.n_sources(),
            pts_b.len()
        )));
    }

    let mut near = 0usize;
    let mut recalled = BTreeSet::new();
    let mut exact = BTreeSet::new();
    for mt in matches {
        let Some(truth) = gt.assignment[mt.source] else {
            continue;
        };
        if pts_b.distance(mt.target, truth) <= radius {
            near += 1;
            recalled.insert(mt.source);
        }
        if mt.target == truth {
            exact.insert(mt.source);
        }
    }
    let assigned = gt.n_assigned();
    let share = |count: usize| {
        if assigned == 0 {
            0.0
        } else {
            count as f64 / assigned as f64
        }
    };
    Ok(Metrics {
        precision: (!matches.is_empty()).then(|| near as f64 / matches.len() as f64),
        recall: share(recalled.len()),
        accuracy: share(exact.len()),
        emitted: matches.len(),
        assigned,
    })
}
