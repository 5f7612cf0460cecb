//! Anchor selection from a transport plan.
//!
//! For every source row, the forward match is the plan's row argmax and the
//! round trip follows the backward (column) argmax of that target. The
//! distance in source 3D space between the start point and where the round
//! trip lands is the cycle error. Candidates whose error is within the
//! quantile threshold survive, and the most confident survivors become
//! anchors, each target used at most once.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{PointSet3D, TransportPlan};

/// Added to the quantile threshold so exact round trips (error 0) always pass.
pub const CYCLE_ERROR_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AnchorRanking {
    /// Plan value at the forward match.
    Confidence,
    /// `confidence / max_confidence - distortion_weight * e / delta`, where
    /// `e` is the mean of the source-side and target-side cycle errors.
    Combined { distortion_weight: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorConfig {
    /// Maximum number of anchors `K`.
    pub k: usize,
    /// Quantile of the cycle-error distribution used as threshold.
    pub quantile: f64,
    pub ranking: AnchorRanking,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        Self {
            k: 64,
            quantile: 0.01,
            ranking: AnchorRanking::Confidence,
        }
    }
}

impl AnchorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("anchor count must be >= 1".into()));
        }
        if !(self.quantile > 0.0 && self.quantile < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "quantile must lie in (0, 1), got {}",
                self.quantile
            )));
        }
        Ok(())
    }
}

/// Selected anchor pairs, one-to-one in both coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    pairs: Vec<(usize, usize)>,
    confidence: Vec<f64>,
    cycle_error: Vec<f64>,
    threshold: f64,
    shortfall: bool,
}

impl AnchorSet {
    /// Anchor set from known pairs (ground truth, hand-built cases), with unit
    /// confidence and zero cycle error.
    pub fn from_pairs(pairs: Vec<(usize, usize)>) -> Self {
        let k = pairs.len();
        Self {
            pairs,
            confidence: vec![1.0; k],
            cycle_error: vec![0.0; k],
            threshold: 0.0,
            shortfall: false,
        }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn confidence(&self) -> &[f64] {
        &self.confidence
    }

    pub fn cycle_error(&self) -> &[f64] {
        &self.cycle_error
    }

    /// The threshold `delta` used during selection.
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// True when fewer than `K` candidates survived.
    pub fn shortfall(&self) -> bool {
        self.shortfall
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn mean_cycle_error(&self) -> f64 {
        if self.cycle_error.is_empty() {
            0.0
        } else {
            self.cycle_error.iter().sum::<f64>() / self.cycle_error.len() as f64
        }
    }
}

/// Linear-interpolation quantile of an ascending slice.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

struct Candidate {
    source: usize,
    target: usize,
    confidence: f64,
    cycle_error: f64,
    score: f64,
}

pub fn select_anchors(
    plan: &TransportPlan,
    pts_a: &PointSet3D,
    pts_b: &PointSet3D,
    cfg: &AnchorConfig,
) -> Result<AnchorSet> {
    cfg.validate()?;
    let (n, m) = plan.shape();
    if pts_a.len() != n || pts_b.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "plan {n}x{m} vs point sets {} and {}",
            pts_a.len(),
            pts_b.len()
        )));
    }
    let forward = plan.row_argmax();
    let backward = plan.col_argmax();

    let errors: Vec<f64> = (0..n).map(|i| pts_a.distance(i, backward[forward[i]])).collect();
    let mut sorted = errors.clone();
    sorted.sort_by(f64::total_cmp);
    let delta = quantile_sorted(&sorted, cfg.quantile) + CYCLE_ERROR_FLOOR;

    let mut survivors: Vec<Candidate> = (0..n)
        .filter_map(|i| {
            let j = forward[i];
            let confidence = plan.get(i, j);
            (errors[i] <= delta && confidence > 0.0).then(|| Candidate {
                source: i,
                target: j,
                confidence,
                cycle_error: errors[i],
                score: confidence,
            })
        })
        .collect();
    if survivors.is_empty() {
        return Err(Error::NoConsistentAnchors);
    }

    if let AnchorRanking::Combined { distortion_weight } = cfg.ranking {
        let max_conf = survivors.iter().map(|c| c.confidence).fold(0.0, f64::max);
        for c in &mut survivors {
            let back_err = pts_b.distance(c.target, forward[backward[c.target]]);
            let distortion = 0.5 * (c.cycle_error + back_err);
            c.score = c.confidence / max_conf - distortion_weight * distortion / delta;
        }
    }

    // Stable sort keeps ascending source order among equal scores.
    survivors.sort_by(|x, y| y.score.total_cmp(&x.score));

    let mut used = vec![false; m];
    let mut out = AnchorSet {
        pairs: Vec::with_capacity(cfg.k),
        confidence: Vec::with_capacity(cfg.k),
        cycle_error: Vec::with_capacity(cfg.k),
        threshold: delta,
        shortfall: false,
    };
    for c in survivors {
        if out.pairs.len() == cfg.k {
            break;
        }
        if used[c.target] {
            continue;
        }
        used[c.target] = true;
        out.pairs.push((c.source, c.target));
        out.confidence.push(c.confidence);
        out.cycle_error.push(c.cycle_error);
    }
    out.shortfall = out.pairs.len() < cfg.k;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::DiscreteMeasure;
    use ndarray::{array, Array2};

    fn line_points(xs: &[f64]) -> PointSet3D {
        PointSet3D::new(xs.iter().map(|&x| [x, 0.0, 0.0]).collect()).unwrap()
    }

    #[test]
    fn diagonal_plan_gives_diagonal_anchors() {
        let plan = TransportPlan::given(array![
            [0.20, 0.02, 0.01, 0.01],
            [0.02, 0.22, 0.01, 0.00],
            [0.01, 0.01, 0.18, 0.03],
            [0.00, 0.01, 0.02, 0.21],
        ])
        .unwrap();
        let pts = line_points(&[0.0, 1.0, 2.0, 3.0]);
        let cfg = AnchorConfig {
            k: 3,
            ..AnchorConfig::default()
        };
        let a = select_anchors(&plan, &pts, &pts, &cfg).unwrap();
        // Ranked by confidence: 0.22, 0.21, 0.20.
        assert_eq!(a.pairs(), &[(1, 1), (3, 3), (0, 0)]);
        assert!(a.cycle_error().iter().all(|&e| e == 0.0));
        assert!(!a.shortfall());
    }

    #[test]
    fn uninformative_plan_is_deterministic() {
        let u = DiscreteMeasure::uniform(4).unwrap();
        let plan = TransportPlan::independent(&u, &u);
        let pts = line_points(&[0.0, 1.0, 2.0, 3.0]);
        let cfg = AnchorConfig {
            k: 4,
            ..AnchorConfig::default()
        };
        let first = select_anchors(&plan, &pts, &pts, &cfg).unwrap();
        // Every row points at target 0 and target 0 points back at row 0, so
        // only row 0 closes its cycle.
        assert_eq!(first.pairs(), &[(0, 0)]);
        assert!(first.shortfall());
        assert_eq!(first, select_anchors(&plan, &pts, &pts, &cfg).unwrap());
    }

    #[test]
    fn aliased_round_trip_is_excluded() {
        // Row 3 maps to target 0 whose backward match is row 0, 3 units away.
        let plan = TransportPlan::given(array![
            [0.30, 0.00, 0.00, 0.00],
            [0.00, 0.25, 0.00, 0.00],
            [0.00, 0.00, 0.25, 0.00],
            [0.20, 0.00, 0.00, 0.05],
        ])
        .unwrap();
        let pts = line_points(&[0.0, 1.0, 2.0, 3.0]);
        let a = select_anchors(&plan, &pts, &pts, &AnchorConfig::default()).unwrap();
        assert!(a.pairs().iter().all(|&(i, _)| i != 3));
        assert_eq!(a.len(), 3);
        assert!(a.cycle_error().iter().all(|&e| e <= a.threshold()));
    }

    #[test]
    fn targets_are_never_reused() {
        // Rows 0 and 1 both forward to target 0; row 1's round trip lands
        // 1e-10 away, inside the floor, so both survive the threshold.
        let pts_a = PointSet3D::new(vec![[0.0; 3], [1e-10, 0.0, 0.0], [5.0, 0.0, 0.0]]).unwrap();
        let pts_b = line_points(&[0.0, 1.0]);
        let plan = TransportPlan::given(array![[0.4, 0.0], [0.3, 0.0], [0.0, 0.3]]).unwrap();
        let a = select_anchors(&plan, &pts_a, &pts_b, &AnchorConfig::default()).unwrap();
        let mut targets: Vec<usize> = a.pairs().iter().map(|p| p.1).collect();
        targets.sort_unstable();
        targets.dedup();
        assert_eq!(targets.len(), a.len());
        assert_eq!(a.pairs(), &[(0, 0), (2, 1)]);
    }

    #[test]
    fn empty_plan_has_no_anchors() {
        let plan = TransportPlan::given(Array2::zeros((3, 3))).unwrap();
        let pts = line_points(&[0.0, 1.0, 2.0]);
        assert_eq!(
            select_anchors(&plan, &pts, &pts, &AnchorConfig::default()),
            Err(Error::NoConsistentAnchors)
        );
    }

    #[test]
    fn config_and_shape_errors() {
        let pts = line_points(&[0.0, 1.0]);
        let plan = TransportPlan::given(array![[0.5, 0.0], [0.0, 0.5]]).unwrap();
        let bad = AnchorConfig {
            k: 0,
            ..AnchorConfig::default()
        };
        assert!(select_anchors(&plan, &pts, &pts, &bad).is_err());
        let bad = AnchorConfig {
            quantile: 1.0,
            ..AnchorConfig::default()
        };
        assert!(select_anchors(&plan, &pts, &pts, &bad).is_err());
        let short = line_points(&[0.0]);
        assert!(matches!(
            select_anchors(&plan, &short, &pts, &AnchorConfig::default()),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn combined_ranking_prefers_low_distortion() {
        // Row 2 closes its cycle through row 1 (error 1); row 3 is a far
        // outlier that the 0.99 quantile still rejects.
        let plan = TransportPlan::given(array![
            [0.10, 0.00, 0.00],
            [0.00, 0.30, 0.25],
            [0.00, 0.00, 0.20],
            [0.09, 0.00, 0.00],
        ])
        .unwrap();
        let pts_a = line_points(&[0.0, 1.0, 2.0, 10.0]);
        let pts_b = line_points(&[0.0, 1.0, 2.0]);
        let base = AnchorConfig {
            k: 2,
            quantile: 0.99,
            ranking: AnchorRanking::Confidence,
        };
        let conf = select_anchors(&plan, &pts_a, &pts_b, &base).unwrap();
        assert_eq!(conf.pairs(), &[(1, 1), (2, 2)]);
        assert_eq!(conf.cycle_error(), &[0.0, 1.0]);
        let comb = AnchorConfig {
            ranking: AnchorRanking::Combined { distortion_weight: 5.0 },
            ..base
        };
        let got = select_anchors(&plan, &pts_a, &pts_b, &comb).unwrap();
        assert_eq!(got.pairs(), &[(1, 1), (0, 0)]);
    }

    #[test]
    fn quantile_interpolates() {
        assert_eq!(quantile_sorted(&[0.0, 1.0, 2.0, 3.0, 4.0], 0.5), 2.0);
        assert!((quantile_sorted(&[0.0, 10.0], 0.01) - 0.1).abs() < 1e-15);
    }
}
