//! Gromov-Wasserstein distortion: the exact quadratic objective, its
//! anchor-linearized surrogate, and fusion with the feature cost.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::anchors::AnchorSet;
use crate::error::{Error, Result};
use crate::types::{CostKind, CostMatrix, DistanceMatrix, TransportPlan};

/// Upper bound on `N * M` for the exact quartic objective.
pub const GW_EXACT_MAX_CELLS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    /// Weight of the geometric term; `0` is feature-only.
    pub alpha: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { alpha: 0.3 }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// `sum_{i,j,i',j'} |D_A[i][i'] - D_B[j][j']| P[i][j] P[i'][j']`, summed in
/// `(i, j, i', j')` order into one accumulator. Ordered pairs, diagonal
/// included.
pub fn gw_objective_exact(plan: &TransportPlan, dist_a: &DistanceMatrix, dist_b: &DistanceMatrix) -> Result<f64> {
    let (n, m) = plan.shape();
    if dist_a.len() != n || dist_b.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "plan {n}x{m} vs distances {} and {}",
            dist_a.len(),
            dist_b.len()
        )));
    }
    if n * m > GW_EXACT_MAX_CELLS {
        return Err(Error::TooLarge(format!(
            "exact GW needs N*M <= {GW_EXACT_MAX_CELLS}, got {}",
            n * m
        )));
    }
    let p = plan.view();
    let da = dist_a.view();
    let db = dist_b.view();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..m {
            for ip in 0..n {
                for jp in 0..m {
                    total += (da[[i, ip]] - db[[j, jp]]).abs() * p[[i, j]] * p[[ip, jp]];
                }
            }
        }
    }
    Ok(total)
}

/// Average distortion of each candidate `(i, j)` against the anchors:
/// `C[i][j] = (1/K) sum_k |D_A[i][a_k] - D_B[j][b_k]|`.
///
/// Each anchor carries the same mass `1/K`.
pub fn linearized_geo_cost(
    dist_a: &DistanceMatrix,
    dist_b: &DistanceMatrix,
    anchors: &AnchorSet,
) -> Result<CostMatrix> {
    let pairs = anchors.pairs();
    if pairs.is_empty() {
        return Err(Error::Empty("anchor set"));
    }
    let (n, m) = (dist_a.len(), dist_b.len());
    if let Some(&(sa, sb)) = pairs.iter().find(|&&(sa, sb)| sa >= n || sb >= m) {
        return Err(Error::DimensionMismatch(format!("anchor ({sa}, {sb}) outside {n}x{m}")));
    }
    let k = pairs.len() as f64;
    let da = dist_a.view();
    let db = dist_b.view();
    // Anchor columns gathered once so the inner loop is contiguous.
    let cols_a: Vec<Vec<f64>> = (0..n)
        .map(|i| pairs.iter().map(|&(sa, _)| da[[i, sa]]).collect())
        .collect();
    let cols_b: Vec<Vec<f64>> = (0..m)
        .map(|j| pairs.iter().map(|&(_, sb)| db[[j, sb]]).collect())
        .collect();
    let data = Array2::from_shape_fn((n, m), |(i, j)| {
        let sum: f64 = cols_a[i].iter().zip(&cols_b[j]).map(|(x, y)| (x - y).abs()).sum();
        sum / k
    });
    Ok(CostMatrix::from_parts_unchecked(data, CostKind::Geometric))
}

/// `(1 - alpha) sem + alpha geo` for costs already scaled to `[0, 1]`.
pub fn fuse_costs(sem: &CostMatrix, geo: &CostMatrix, cfg: &FusionConfig) -> Result<CostMatrix> {
    cfg.validate()?;
    if sem.shape() != geo.shape() {
        return Err(Error::DimensionMismatch(format!(
            "semantic {:?} vs geometric {:?}",
            sem.shape(),
            geo.shape()
        )));
    }
    for c in [sem, geo] {
        let max = c.view().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max > 1.0 + 1e-9 {
            return Err(Error::NotNormalized { max });
        }
    }
    let alpha = cfg.alpha;
    let data = Array2::from_shape_fn(sem.shape(), |(i, j)| {
        (1.0 - alpha) * sem.get(i, j) + alpha * geo.get(i, j)
    });
    Ok(CostMatrix::from_parts_unchecked(data, CostKind::Fused))
}
