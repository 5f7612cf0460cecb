//! Brute-force references used to cross-check the fast paths.

use itertools::{iproduct, Itertools};
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::pipeline::Match;
use crate::synth::{GroundTruth, Metrics};
use crate::types::{CostMatrix, DistanceMatrix, FeatureMatrix, PointSet3D, TransportPlan};

/// Largest square size accepted by [`lp_permutation_optimum`].
pub const LP_MAX_SIDE: usize = 7;

/// Exact balanced OT optimum for uniform marginals `1/n` on a square cost,
/// by enumerating permutations. Returns the optimal value and the permutation.
pub fn lp_permutation_optimum(cost: &CostMatrix) -> Result<(f64, Vec<usize>)> {
    let (n, m) = cost.shape();
    if n != m {
        return Err(Error::DimensionMismatch(format!(
            "permutation LP needs a square cost, got {n}x{m}"
        )));
    }
    if n > LP_MAX_SIDE {
        return Err(Error::TooLarge(format!(
            "permutation LP needs n <= {LP_MAX_SIDE}, got {n}"
        )));
    }
    let mut best = (f64::INFINITY, Vec::new());
    for perm in (0..n).permutations(n) {
        let v = perm.iter().enumerate().map(|(i, &j)| cost.get(i, j)).sum::<f64>() / n as f64;
        if v < best.0 {
            best = (v, perm);
        }
    }
    Ok(best)
}

/// Quadruple loop over `(i, j, i', j')` with one running sum.
pub fn gw_quadruple_loop(plan: &TransportPlan, dist_a: &DistanceMatrix, dist_b: &DistanceMatrix) -> f64 {
    let (n, m) = plan.shape();
    let mut total = 0.0;
    for (i, j, ip, jp) in iproduct!(0..n, 0..m, 0..n, 0..m) {
        total += (dist_a.get(i, ip) - dist_b.get(j, jp)).abs() * plan.get(i, j) * plan.get(ip, jp);
    }
    total
}

/// Double-loop Euclidean distances.
pub fn naive_distances(pts: &PointSet3D) -> Vec<Vec<f64>> {
    let p = pts.as_slice();
    let mut out = vec![vec![0.0; p.len()]; p.len()];
    for i in 0..p.len() {
        for k in 0..p.len() {
            let dx = p[i][0] - p[k][0];
            let dy = p[i][1] - p[k][1];
            let dz = p[i][2] - p[k][2];
            out[i][k] = (dx * dx + dy * dy + dz * dz).sqrt();
        }
    }
    out
}

/// Cosine nearest neighbor by explicit loops, first maximum wins.
pub fn naive_nearest(feat_a: &FeatureMatrix, feat_b: &FeatureMatrix) -> Vec<usize> {
    let a = feat_a.view();
    let b = feat_b.view();
    let norm = |row: ndarray::ArrayView1<f64>| row.iter().map(|x| x * x).sum::<f64>().sqrt();
    (0..a.nrows())
        .map(|i| {
            let na = norm(a.row(i));
            let mut best = 0;
            let mut best_val = f64::NEG_INFINITY;
            for j in 0..b.nrows() {
                let mut dot = 0.0;
                for k in 0..a.ncols() {
                    dot += a[[i, k]] * b[[j, k]];
                }
                let s = dot / (na * norm(b.row(j)));
                if s > best_val {
                    best = j;
                    best_val = s;
                }
            }
            best
        })
        .collect()
}

/// Scalar re-implementation of `synth::evaluate`.
pub fn naive_metrics(matches: &[Match], gt: &GroundTruth, radius: f64, pts_b: &PointSet3D) -> Metrics {
    let d = naive_distances(pts_b);
    let mut near = 0;
    let mut recalled = vec![false; gt.assignment.len()];
    let mut exact = vec![false; gt.assignment.len()];
    for mt in matches {
        if let Some(t) = gt.assignment[mt.source] {
            if d[mt.target][t] <= radius {
                near += 1;
                recalled[mt.source] = true;
            }
            if mt.target == t {
                exact[mt.source] = true;
            }
        }
    }
    let assigned = gt.assignment.iter().filter(|t| t.is_some()).count();
    let frac = |flags: &[bool]| {
        let c = flags.iter().filter(|&&f| f).count();
        if assigned == 0 {
            0.0
        } else {
            c as f64 / assigned as f64
        }
    };
    Metrics {
        precision: if matches.is_empty() {
            None
        } else {
            Some(near as f64 / matches.len() as f64)
        },
        recall: frac(&recalled),
        accuracy: frac(&exact),
        emitted: matches.len(),
        assigned,
    }
}

/// Central differences `(f(x + h e) - f(x - h e)) / 2h` for every entry.
pub fn central_difference(f: impl Fn(&Array2<f64>) -> f64, x: &Array2<f64>, h: f64) -> Array2<f64> {
    let mut probe = x.clone();
    let mut out = Array2::zeros(x.dim());
    for idx in iproduct!(0..x.nrows(), 0..x.ncols()) {
        let orig = probe[idx];
        probe[idx] = orig + h;
        let up = f(&probe);
        probe[idx] = orig - h;
        let down = f(&probe);
        probe[idx] = orig;
        out[idx] = (up - down) / (2.0 * h);
    }
    out
}

/// Scalar central difference.
pub fn central_difference_scalar(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}
