//! Cost construction: cosine feature cost, intra-set distances, min-max scaling.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::types::{euclidean, CostKind, CostMatrix, DistanceMatrix, FeatureMatrix, PointSet3D};

/// `C[i][j] = 1 - cos(f_i, f_j)`, clamped to `[0, 2]` against rounding.
pub fn semantic_cost(feat_a: &FeatureMatrix, feat_b: &FeatureMatrix) -> Result<CostMatrix> {
    if feat_a.dim() != feat_b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "feature dims {} vs {}",
            feat_a.dim(),
            feat_b.dim()
        )));
    }
    let sim = cosine_similarity(feat_a, feat_b)?;
    let cost = sim.mapv(|s| (1.0 - s).clamp(0.0, 2.0));
    Ok(CostMatrix::from_parts_unchecked(cost, CostKind::Semantic))
}

/// Cosine similarity of every row pair, clamped to `[-1, 1]`.
pub fn cosine_similarity(feat_a: &FeatureMatrix, feat_b: &FeatureMatrix) -> Result<Array2<f64>> {
    if feat_a.dim() != feat_b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "feature dims {} vs {}",
            feat_a.dim(),
            feat_b.dim()
        )));
    }
    let na = feat_a.normalized()?;
    let nb = feat_b.normalized()?;
    Ok(na.dot(&nb.t()).mapv(|s| s.clamp(-1.0, 1.0)))
}

/// Euclidean distance matrix of a point set. Entries above the diagonal are
/// computed once and mirrored, so the result is exactly symmetric.
pub fn pairwise_distances(pts: &PointSet3D) -> Result<DistanceMatrix> {
    let p = pts.as_slice();
    if p.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("point set"));
    }
    let n = p.len();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for k in (i + 1)..n {
            let v = euclidean(&p[i], &p[k]);
            d[[i, k]] = v;
            d[[k, i]] = v;
        }
    }
    Ok(DistanceMatrix::from_parts_unchecked(d))
}

/// `(c - min) / (max - min)`; a constant matrix maps to all zeros.
pub fn minmax_normalize(c: &CostMatrix) -> Result<CostMatrix> {
    let view = c.view();
    if view.is_empty() {
        return Err(Error::Empty("cost matrix"));
    }
    let (lo, hi) = view.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let range = hi - lo;
    let data = if range > 0.0 {
        view.mapv(|v| ((v - lo) / range).clamp(0.0, 1.0))
    } else {
        Array2::zeros(view.dim())
    };
    Ok(CostMatrix::from_parts_unchecked(data, c.kind()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn feats(rows: &[Vec<f64>]) -> FeatureMatrix {
        FeatureMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn semantic_cost_examples() {
        let a = feats(&[vec![1.0, 0.0]]);
        let c = semantic_cost(&a, &feats(&[vec![1.0, 0.0]])).unwrap();
        assert_eq!(c.get(0, 0), 0.0);
        assert_eq!(c.kind(), CostKind::Semantic);

        let c = semantic_cost(&a, &feats(&[vec![-1.0, 0.0]])).unwrap();
        assert_eq!(c.get(0, 0), 2.0);

        let r = 1.0 / 2f64.sqrt();
        let c = semantic_cost(&a, &feats(&[vec![r, r]])).unwrap();
        assert!((c.get(0, 0) - 0.292_893_218_813_452_5).abs() < 1e-12);
    }

    #[test]
    fn semantic_cost_errors() {
        let a = feats(&[vec![1.0, 0.0]]);
        let b = feats(&[vec![1.0, 0.0, 0.0]]);
        assert!(matches!(semantic_cost(&a, &b), Err(Error::DimensionMismatch(_))));
        let z = feats(&[vec![1.0, 0.0], vec![0.0, 0.0]]);
        assert_eq!(semantic_cost(&a, &z), Err(Error::ZeroNormRow { row: 1 }));
    }

    #[test]
    fn distance_examples() {
        let one = PointSet3D::new(vec![[1.0, 2.0, 3.0]]).unwrap();
        let d = pairwise_distances(&one).unwrap();
        assert_eq!(d.view(), array![[0.0]]);

        let two = PointSet3D::new(vec![[0.0, 0.0, 0.0], [3.0, 4.0, 0.0]]).unwrap();
        let d = pairwise_distances(&two).unwrap();
        assert_eq!(d.get(0, 1), 5.0);
        assert_eq!(d.get(1, 0), 5.0);
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn distances_match_double_loop() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<[f64; 3]> = (0..4).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        let d = pairwise_distances(&PointSet3D::new(pts.clone()).unwrap()).unwrap();
        for i in 0..4 {
            for k in 0..4 {
                let mut s = 0.0;
                for c in 0..3 {
                    s += (pts[i][c] - pts[k][c]) * (pts[i][c] - pts[k][c]);
                }
                let oracle = if i == k { 0.0 } else { s.sqrt() };
                assert_eq!(d.get(i, k), oracle, "({i},{k})");
            }
        }
    }

    #[test]
    fn normalize_examples() {
        let c = CostMatrix::new(array![[0.0, 1.0], [1.0, 2.0]], CostKind::Fused).unwrap();
        let n = minmax_normalize(&c).unwrap();
        assert_eq!(n.view(), array![[0.0, 0.5], [0.5, 1.0]]);
        assert_eq!(n.kind(), CostKind::Fused);

        let k = CostMatrix::new(array![[3.0, 3.0], [3.0, 3.0]], CostKind::Geometric).unwrap();
        assert_eq!(minmax_normalize(&k).unwrap().view(), array![[0.0, 0.0], [0.0, 0.0]]);
    }

    fn rotation(ax: f64, ay: f64, az: f64) -> [[f64; 3]; 3] {
        let (sx, cx) = ax.sin_cos();
        let (sy, cy) = ay.sin_cos();
        let (sz, cz) = az.sin_cos();
        [
            [cy * cz, sx * sy * cz - cx * sz, cx * sy * cz + sx * sz],
            [cy * sz, sx * sy * sz + cx * cz, cx * sy * sz - sx * cz],
            [-sy, sx * cy, cx * cy],
        ]
    }

    proptest! {
        #[test]
        fn semantic_cost_scale_invariant(
            rows in prop::collection::vec(prop::collection::vec(0.1f64..2.0, 3), 2..5),
            scale in 0.01f64..100.0,
            which in 0usize..5,
        ) {
            let a = feats(&rows);
            let mut scaled = rows.clone();
            let w = which % scaled.len();
            for v in &mut scaled[w] { *v *= scale; }
            let b = feats(&rows);
            let c1 = semantic_cost(&a, &b).unwrap();
            let c2 = semantic_cost(&feats(&scaled), &b).unwrap();
            for (x, y) in c1.view().iter().zip(c2.view().iter()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn distances_rigid_invariant(
            pts in prop::collection::vec(prop::array::uniform3(-5.0f64..5.0), 1..8),
            angles in prop::array::uniform3(-3.2f64..3.2),
            shift in prop::array::uniform3(-10.0f64..10.0),
        ) {
            let r = rotation(angles[0], angles[1], angles[2]);
            let moved: Vec<[f64; 3]> = pts.iter().map(|p| {
                let mut q = [0.0; 3];
                for a in 0..3 {
                    q[a] = r[a][0] * p[0] + r[a][1] * p[1] + r[a][2] * p[2] + shift[a];
                }
                q
            }).collect();
            let d1 = pairwise_distances(&PointSet3D::new(pts).unwrap()).unwrap();
            let d2 = pairwise_distances(&PointSet3D::new(moved).unwrap()).unwrap();
            for (x, y) in d1.view().iter().zip(d2.view().iter()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn distances_satisfy_triangle_inequality(
            pts in prop::collection::vec(prop::array::uniform3(-5.0f64..5.0), 3..8),
        ) {
            let d = pairwise_distances(&PointSet3D::new(pts).unwrap()).unwrap();
            let n = d.len();
            for i in 0..n { for j in 0..n { for k in 0..n {
                prop_assert!(d.get(i, k) <= d.get(i, j) + d.get(j, k) + 1e-9);
            }}}
        }

        #[test]
        fn normalize_idempotent(
            vals in prop::collection::vec(0.0f64..10.0, 6),
        ) {
            let c = CostMatrix::new(Array2::from_shape_vec((2, 3), vals).unwrap(), CostKind::Geometric).unwrap();
            let once = minmax_normalize(&c).unwrap();
            let twice = minmax_normalize(&once).unwrap();
            let (lo, hi) = once.view().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
            if hi > lo {
                prop_assert_eq!(lo, 0.0);
                prop_assert_eq!(hi, 1.0);
            }
            for (x, y) in once.view().iter().zip(twice.view().iter()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
