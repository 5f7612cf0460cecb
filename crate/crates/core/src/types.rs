//! Domain types shared by every solver.
//!
//! All matrices are dense row-major `f64`. Constructors validate their
//! invariants; after construction the values are immutable.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

/// Nonnegative mass vector on a finite point set.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    mass: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(mass: Vec<f64>) -> Result<Self> {
        if mass.is_empty() {
            return Err(Error::Empty("measure"));
        }
        if mass.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("measure"));
        }
        if mass.iter().any(|&m| m < 0.0) {
            return Err(Error::Negative("measure"));
        }
        Ok(Self { mass })
    }

    /// Every entry is exactly `1/n`.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty("measure"));
        }
        Ok(Self {
            mass: vec![1.0 / n as f64; n],
        })
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.mass
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }
}

/// `n × d` feature embedding, one row per point. Rows need not be unit length;
/// [`FeatureMatrix::normalized`] provides the unit-row view.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Array2<f64>,
}

impl FeatureMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::Empty("feature matrix"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature matrix"));
        }
        Ok(Self { data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch("ragged feature rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let data =
            Array2::from_shape_vec((rows.len(), d), flat).map_err(|e| Error::DimensionMismatch(e.to_string()))?;
        Self::new(data)
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    /// Copy with every row scaled to unit Euclidean norm.
    pub fn normalized(&self) -> Result<Array2<f64>> {
        let mut out = self.data.clone();
        for (i, mut row) in out.rows_mut().into_iter().enumerate() {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::ZeroNormRow { row: i });
            }
            row.mapv_inplace(|v| v / norm);
        }
        Ok(out)
    }
}

/// Points in 3D, arbitrary metric units.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet3D {
    points: Vec<[f64; 3]>,
}

impl PointSet3D {
    pub fn new(points: Vec<[f64; 3]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("point set"));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point set"));
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn as_slice(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn distance(&self, i: usize, k: usize) -> f64 {
        euclidean(&self.points[i], &self.points[k])
    }
}

pub(crate) fn euclidean(p: &[f64; 3], q: &[f64; 3]) -> f64 {
    let dx = p[0] - q[0];
    let dy = p[1] - q[1];
    let dz = p[2] - q[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    Semantic,
    Geometric,
    Fused,
}

/// Nonnegative `n × m` ground cost.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    data: Array2<f64>,
    kind: CostKind,
}

impl CostMatrix {
    pub fn new(data: Array2<f64>, kind: CostKind) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Empty("cost matrix"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("cost matrix"));
        }
        if data.iter().any(|&v| v < 0.0) {
            return Err(Error::Negative("cost matrix"));
        }
        if kind == CostKind::Semantic && data.iter().any(|&v| v > 2.0) {
            return Err(Error::InvalidParameter(
                "semantic cost entries must lie in [0, 2]".into(),
            ));
        }
        Ok(Self { data, kind })
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn kind(&self) -> CostKind {
        self.kind
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[[i, j]]
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }

    pub(crate) fn from_parts_unchecked(data: Array2<f64>, kind: CostKind) -> Self {
        Self { data, kind }
    }
}

/// Symmetric, zero-diagonal, nonnegative `n × n` matrix of intra-set distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    data: Array2<f64>,
}

impl DistanceMatrix {
    /// Validates an externally built matrix. Symmetry is checked to 1e-12.
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (n, m) = data.dim();
        if n != m {
            return Err(Error::DimensionMismatch(format!(
                "distance matrix must be square, got {n}x{m}"
            )));
        }
        if n == 0 {
            return Err(Error::Empty("distance matrix"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("distance matrix"));
        }
        if data.iter().any(|&v| v < 0.0) {
            return Err(Error::Negative("distance matrix"));
        }
        for i in 0..n {
            if data[[i, i]] != 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "distance matrix diagonal entry {i} is nonzero"
                )));
            }
            for k in (i + 1)..n {
                if (data[[i, k]] - data[[k, i]]).abs() > 1e-12 {
                    return Err(Error::InvalidParameter(format!(
                        "distance matrix is not symmetric at ({i}, {k})"
                    )));
                }
            }
        }
        Ok(Self { data })
    }

    pub(crate) fn from_parts_unchecked(data: Array2<f64>) -> Self {
        Self { data }
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.data[[i, k]]
    }
}

/// Which solver produced a plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverTag {
    Balanced,
    UotTextbook,
    UotPaperPseudocode,
    /// Supplied from outside a solver (ground truth, hand-built, read from disk).
    Given,
}

impl SolverTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverTag::Balanced => "balanced",
            SolverTag::UotTextbook => "uot_textbook",
            SolverTag::UotPaperPseudocode => "uot_paper_pseudocode",
            SolverTag::Given => "given",
        }
    }
}

impl fmt::Display for SolverTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanMeta {
    pub solver: SolverTag,
    /// Refinement stage `t`; 0 is the semantic initialization.
    pub stage: usize,
    /// Objective of the problem the solver minimized, or +inf when infeasible.
    pub objective: f64,
}

impl Default for PlanMeta {
    fn default() -> Self {
        Self {
            solver: SolverTag::Given,
            stage: 0,
            objective: f64::NAN,
        }
    }
}

/// Nonnegative `n × m` coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    data: Array2<f64>,
    pub meta: PlanMeta,
}

impl TransportPlan {
    pub fn new(data: Array2<f64>, meta: PlanMeta) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("transport plan"));
        }
        if data.iter().any(|&v| v < 0.0) {
            return Err(Error::Negative("transport plan"));
        }
        Ok(Self { data, meta })
    }

    /// Plan with default (`Given`) metadata.
    pub fn given(data: Array2<f64>) -> Result<Self> {
        Self::new(data, PlanMeta::default())
    }

    /// Product coupling `a bᵀ`.
    pub fn independent(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Self {
        let data = Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a.as_slice()[i] * b.as_slice()[j]);
        Self {
            data,
            meta: PlanMeta::default(),
        }
    }

    /// Plan putting mass `1/len` on each `(i, j)` of `pairs`.
    pub fn from_pairs(n: usize, m: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Empty("pair list"));
        }
        let w = 1.0 / pairs.len() as f64;
        let mut data = Array2::zeros((n, m));
        for &(i, j) in pairs {
            if i >= n || j >= m {
                return Err(Error::DimensionMismatch(format!("pair ({i}, {j}) outside {n}x{m}")));
            }
            data[[i, j]] += w;
        }
        Self::given(data)
    }

    pub(crate) fn from_parts_unchecked(data: Array2<f64>, meta: PlanMeta) -> Self {
        Self { data, meta }
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[[i, j]]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.data.rows().into_iter().map(|r| r.sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        self.data.columns().into_iter().map(|c| c.sum()).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.data.sum()
    }

    /// Frobenius inner product with a cost of the same shape.
    pub fn cost_inner(&self, c: &CostMatrix) -> Result<f64> {
        if c.shape() != self.shape() {
            return Err(Error::DimensionMismatch(format!(
                "plan {:?} vs cost {:?}",
                self.shape(),
                c.shape()
            )));
        }
        Ok(self.data.iter().zip(c.view().iter()).map(|(p, c)| p * c).sum())
    }

    /// Argmax of each row, ties to the lowest column.
    pub fn row_argmax(&self) -> Vec<usize> {
        self.data.rows().into_iter().map(|r| argmax(r.iter())).collect()
    }

    /// Argmax of each column, ties to the lowest row.
    pub fn col_argmax(&self) -> Vec<usize> {
        self.data.columns().into_iter().map(|c| argmax(c.iter())).collect()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }
}

/// Index of the first maximum. Strict `>` keeps ties on the lowest index.
pub(crate) fn argmax<'a>(values: impl Iterator<Item = &'a f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (k, &v) in values.enumerate() {
        if v > best_val {
            best = k;
            best_val = v;
        }
    }
    best
}

/// A matching instance: features, 3D points and masses on both sides.
#[derive(Debug, Clone, PartialEq)]
pub struct PairProblem {
    pub feat_a: FeatureMatrix,
    pub feat_b: FeatureMatrix,
    pub pts_a: PointSet3D,
    pub pts_b: PointSet3D,
    pub mass_a: DiscreteMeasure,
    pub mass_b: DiscreteMeasure,
}

impl PairProblem {
    pub fn new(
        feat_a: FeatureMatrix,
        feat_b: FeatureMatrix,
        pts_a: PointSet3D,
        pts_b: PointSet3D,
        mass_a: DiscreteMeasure,
        mass_b: DiscreteMeasure,
    ) -> Result<Self> {
        let n = feat_a.rows();
        let m = feat_b.rows();
        if feat_a.dim() != feat_b.dim() {
            return Err(Error::DimensionMismatch(format!(
                "feature dims {} vs {}",
                feat_a.dim(),
                feat_b.dim()
            )));
        }
        if pts_a.len() != n || mass_a.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "source side: {n} features, {} points, {} masses",
                pts_a.len(),
                mass_a.len()
            )));
        }
        if pts_b.len() != m || mass_b.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "target side: {m} features, {} points, {} masses",
                pts_b.len(),
                mass_b.len()
            )));
        }
        Ok(Self {
            feat_a,
            feat_b,
            pts_a,
            pts_b,
            mass_a,
            mass_b,
        })
    }

    /// Problem with uniform masses `1/N` and `1/M`.
    pub fn uniform(feat_a: FeatureMatrix, feat_b: FeatureMatrix, pts_a: PointSet3D, pts_b: PointSet3D) -> Result<Self> {
        let mass_a = DiscreteMeasure::uniform(feat_a.rows())?;
        let mass_b = DiscreteMeasure::uniform(feat_b.rows())?;
        Self::new(feat_a, feat_b, pts_a, pts_b, mass_a, mass_b)
    }

    pub fn n(&self) -> usize {
        self.feat_a.rows()
    }

    pub fn m(&self) -> usize {
        self.feat_b.rows()
    }

    pub fn dim(&self) -> usize {
        self.feat_a.dim()
    }
}
