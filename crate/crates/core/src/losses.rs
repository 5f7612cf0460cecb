//! Training losses on a similarity matrix, with analytic gradients.
//!
//! Both losses take the similarity matrix `S` and a temperature `tau` and
//! return the loss value together with `dL/dS` and `dL/dtau`. Targets
//! (hard labels, the current OT plan, soft blends) are constants: no
//! gradient flows into them.

use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::PseudoLabels;
use crate::rng::seeded;
use crate::sinkhorn::{solve_balanced, SolverConfig};
use crate::types::{CostKind, CostMatrix, DiscreteMeasure, FeatureMatrix, TransportPlan};

/// Similarities `S` with the temperature `tau` applied as `tau * S`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    data: Array2<f64>,
    tau: f64,
}

impl SimilarityMatrix {
    pub fn new(data: Array2<f64>, tau: f64) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Empty("similarity matrix"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("similarity matrix"));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau must be > 0, got {tau}")));
        }
        Ok(Self { data, tau })
    }

    /// Cosine similarities of two feature sets.
    pub fn from_features(feat_a: &FeatureMatrix, feat_b: &FeatureMatrix, tau: f64) -> Result<Self> {
        Self::new(crate::cost::cosine_similarity(feat_a, feat_b)?, tau)
    }

    /// Same similarities, different temperature.
    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        Self::new(self.data.clone(), tau)
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn view(&self) -> ndarray::ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.data.dim()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftTargetConfig {
    /// Weight of the current plan in the blend.
    pub beta: f64,
}

impl Default for SoftTargetConfig {
    fn default() -> Self {
        Self { beta: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub value: f64,
    pub grad_s: Array2<f64>,
    pub grad_tau: f64,
}

/// Balanced entropic plan on `1 - S` with uniform marginals. The returned
/// plan is a constant target for the losses.
pub fn current_plan(sim: &SimilarityMatrix, cfg: &SolverConfig) -> Result<TransportPlan> {
    let (n, m) = sim.shape();
    if sim.data.iter().any(|&s| !(-1.0 - 1e-9..=1.0 + 1e-9).contains(&s)) {
        return Err(Error::InvalidParameter(
            "similarities must lie in [-1, 1] to form a cosine cost".into(),
        ));
    }
    let cost = CostMatrix::new(sim.data.mapv(|s| (1.0 - s).clamp(0.0, 2.0)), CostKind::Semantic)?;
    let cfg = SolverConfig {
        variant: crate::sinkhorn::SolverVariant::Balanced,
        ..*cfg
    };
    let (plan, diag) = solve_balanced(
        &cost,
        &DiscreteMeasure::uniform(n)?,
        &DiscreteMeasure::uniform(m)?,
        &cfg,
    )?;
    if !diag.converged {
        return Err(Error::NotConverged {
            iterations: diag.iterations_used,
        });
    }
    Ok(plan)
}

/// `(1 - beta) hard + beta curr`, entrywise.
pub fn soft_target(hard: &PseudoLabels, curr: &TransportPlan, cfg: &SoftTargetConfig) -> Result<Array2<f64>> {
    if !(0.0..=1.0).contains(&cfg.beta) {
        return Err(Error::InvalidParameter(format!(
            "beta must lie in [0, 1], got {}",
            cfg.beta
        )));
    }
    if hard.shape() != curr.shape() {
        return Err(Error::DimensionMismatch(format!(
            "hard labels {:?} vs plan {:?}",
            hard.shape(),
            curr.shape()
        )));
    }
    let beta = cfg.beta;
    Ok(Array2::from_shape_fn(curr.shape(), |(i, j)| {
        (1.0 - beta) * hard.hard[[i, j]] + beta * curr.get(i, j)
    }))
}

/// Accumulates one softmax cross-entropy term over the lines of `logits`
/// (rows when `transpose` is false, columns otherwise). Returns the summed
/// term and adds `scale * dterm/dS` and `scale * dterm/dtau` into the outputs.
fn ce_lines(
    sim: &SimilarityMatrix,
    target: &Array2<f64>,
    transpose: bool,
    scale: f64,
    grad_s: &mut Array2<f64>,
    grad_tau: &mut f64,
) -> f64 {
    let (n, m) = sim.shape();
    let (lines, len) = if transpose { (m, n) } else { (n, m) };
    let at = |line: usize, k: usize| if transpose { (k, line) } else { (line, k) };
    let tau = sim.tau;
    let mut total = 0.0;
    let mut logp = vec![0.0; len];
    for line in 0..lines {
        let z: f64 = (0..len).map(|k| target[at(line, k)]).sum();
        if z == 0.0 {
            continue;
        }
        let max = (0..len)
            .map(|k| tau * sim.data[at(line, k)])
            .fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = (0..len).map(|k| (tau * sim.data[at(line, k)] - max).exp()).sum();
        let lse = max + sum.ln();
        for (k, lp) in logp.iter_mut().enumerate() {
            *lp = tau * sim.data[at(line, k)] - lse;
        }
        for (k, &lp) in logp.iter().enumerate() {
            let idx = at(line, k);
            let w = target[idx] / z;
            let p = lp.exp();
            total -= w * lp;
            grad_s[idx] += scale * tau * (p - w);
            *grad_tau += scale * (p - w) * sim.data[idx];
        }
    }
    total
}

/// Symmetric soft cross-entropy
/// `0.5 [CE(tau S, T) + CE(tau S', T')]`, where
/// `CE = -sum_i (1/Z_i) sum_j T_ij log softmax_j(tau S_i)` and `Z_i` is the
/// row mass of `T`. Lines with zero target mass contribute nothing.
pub fn soft_ce_loss(sim: &SimilarityMatrix, target: &Array2<f64>) -> Result<LossReport> {
    if target.dim() != sim.shape() {
        return Err(Error::DimensionMismatch(format!(
            "target {:?} vs similarity {:?}",
            target.dim(),
            sim.shape()
        )));
    }
    if target.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("target"));
    }
    if target.iter().any(|&v| v < 0.0) {
        return Err(Error::Negative("target"));
    }
    let mut grad_s = Array2::zeros(sim.shape());
    let mut grad_tau = 0.0;
    let rows = ce_lines(sim, target, false, 0.5, &mut grad_s, &mut grad_tau);
    let cols = ce_lines(sim, target, true, 0.5, &mut grad_s, &mut grad_tau);
    Ok(LossReport {
        value: 0.5 * (rows + cols),
        grad_s,
        grad_tau,
    })
}

/// Soft-argmax regression loss
/// `sum_pairs || sum_j softmax_j(tau S_i) g_j - (p + noise) ||_2`.
///
/// `pairs` holds `(source row, target position)`; `grid[j]` is the 2D
/// position of target `j`. The noise is `N(0, noise_sigma^2)` per coordinate,
/// drawn in pair order from a generator seeded with `seed`.
pub fn dense_loss(
    sim: &SimilarityMatrix,
    pairs: &[(usize, [f64; 2])],
    grid: &[[f64; 2]],
    noise_sigma: f64,
    seed: u64,
) -> Result<LossReport> {
    let (n, m) = sim.shape();
    if grid.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "grid has {} positions, similarity has {m} columns",
            grid.len()
        )));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "noise_sigma must be >= 0, got {noise_sigma}"
        )));
    }
    let (lo, hi) = grid
        .iter()
        .fold(([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]), |(lo, hi), g| {
            ([lo[0].min(g[0]), lo[1].min(g[1])], [hi[0].max(g[0]), hi[1].max(g[1])])
        });
    for &(i, p) in pairs {
        if i >= n {
            return Err(Error::DimensionMismatch(format!("source {i} outside {n} rows")));
        }
        if (0..2).any(|c| !(lo[c]..=hi[c]).contains(&p[c])) {
            return Err(Error::InvalidParameter(format!(
                "target position {p:?} outside the grid bounds"
            )));
        }
    }

    let tau = sim.tau;
    let mut rng = seeded(seed);
    let mut grad_s = Array2::zeros((n, m));
    let mut grad_tau = 0.0;
    let mut value = 0.0;
    let mut weights = vec![0.0; m];
    for &(i, p) in pairs {
        let nx: f64 = StandardNormal.sample(&mut rng);
        let ny: f64 = StandardNormal.sample(&mut rng);
        let goal = [p[0] + noise_sigma * nx, p[1] + noise_sigma * ny];

        let row = sim.data.row(i);
        let max = row.iter().map(|&s| tau * s).fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (w, &s) in weights.iter_mut().zip(row.iter()) {
            *w = (tau * s - max).exp();
            sum += *w;
        }
        let mut pred = [0.0; 2];
        for (w, g) in weights.iter_mut().zip(grid) {
            *w /= sum;
            pred[0] += *w * g[0];
            pred[1] += *w * g[1];
        }
        let r = [pred[0] - goal[0], pred[1] - goal[1]];
        let dist = (r[0] * r[0] + r[1] * r[1]).sqrt();
        value += dist;
        if dist == 0.0 {
            continue;
        }
        let u = [r[0] / dist, r[1] / dist];
        for (j, (&w, g)) in weights.iter().zip(grid).enumerate() {
            let dir = (g[0] - pred[0]) * u[0] + (g[1] - pred[1]) * u[1];
            grad_s[[i, j]] += tau * w * dir;
            grad_tau += w * row[j] * dir;
        }
    }
    Ok(LossReport {
        value,
        grad_s,
        grad_tau,
    })
}
