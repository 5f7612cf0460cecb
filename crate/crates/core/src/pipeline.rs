//! End-to-end pseudo-label generation.
//!
//! Stage 0 solves unbalanced OT on the normalized feature cost. Each of the
//! `T` refinement stages picks anchors from the previous plan, builds the
//! linearized geometric cost, fuses it with the feature cost and re-solves.
//! The final plan is filtered into multi-hot labels by mutual top-k.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::anchors::{select_anchors, AnchorConfig, AnchorSet};
use crate::cost::{cosine_similarity, minmax_normalize, pairwise_distances, semantic_cost};
use crate::error::{Error, Result};
use crate::gw::{fuse_costs, linearized_geo_cost, FusionConfig};
use crate::sinkhorn::{solve, SolveDiagnostics, SolverConfig};
use crate::types::{argmax, CostMatrix, FeatureMatrix, PairProblem, TransportPlan};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Refinement stages `T`.
    pub iters: usize,
    pub fusion: FusionConfig,
    pub anchor: AnchorConfig,
    pub solver: SolverConfig,
    /// Candidate matches kept per source row.
    pub topk: usize,
    /// Filter candidates by mutual top-k membership.
    pub relaxed_cc: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            iters: 5,
            fusion: FusionConfig::default(),
            anchor: AnchorConfig::default(),
            solver: SolverConfig::default(),
            topk: 3,
            relaxed_cc: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iters == 0 {
            return Err(Error::InvalidParameter("refinement stages must be >= 1".into()));
        }
        if self.topk == 0 {
            return Err(Error::InvalidParameter("topk must be >= 1".into()));
        }
        self.fusion.validate()?;
        self.anchor.validate()?;
        self.solver.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageReport {
    pub stage: usize,
    pub diagnostics: SolveDiagnostics,
    pub objective: f64,
    pub anchor_count: usize,
    pub mean_cycle_error: f64,
    /// Anchor selection failed and the stage re-solved the feature cost alone.
    pub anchor_fallback: bool,
    pub anchor_shortfall: bool,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// `stage_plans[t]` is the plan after stage `t`; index 0 is the
    /// feature-only initialization.
    pub stage_plans: Vec<TransportPlan>,
    /// Anchor set used by stage `t` at index `t - 1`; `None` on fallback.
    pub anchors: Vec<Option<AnchorSet>>,
    pub stages: Vec<StageReport>,
}

impl PipelineOutput {
    pub fn final_plan(&self) -> &TransportPlan {
        self.stage_plans.last().expect("pipeline always runs stage 0")
    }

    pub fn initial_plan(&self) -> &TransportPlan {
        &self.stage_plans[0]
    }

    /// True if any stage fell back or hit the iteration cap.
    pub fn has_warnings(&self) -> bool {
        self.stages
            .iter()
            .any(|s| s.anchor_fallback || !s.diagnostics.converged)
    }
}

pub fn run_pipeline(prob: &PairProblem, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let sem = minmax_normalize(&semantic_cost(&prob.feat_a, &prob.feat_b)?)?;
    let (mut plan, diag) = solve(&sem, &prob.mass_a, &prob.mass_b, &cfg.solver)?;
    plan.meta.stage = 0;
    refine(prob, cfg, &sem, plan, diag)
}

/// Runs the refinement stages from an externally supplied stage-0 plan.
pub fn run_pipeline_from(prob: &PairProblem, cfg: &PipelineConfig, initial: TransportPlan) -> Result<PipelineOutput> {
    cfg.validate()?;
    if initial.shape() != (prob.n(), prob.m()) {
        return Err(Error::DimensionMismatch(format!(
            "initial plan {:?} vs problem {}x{}",
            initial.shape(),
            prob.n(),
            prob.m()
        )));
    }
    let sem = minmax_normalize(&semantic_cost(&prob.feat_a, &prob.feat_b)?)?;
    let diag = SolveDiagnostics {
        transported_mass: initial.total_mass(),
        converged: true,
        ..SolveDiagnostics::default()
    };
    refine(prob, cfg, &sem, initial, diag)
}

fn refine(
    prob: &PairProblem,
    cfg: &PipelineConfig,
    sem: &CostMatrix,
    initial: TransportPlan,
    initial_diag: SolveDiagnostics,
) -> Result<PipelineOutput> {
    let dist_a = pairwise_distances(&prob.pts_a)?;
    let dist_b = pairwise_distances(&prob.pts_b)?;
    let mut stages = vec![StageReport {
        stage: 0,
        diagnostics: initial_diag,
        objective: initial.meta.objective,
        anchor_count: 0,
        mean_cycle_error: 0.0,
        anchor_fallback: false,
        anchor_shortfall: false,
    }];
    let mut stage_plans = vec![initial];
    let mut anchors_used = Vec::with_capacity(cfg.iters);

    for t in 1..=cfg.iters {
        let prev = stage_plans.last().expect("stage 0 exists");
        let anchors = match select_anchors(prev, &prob.pts_a, &prob.pts_b, &cfg.anchor) {
            Ok(a) => Some(a),
            Err(Error::NoConsistentAnchors) => None,
            Err(e) => return Err(e),
        };
        let cost = match &anchors {
            Some(a) => {
                let geo = minmax_normalize(&linearized_geo_cost(&dist_a, &dist_b, a)?)?;
                fuse_costs(sem, &geo, &cfg.fusion)?
            }
            None => sem.clone(),
        };
        let (mut plan, diag) = solve(&cost, &prob.mass_a, &prob.mass_b, &cfg.solver)?;
        plan.meta.stage = t;
        stages.push(StageReport {
            stage: t,
            diagnostics: diag,
            objective: plan.meta.objective,
            anchor_count: anchors.as_ref().map_or(0, AnchorSet::len),
            mean_cycle_error: anchors.as_ref().map_or(0.0, AnchorSet::mean_cycle_error),
            anchor_fallback: anchors.is_none(),
            anchor_shortfall: anchors.as_ref().is_none_or(AnchorSet::shortfall),
        });
        stage_plans.push(plan);
        anchors_used.push(anchors);
    }

    Ok(PipelineOutput {
        stage_plans,
        anchors: anchors_used,
        stages,
    })
}

/// One emitted correspondence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub source: usize,
    pub target: usize,
    /// Plan value or similarity, depending on the producer.
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub target: usize,
    pub value: f64,
    /// Survived the mutual top-k filter.
    pub kept: bool,
}

/// Multi-hot labels distilled from a plan.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabels {
    /// `hard[i][j] = 1` exactly for kept candidates.
    pub hard: Array2<f64>,
    /// Top-k targets of every row in descending plan value.
    pub candidates: Vec<Vec<Candidate>>,
    /// Row has at least one kept candidate.
    pub kept_mask: Vec<bool>,
}

impl PseudoLabels {
    pub fn matches(&self) -> Vec<Match> {
        self.candidates
            .iter()
            .enumerate()
            .flat_map(|(i, row)| {
                row.iter().filter(|c| c.kept).map(move |c| Match {
                    source: i,
                    target: c.target,
                    score: c.value,
                })
            })
            .collect()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.hard.dim()
    }
}

/// Indices of the `k` largest values, descending, ties to the lower index.
fn top_k<'a>(values: impl Iterator<Item = &'a f64>, k: usize) -> Vec<usize> {
    let vals: Vec<f64> = values.copied().collect();
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    idx.sort_by(|&x, &y| vals[y].total_cmp(&vals[x]));
    idx.truncate(k);
    idx
}

pub fn extract_pseudo_labels(plan: &TransportPlan, cfg: &PipelineConfig) -> PseudoLabels {
    let (n, m) = plan.shape();
    let k = cfg.topk.max(1);
    let view = plan.view();

    let mut in_col_topk = Array2::from_elem((n, m), false);
    for (j, col) in view.columns().into_iter().enumerate() {
        for i in top_k(col.iter(), k) {
            in_col_topk[[i, j]] = true;
        }
    }

    let mut hard = Array2::zeros((n, m));
    let mut candidates = Vec::with_capacity(n);
    let mut kept_mask = Vec::with_capacity(n);
    for (i, row) in view.rows().into_iter().enumerate() {
        let cands: Vec<Candidate> = top_k(row.iter(), k)
            .into_iter()
            .map(|j| Candidate {
                target: j,
                value: row[j],
                kept: !cfg.relaxed_cc || in_col_topk[[i, j]],
            })
            .collect();
        for c in cands.iter().filter(|c| c.kept) {
            hard[[i, c.target]] = 1.0;
        }
        kept_mask.push(cands.iter().any(|c| c.kept));
        candidates.push(cands);
    }
    PseudoLabels {
        hard,
        candidates,
        kept_mask,
    }
}

/// Nearest neighbor of each source row by cosine similarity, ties to the
/// lowest target index.
pub fn infer_matches(feat_a: &FeatureMatrix, feat_b: &FeatureMatrix) -> Result<Vec<Match>> {
    let sim = cosine_similarity(feat_a, feat_b)?;
    Ok(sim
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            let j = argmax(row.iter());
            Match {
                source: i,
                target: j,
                score: row[j],
            }
        })
        .collect())
}

/// Row argmax of a plan as one match per source.
pub fn argmax_matches(plan: &TransportPlan) -> Vec<Match> {
    plan.row_argmax()
        .into_iter()
        .enumerate()
        .map(|(i, j)| Match {
            source: i,
            target: j,
            score: plan.get(i, j),
        })
        .collect()
}
