//! Correspondence matching between two point sets that carry both semantic
//! features and 3D geometry.
//!
//! The engine solves an entropic unbalanced optimal transport problem on a
//! cosine feature cost, then alternates between picking cycle-consistent
//! anchor pairs from the current plan and re-solving on a cost that fuses the
//! feature term with a Gromov-Wasserstein distortion term linearized around
//! those anchors. The final plan is turned into multi-hot pseudo-labels.
//!
//! Modules:
//! - [`types`] and [`cost`]: shared domain types and cost construction
//! - [`sinkhorn`]: balanced and unbalanced log-domain solvers
//! - [`gw`]: exact GW objective, linearized geometric cost, cost fusion
//! - [`anchors`]: anchor selection
//! - [`pipeline`]: the end-to-end pseudo-label generator
//! - [`losses`]: soft-target contrastive loss and dense soft-argmax loss
//! - [`synth`]: synthetic scenarios with known ground truth
//! - [`oracle`]: brute-force reference solvers

pub mod anchors;
pub mod cost;
pub mod error;
pub mod gw;
pub mod losses;
pub mod oracle;
pub mod pipeline;
mod rng;
pub mod sinkhorn;
pub mod synth;
pub mod types;

pub use anchors::{select_anchors, AnchorConfig, AnchorRanking, AnchorSet};
pub use cost::{minmax_normalize, pairwise_distances, semantic_cost};
pub use error::{Error, Result};
pub use gw::{fuse_costs, gw_objective_exact, linearized_geo_cost, FusionConfig};
pub use losses::{current_plan, dense_loss, soft_ce_loss, soft_target, LossReport, SimilarityMatrix, SoftTargetConfig};
pub use pipeline::{
    argmax_matches, extract_pseudo_labels, infer_matches, run_pipeline, run_pipeline_from, Candidate, Match,
    PipelineConfig, PipelineOutput, PseudoLabels, StageReport,
};
pub use sinkhorn::{
    solve, solve_balanced, solve_unbalanced, uot_objective, SolveDiagnostics, SolverConfig, SolverVariant,
};
pub use synth::{evaluate, generate, GroundTruth, Metrics, Scenario, ScenarioKind};
pub use types::{
    CostKind, CostMatrix, DiscreteMeasure, DistanceMatrix, FeatureMatrix, PairProblem, PlanMeta, PointSet3D, SolverTag,
    TransportPlan,
};
