//! Subcommands. Each returns the text it prints on standard output.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use fgw_core::oracle::{lp_permutation_optimum, LP_MAX_SIDE};
use fgw_core::{
    argmax_matches, evaluate, extract_pseudo_labels, generate, gw::GW_EXACT_MAX_CELLS, gw_objective_exact,
    infer_matches, pairwise_distances, run_pipeline, semantic_cost, solve_balanced, AnchorConfig, FusionConfig,
    GroundTruth, Match, Metrics, PipelineConfig, PipelineOutput, PointSet3D, Scenario, ScenarioKind, SolverConfig,
    SolverVariant, TransportPlan,
};
use rayon::prelude::*;

use crate::error::{CliError, CliResult};
use crate::formats::{
    diagnostics_to_text, labels_from_text, labels_to_text, plan_to_bytes, read_file, read_plan, write_file, PairBundle,
};
use crate::logfmt::{num, opt_num, Record};

pub const BUNDLE_EXT: &str = "fgwb";
pub const PLAN_EXT: &str = "fgwp";
pub const LABELS_EXT: &str = "labels";
pub const DIAG_EXT: &str = "diag";

/// Environment variable bounding batch workers.
pub const THREADS_ENV: &str = "FGW_THREADS";

#[derive(Debug, Parser)]
#[command(name = "fgw", version, about = "Fused Gromov-Wasserstein correspondence matching")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic pair bundle with ground truth.
    Synth(SynthArgs),
    /// Run the pipeline on one bundle or a directory of bundles.
    Match(MatchArgs),
    /// Score labels or a plan against the bundle's ground truth.
    Eval(EvalArgs),
    /// Brute-force GW and permutation-LP checks.
    Oracle(OracleArgs),
}

fn parse_kind(s: &str) -> Result<ScenarioKind, String> {
    s.parse().map_err(|e: fgw_core::Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_parser = parse_kind)]
    pub scenario: ScenarioKind,
    #[arg(long, default_value_t = 32)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.5)]
    pub overlap: f64,
    #[arg(long, default_value_t = 0.8)]
    pub alias: f64,
    /// Output path; defaults to `<scenario>-n<n>-seed<seed>.fgwb`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverChoice {
    /// Unbalanced OT with KL marginals.
    Uot,
    Balanced,
    /// Literal transcription of the reference pseudocode.
    PaperPseudocode,
}

impl SolverChoice {
    fn variant(self) -> SolverVariant {
        match self {
            SolverChoice::Uot => SolverVariant::UotTextbook,
            SolverChoice::Balanced => SolverVariant::Balanced,
            SolverChoice::PaperPseudocode => SolverVariant::UotPaperPseudocode,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    #[arg(long, default_value_t = 0.3)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.75)]
    pub rho: f64,
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,
    /// Anchors per refinement stage.
    #[arg(long, default_value_t = 64)]
    pub anchors: usize,
    /// Refinement stages.
    #[arg(long, default_value_t = 5)]
    pub iters: usize,
    #[arg(long, default_value_t = 3)]
    pub topk: usize,
    /// Cycle-error quantile for anchor selection.
    #[arg(long, default_value_t = 0.01)]
    pub quantile: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, value_enum, default_value_t = SolverChoice::Uot)]
    pub solver: SolverChoice,
    /// Keep every top-k candidate instead of mutual top-k only.
    #[arg(long)]
    pub no_cycle_filter: bool,
}

impl PipelineArgs {
    pub fn config(&self) -> PipelineConfig {
        PipelineConfig {
            iters: self.iters,
            fusion: FusionConfig { alpha: self.alpha },
            anchor: AnchorConfig {
                k: self.anchors,
                quantile: self.quantile,
                ..AnchorConfig::default()
            },
            solver: SolverConfig {
                rho: self.rho,
                epsilon: self.epsilon,
                max_iters: self.max_iters,
                tol: self.tol,
                variant: self.solver.variant(),
            },
            topk: self.topk,
            relaxed_cc: !self.no_cycle_filter,
        }
    }
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    /// Input bundle.
    #[arg(required_unless_present = "batch", conflicts_with = "batch")]
    pub bundle: Option<PathBuf>,
    /// Output prefix; `.fgwp`, `.labels` and `.diag` are appended.
    /// Defaults to the bundle path without its extension.
    #[arg(long, conflicts_with = "batch")]
    pub out: Option<PathBuf>,
    /// Process every `.fgwb` file in this directory.
    #[arg(long)]
    pub batch: Option<PathBuf>,
    /// Output directory for batch mode; defaults to the batch directory.
    #[arg(long, requires = "batch")]
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub bundle: PathBuf,
    /// Labels file written by `match`.
    #[arg(long, conflicts_with = "plan", required_unless_present = "plan")]
    pub labels: Option<PathBuf>,
    /// Plan file; scored through its row argmax.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// 3D match radius; defaults to 0.1 times the target cloud diameter.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Also print exact-match accuracy of nearest neighbor, semantic OT,
    /// fused OT and fused UOT, and the per-stage series of fused UOT.
    #[arg(long)]
    pub series: bool,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    pub bundle: PathBuf,
    /// Exact GW value of this plan file.
    #[arg(long, conflicts_with_all = ["identity", "ground_truth"])]
    pub plan: Option<PathBuf>,
    /// Exact GW value of the identity pairing (needs n = m).
    #[arg(long, conflicts_with = "ground_truth")]
    pub identity: bool,
    /// Exact GW value of the ground-truth pairing.
    #[arg(long)]
    pub ground_truth: bool,
    /// Permutation-LP optimum of the semantic cost, checked against
    /// balanced Sinkhorn.
    #[arg(long)]
    pub lp: bool,
    /// Sinkhorn regularization for the LP cross-check.
    #[arg(long, default_value_t = 0.01)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 100_000)]
    pub max_iters: usize,
}

pub fn run(cli: Cli) -> CliResult<String> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Match(a) => cmd_match(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Oracle(a) => cmd_oracle(&a),
    }
}

pub fn cmd_synth(a: &SynthArgs) -> CliResult<String> {
    let scn = Scenario {
        kind: a.scenario,
        n_points: a.n,
        seed: a.seed,
        feature_dim: a.dim,
        noise_sigma: a.noise,
        overlap_fraction: a.overlap,
        alias_fraction: a.alias,
    };
    let (problem, gt) = generate(&scn)?;
    let path = a
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}-n{}-seed{}.{BUNDLE_EXT}", a.scenario, a.n, a.seed)));
    let summary = Record::new("synth")
        .with("scenario", a.scenario)
        .with("n", problem.n())
        .with("m", problem.m())
        .with("d", problem.dim())
        .with("seed", a.seed)
        .with("assigned", gt.n_assigned())
        .with("path", path.display())
        .line();
    PairBundle {
        problem,
        scenario: Some(scn),
        ground_truth: Some(gt),
    }
    .write(&path)?;
    Ok(summary + "\n")
}

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Runs one bundle and writes its three outputs next to `prefix`.
fn match_one(bundle_path: &Path, prefix: &Path, cfg: &PipelineConfig) -> CliResult<String> {
    let bundle = PairBundle::read(bundle_path)?;
    let out = run_pipeline(&bundle.problem, cfg)?;
    let labels = extract_pseudo_labels(out.final_plan(), cfg);
    let plan_path = with_ext(prefix, PLAN_EXT);
    write_file(&plan_path, &plan_to_bytes(out.final_plan()))?;
    write_file(
        &with_ext(prefix, LABELS_EXT),
        labels_to_text(&labels, cfg.topk, cfg.relaxed_cc).as_bytes(),
    )?;
    write_file(&with_ext(prefix, DIAG_EXT), diagnostics_to_text(&out).as_bytes())?;
    Ok(Record::new("match")
        .with("bundle", bundle_path.display())
        .with("stages", out.stages.len())
        .with("kept_rows", labels.kept_mask.iter().filter(|&&k| k).count())
        .with("warning", out.has_warnings())
        .with("plan", plan_path.display())
        .line())
}

/// Worker count from the environment, else the logical CPU count.
pub fn batch_threads() -> CliResult<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(raw) => match raw.trim().parse::<usize>() {
            Ok(k) if k >= 1 => Ok(k),
            _ => Err(CliError::Usage(format!(
                "{THREADS_ENV} must be a positive integer, got '{raw}'"
            ))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

pub fn cmd_match(a: &MatchArgs) -> CliResult<String> {
    let cfg = a.pipeline.config();
    cfg.validate()?;
    if let Some(dir) = &a.batch {
        let out_dir = a.out_dir.clone().unwrap_or_else(|| dir.clone());
        let mut inputs: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| CliError::io(dir.display(), e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == BUNDLE_EXT))
            .collect();
        inputs.sort();
        std::fs::create_dir_all(&out_dir).map_err(|e| CliError::io(out_dir.display(), e))?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(batch_threads()?)
            .build()
            .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
        let lines: Vec<CliResult<String>> = pool.install(|| {
            inputs
                .par_iter()
                .map(|p| {
                    let stem = p.file_stem().expect("listed files have names");
                    match_one(p, &out_dir.join(stem), &cfg)
                })
                .collect()
        });
        let mut text = String::new();
        for line in lines {
            text.push_str(&line?);
            text.push('\n');
        }
        return Ok(text);
    }
    let bundle = a.bundle.as_ref().expect("clap requires a bundle without --batch");
    let prefix = a.out.clone().unwrap_or_else(|| bundle.with_extension(""));
    Ok(match_one(bundle, &prefix, &cfg)? + "\n")
}

fn diameter(pts: &PointSet3D) -> CliResult<f64> {
    let d = pairwise_distances(pts)?;
    Ok(d.view().iter().copied().fold(0.0, f64::max))
}

fn metrics_record(kind: &str, m: &Metrics, radius: f64) -> Record {
    Record::new(kind)
        .with("precision", opt_num(m.precision))
        .float("recall", m.recall)
        .float("accuracy", m.accuracy)
        .with("emitted", m.emitted)
        .with("assigned", m.assigned)
        .float("radius", radius)
}

fn accuracy(matches: &[Match], gt: &GroundTruth, pts_b: &PointSet3D, radius: f64) -> CliResult<f64> {
    Ok(evaluate(matches, gt, radius, pts_b)?.accuracy)
}

fn final_argmax(out: &PipelineOutput) -> Vec<Match> {
    argmax_matches(out.final_plan())
}

pub fn cmd_eval(a: &EvalArgs) -> CliResult<String> {
    let bundle = PairBundle::read(&a.bundle)?;
    let gt = bundle
        .ground_truth
        .as_ref()
        .ok_or_else(|| CliError::Usage(format!("{} carries no ground truth", a.bundle.display())))?;
    let prob = &bundle.problem;
    let radius = match a.radius {
        Some(r) => r,
        None => 0.1 * diameter(&prob.pts_b)?,
    };
    let (source, matches) = match (&a.labels, &a.plan) {
        (Some(path), _) => {
            let text = String::from_utf8(read_file(path)?).map_err(|e| CliError::io(path.display(), e))?;
            let labels = labels_from_text(&text)?;
            if labels.shape() != (prob.n(), prob.m()) {
                return Err(CliError::Usage(format!(
                    "labels are {:?}, bundle is {}x{}",
                    labels.shape(),
                    prob.n(),
                    prob.m()
                )));
            }
            ("labels", labels.matches())
        }
        (None, Some(path)) => {
            let plan = read_plan(path)?;
            if plan.shape() != (prob.n(), prob.m()) {
                return Err(CliError::Usage(format!(
                    "plan is {:?}, bundle is {}x{}",
                    plan.shape(),
                    prob.n(),
                    prob.m()
                )));
            }
            ("plan", argmax_matches(&plan))
        }
        (None, None) => unreachable!("clap requires labels or plan"),
    };
    let m = evaluate(&matches, gt, radius, &prob.pts_b)?;
    let mut text = metrics_record("metrics", &m, radius).with("source", source).line() + "\n";

    if a.series {
        let fused_uot = a.pipeline.config();
        fused_uot.validate()?;
        let balanced = SolverConfig {
            variant: SolverVariant::Balanced,
            ..fused_uot.solver
        };
        let semantic_ot = PipelineConfig {
            fusion: FusionConfig { alpha: 0.0 },
            solver: balanced,
            ..fused_uot
        };
        let fused_ot = PipelineConfig {
            solver: balanced,
            ..fused_uot
        };
        let nn = infer_matches(&prob.feat_a, &prob.feat_b)?;
        let full = run_pipeline(prob, &fused_uot)?;
        let series = [
            ("nn", accuracy(&nn, gt, &prob.pts_b, radius)?),
            (
                "semantic_ot",
                accuracy(
                    &final_argmax(&run_pipeline(prob, &semantic_ot)?),
                    gt,
                    &prob.pts_b,
                    radius,
                )?,
            ),
            (
                "fused_ot",
                accuracy(&final_argmax(&run_pipeline(prob, &fused_ot)?), gt, &prob.pts_b, radius)?,
            ),
            ("fused_uot", accuracy(&final_argmax(&full), gt, &prob.pts_b, radius)?),
        ];
        for (method, acc) in series {
            text += &(Record::new("series")
                .with("method", method)
                .float("accuracy", acc)
                .line()
                + "\n");
        }
        for plan in &full.stage_plans {
            let acc = accuracy(&argmax_matches(plan), gt, &prob.pts_b, radius)?;
            text += &(Record::new("stage_accuracy")
                .with("stage", plan.meta.stage)
                .float("accuracy", acc)
                .line()
                + "\n");
        }
    }
    Ok(text)
}

pub fn cmd_oracle(a: &OracleArgs) -> CliResult<String> {
    let bundle = PairBundle::read(&a.bundle)?;
    let prob = &bundle.problem;
    let (n, m) = (prob.n(), prob.m());
    if a.plan.is_none() && !a.identity && !a.ground_truth && !a.lp {
        return Err(CliError::Usage(
            "nothing to check: pass --plan, --identity, --ground-truth or --lp".into(),
        ));
    }
    let mut text = String::new();

    let gw_plan: Option<(&str, TransportPlan)> = if let Some(path) = &a.plan {
        Some(("file", read_plan(path)?))
    } else if a.identity {
        if n != m {
            return Err(CliError::Usage(format!("identity plan needs n = m, got {n}x{m}")));
        }
        let pairs: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
        Some(("identity", TransportPlan::from_pairs(n, m, &pairs)?))
    } else if a.ground_truth {
        let gt = bundle
            .ground_truth
            .as_ref()
            .ok_or_else(|| CliError::Usage(format!("{} carries no ground truth", a.bundle.display())))?;
        Some(("ground_truth", TransportPlan::from_pairs(n, m, &gt.pairs())?))
    } else {
        None
    };
    if let Some((label, plan)) = gw_plan {
        if n * m > GW_EXACT_MAX_CELLS {
            return Err(CliError::Usage(format!(
                "exact GW needs n*m <= {GW_EXACT_MAX_CELLS}, got {}",
                n * m
            )));
        }
        let da = pairwise_distances(&prob.pts_a)?;
        let db = pairwise_distances(&prob.pts_b)?;
        let value = gw_objective_exact(&plan, &da, &db)?;
        text += &(Record::new("gw").with("plan", label).float("value", value).line() + "\n");
    }

    if a.lp {
        if n != m || n > LP_MAX_SIDE {
            return Err(CliError::Usage(format!(
                "permutation LP needs n = m <= {LP_MAX_SIDE}, got {n}x{m}"
            )));
        }
        if (prob.mass_a.total() - 1.0).abs() > 1e-9 || (prob.mass_b.total() - 1.0).abs() > 1e-9 {
            return Err(CliError::Usage("LP cross-check needs masses summing to 1".into()));
        }
        let cost = semantic_cost(&prob.feat_a, &prob.feat_b)?;
        let (optimum, perm) = lp_permutation_optimum(&cost)?;
        let perm_text: Vec<String> = perm.iter().map(usize::to_string).collect();
        text += &(Record::new("lp")
            .float("optimum", optimum)
            .with("permutation", perm_text.join(","))
            .line()
            + "\n");
        let cfg = SolverConfig {
            max_iters: a.max_iters,
            ..SolverConfig::balanced(a.epsilon)
        };
        let (plan, diag) = solve_balanced(&cost, &prob.mass_a, &prob.mass_b, &cfg)?;
        let value = plan.cost_inner(&cost)?;
        let gap = if optimum == 0.0 {
            value.abs()
        } else {
            (value - optimum).abs() / optimum.abs()
        };
        text += &(Record::new("sinkhorn")
            .float("epsilon", a.epsilon)
            .float("value", value)
            .with("rel_gap", num(gap))
            .with("converged", diag.converged)
            .line()
            + "\n");
    }
    Ok(text)
}
