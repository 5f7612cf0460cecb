//! On-disk formats.
//!
//! Binary files (pair bundles, plans) are an 8-byte little-endian header
//! length, a JSON header of that many bytes, then little-endian f64 blocks.
//! Labels and diagnostics are line records (see [`crate::logfmt`]).

use std::fs;
use std::path::Path;

use fgw_core::{
    Candidate, DiscreteMeasure, FeatureMatrix, GroundTruth, PairProblem, PipelineOutput, PlanMeta, PointSet3D,
    PseudoLabels, Scenario, SolverTag, TransportPlan,
};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::logfmt::{num, parse_line, Record};

pub const BUNDLE_FORMAT: &str = "fgw-pair-bundle";
pub const PLAN_FORMAT: &str = "fgw-plan";
pub const FORMAT_VERSION: u32 = 1;

pub const FLAG_SCENARIO: u32 = 1;
pub const FLAG_GROUND_TRUTH: u32 = 2;

fn malformed(what: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("malformed {what}: {msg}"))
}

fn frame(header: &impl Serialize, payload: impl Iterator<Item = f64>) -> Vec<u8> {
    let json = serde_json::to_vec(header).expect("headers serialize");
    let mut out = Vec::with_capacity(8 + json.len());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn unframe<'a, H: Deserialize<'a>>(bytes: &'a [u8], what: &str) -> CliResult<(H, Vec<f64>)> {
    if bytes.len() < 8 {
        return Err(malformed(what, "shorter than the length prefix"));
    }
    let len = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
    let rest = &bytes[8..];
    if len > rest.len() {
        return Err(malformed(what, "header runs past end of file"));
    }
    let header = serde_json::from_slice(&rest[..len]).map_err(|e| malformed(what, e))?;
    let payload = &rest[len..];
    if !payload.len().is_multiple_of(8) {
        return Err(malformed(what, "payload is not a whole number of f64 values"));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((header, values))
}

pub fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path.display(), e))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path.display(), e))
}

#[derive(Serialize, Deserialize)]
struct BundleHeader {
    format: String,
    format_version: u32,
    n: usize,
    m: usize,
    d: usize,
    flags: u32,
    scenario: Option<Scenario>,
    ground_truth: Option<GroundTruth>,
}

/// A matching instance with optional provenance and ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBundle {
    pub problem: PairProblem,
    pub scenario: Option<Scenario>,
    pub ground_truth: Option<GroundTruth>,
}

impl PairBundle {
    pub fn payload_len(n: usize, m: usize, d: usize) -> usize {
        8 * (n * d + m * d + 3 * n + 3 * m + n + m)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.problem;
        let flags = if self.scenario.is_some() { FLAG_SCENARIO } else { 0 }
            | if self.ground_truth.is_some() {
                FLAG_GROUND_TRUTH
            } else {
                0
            };
        let header = BundleHeader {
            format: BUNDLE_FORMAT.into(),
            format_version: FORMAT_VERSION,
            n: p.n(),
            m: p.m(),
            d: p.dim(),
            flags,
            scenario: self.scenario,
            ground_truth: self.ground_truth.clone(),
        };
        let payload = p
            .feat_a
            .view()
            .iter()
            .chain(p.feat_b.view().iter())
            .copied()
            .chain(p.pts_a.as_slice().iter().flatten().copied())
            .chain(p.pts_b.as_slice().iter().flatten().copied())
            .chain(p.mass_a.as_slice().iter().copied())
            .chain(p.mass_b.as_slice().iter().copied())
            .collect::<Vec<f64>>();
        frame(&header, payload.into_iter())
    }

    pub fn from_bytes(bytes: &[u8]) -> CliResult<Self> {
        const WHAT: &str = "pair bundle";
        let (h, values): (BundleHeader, Vec<f64>) = unframe(bytes, WHAT)?;
        if h.format != BUNDLE_FORMAT || h.format_version != FORMAT_VERSION {
            return Err(malformed(
                WHAT,
                format!(
                    "expected {BUNDLE_FORMAT} v{FORMAT_VERSION}, got {} v{}",
                    h.format, h.format_version
                ),
            ));
        }
        let (n, m, d) = (h.n, h.m, h.d);
        if values.len() * 8 != Self::payload_len(n, m, d) {
            return Err(malformed(
                WHAT,
                format!(
                    "payload has {} bytes, header implies {}",
                    values.len() * 8,
                    Self::payload_len(n, m, d)
                ),
            ));
        }
        if (h.flags & FLAG_SCENARIO != 0) != h.scenario.is_some()
            || (h.flags & FLAG_GROUND_TRUTH != 0) != h.ground_truth.is_some()
        {
            return Err(malformed(WHAT, "flags disagree with header contents"));
        }
        let mut rest = values.as_slice();
        let mut take = |k: usize| {
            let (head, tail) = rest.split_at(k);
            rest = tail;
            head.to_vec()
        };
        let points = |flat: Vec<f64>| flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect::<Vec<_>>();
        let bad = |e: fgw_core::Error| malformed(WHAT, e);
        let feat_a = FeatureMatrix::new(Array2::from_shape_vec((n, d), take(n * d)).map_err(|e| malformed(WHAT, e))?)
            .map_err(bad)?;
        let feat_b = FeatureMatrix::new(Array2::from_shape_vec((m, d), take(m * d)).map_err(|e| malformed(WHAT, e))?)
            .map_err(bad)?;
        let pts_a = PointSet3D::new(points(take(3 * n))).map_err(bad)?;
        let pts_b = PointSet3D::new(points(take(3 * m))).map_err(bad)?;
        let mass_a = DiscreteMeasure::new(take(n)).map_err(bad)?;
        let mass_b = DiscreteMeasure::new(take(m)).map_err(bad)?;
        let problem = PairProblem::new(feat_a, feat_b, pts_a, pts_b, mass_a, mass_b).map_err(bad)?;

        if let Some(gt) = &h.ground_truth {
            let rebuilt = GroundTruth::new(gt.assignment.clone(), m).map_err(bad)?;
            if gt.assignment.len() != n || &rebuilt != gt {
                return Err(malformed(WHAT, "ground truth is inconsistent"));
            }
        }
        Ok(Self {
            problem,
            scenario: h.scenario,
            ground_truth: h.ground_truth,
        })
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        Self::from_bytes(&read_file(path)?).map_err(|e| match e {
            CliError::Io(m) => CliError::Io(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        write_file(path, &self.to_bytes())
    }
}

#[derive(Serialize, Deserialize)]
struct PlanHeader {
    format: String,
    format_version: u32,
    n: usize,
    m: usize,
    solver: SolverTag,
    stage: usize,
    /// Text so that non-finite objectives survive.
    objective: String,
}

pub fn plan_to_bytes(plan: &TransportPlan) -> Vec<u8> {
    let (n, m) = plan.shape();
    let header = PlanHeader {
        format: PLAN_FORMAT.into(),
        format_version: FORMAT_VERSION,
        n,
        m,
        solver: plan.meta.solver,
        stage: plan.meta.stage,
        objective: num(plan.meta.objective),
    };
    frame(&header, plan.view().iter().copied())
}

pub fn plan_from_bytes(bytes: &[u8]) -> CliResult<TransportPlan> {
    const WHAT: &str = "plan file";
    let (h, values): (PlanHeader, Vec<f64>) = unframe(bytes, WHAT)?;
    if h.format != PLAN_FORMAT || h.format_version != FORMAT_VERSION {
        return Err(malformed(WHAT, format!("expected {PLAN_FORMAT} v{FORMAT_VERSION}")));
    }
    if values.len() != h.n * h.m {
        return Err(malformed(
            WHAT,
            format!("payload has {} values, header implies {}", values.len(), h.n * h.m),
        ));
    }
    let objective = h
        .objective
        .parse()
        .map_err(|_| malformed(WHAT, format!("objective '{}'", h.objective)))?;
    let data = Array2::from_shape_vec((h.n, h.m), values).map_err(|e| malformed(WHAT, e))?;
    TransportPlan::new(
        data,
        PlanMeta {
            solver: h.solver,
            stage: h.stage,
            objective,
        },
    )
    .map_err(|e| malformed(WHAT, e))
}

pub fn read_plan(path: &Path) -> CliResult<TransportPlan> {
    plan_from_bytes(&read_file(path)?).map_err(|e| match e {
        CliError::Io(m) => CliError::Io(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Header line plus one line per candidate, rows in order, candidates by rank.
pub fn labels_to_text(labels: &PseudoLabels, topk: usize, relaxed_cc: bool) -> String {
    let (n, m) = labels.shape();
    let mut out = Record::new("labels")
        .with("n", n)
        .with("m", m)
        .with("topk", topk)
        .with("relaxed_cc", relaxed_cc)
        .line();
    out.push('\n');
    for (i, row) in labels.candidates.iter().enumerate() {
        for (rank, c) in row.iter().enumerate() {
            out.push_str(
                &Record::new("candidate")
                    .with("source", i)
                    .with("rank", rank)
                    .with("target", c.target)
                    .float("value", c.value)
                    .with("kept", c.kept)
                    .line(),
            );
            out.push('\n');
        }
    }
    out
}

pub fn labels_from_text(text: &str) -> CliResult<PseudoLabels> {
    let err = |line: usize, msg: String| malformed("labels file", format!("line {}: {msg}", line + 1));
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| err(0, "empty".into()))?;
    let head = parse_line(first).map_err(|e| err(0, e))?;
    if head.kind() != Some("labels") {
        return Err(err(0, "expected a labels header".into()));
    }
    let n: usize = head.require("n").map_err(|e| err(0, e))?;
    let m: usize = head.require("m").map_err(|e| err(0, e))?;
    let mut candidates: Vec<Vec<Candidate>> = vec![Vec::new(); n];
    for (k, line) in lines {
        let rec = parse_line(line).map_err(|e| err(k, e))?;
        if rec.kind() != Some("candidate") {
            return Err(err(k, "expected a candidate record".into()));
        }
        let source: usize = rec.require("source").map_err(|e| err(k, e))?;
        let rank: usize = rec.require("rank").map_err(|e| err(k, e))?;
        let target: usize = rec.require("target").map_err(|e| err(k, e))?;
        if source >= n || target >= m || rank != candidates[source].len() {
            return Err(err(k, "candidate out of range or out of order".into()));
        }
        candidates[source].push(Candidate {
            target,
            value: rec.require("value").map_err(|e| err(k, e))?,
            kept: rec.require("kept").map_err(|e| err(k, e))?,
        });
    }
    let mut hard = Array2::zeros((n, m));
    for (i, row) in candidates.iter().enumerate() {
        for c in row.iter().filter(|c| c.kept) {
            hard[[i, c.target]] = 1.0;
        }
    }
    let kept_mask = candidates.iter().map(|r| r.iter().any(|c| c.kept)).collect();
    Ok(PseudoLabels {
        hard,
        candidates,
        kept_mask,
    })
}

/// One record per stage, then a summary.
pub fn diagnostics_to_text(out: &PipelineOutput) -> String {
    let mut text = String::new();
    for s in &out.stages {
        let d = &s.diagnostics;
        text.push_str(
            &Record::new("stage")
                .with("stage", s.stage)
                .float("objective", s.objective)
                .float("row_marginal_err", d.row_marginal_err)
                .float("col_marginal_err", d.col_marginal_err)
                .float("transported_mass", d.transported_mass)
                .with("iterations", d.iterations_used)
                .float("potential_change", d.final_potential_change)
                .with("converged", d.converged)
                .with("anchors", s.anchor_count)
                .float("anchor_mean_cycle_error", s.mean_cycle_error)
                .with("anchor_fallback", s.anchor_fallback)
                .with("anchor_shortfall", s.anchor_shortfall)
                .line(),
        );
        text.push('\n');
    }
    text.push_str(
        &Record::new("summary")
            .with("solver", out.final_plan().meta.solver)
            .with("stages", out.stages.len())
            .with("warning", out.has_warnings())
            .line(),
    );
    text.push('\n');
    text
}
