//! Entropic optimal transport solvers in the log domain.
//!
//! Three variants share one configuration type:
//!
//! - [`SolverVariant::Balanced`]: classic Sinkhorn with hard marginals.
//! - [`SolverVariant::UotTextbook`]: unbalanced OT with KL marginal penalties
//!   of strength `rho` and entropic regularization `epsilon`. Each potential
//!   update is damped by `rho / (rho + epsilon)`, which makes the fixed point
//!   the exact minimizer of
//!   `<C, P> + rho KL(P1 | a) + rho KL(P'1 | b) + epsilon KL(P | a b')`.
//!   Plans have the form `P[i][j] = a_i b_j exp((f_i + g_j - C[i][j]) / epsilon)`.
//! - [`SolverVariant::UotPaperPseudocode`]: a literal transcription of the
//!   reference pseudocode, with log-kernel `Z = -C / rho` and potential
//!   updates `u = rho (log a - LSE(Z + v))`, `v = rho (log b - LSE(Z + u))`.
//!   It ignores `epsilon`. Its fixed point matches the row marginal only when
//!   `rho = 1`; for other `rho` the row log-marginal settles at
//!   `rho log a + (1 - rho) LSE(Z + v)`.
//!
//! Convergence is measured on the log-plan: the sup over cells of the change
//! in `log P[i][j]` between sweeps. This is invariant to the constant shift
//! `(f + c, g - c)` that leaves the plan unchanged, which keeps the stopping
//! rule meaningful when `rho` is large and that shift decays very slowly.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{CostMatrix, DiscreteMeasure, PlanMeta, SolverTag, TransportPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverVariant {
    Balanced,
    UotTextbook,
    UotPaperPseudocode,
}

impl SolverVariant {
    pub fn tag(self) -> SolverTag {
        match self {
            SolverVariant::Balanced => SolverTag::Balanced,
            SolverVariant::UotTextbook => SolverTag::UotTextbook,
            SolverVariant::UotPaperPseudocode => SolverTag::UotPaperPseudocode,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// KL marginal penalty.
    pub rho: f64,
    /// Entropic regularization.
    pub epsilon: f64,
    pub max_iters: usize,
    /// Stop when the sup-norm change of the log-plan drops below this.
    pub tol: f64,
    pub variant: SolverVariant,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rho: 0.75,
            epsilon: 1.0,
            max_iters: 1000,
            tol: 1e-9,
            variant: SolverVariant::UotTextbook,
        }
    }
}

impl SolverConfig {
    pub fn balanced(epsilon: f64) -> Self {
        Self {
            epsilon,
            variant: SolverVariant::Balanced,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.rho.is_finite() || self.rho <= 0.0 {
            return Err(Error::InvalidParameter(format!("rho must be > 0, got {}", self.rho)));
        }
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::InvalidParameter(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveDiagnostics {
    pub iterations_used: usize,
    pub final_potential_change: f64,
    /// L1 distance of the plan's row sums to `a`.
    pub row_marginal_err: f64,
    /// L1 distance of the plan's column sums to `b`.
    pub col_marginal_err: f64,
    pub transported_mass: f64,
    /// False when `max_iters` ran out before the tolerance was met. The plan
    /// is still returned.
    pub converged: bool,
}

/// Dispatch on `cfg.variant`.
pub fn solve(
    c: &CostMatrix,
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    cfg: &SolverConfig,
) -> Result<(TransportPlan, SolveDiagnostics)> {
    match cfg.variant {
        SolverVariant::Balanced => solve_balanced(c, a, b, cfg),
        _ => solve_unbalanced(c, a, b, cfg),
    }
}

/// Entropic balanced OT. `cfg.rho` is ignored.
pub fn solve_balanced(
    c: &CostMatrix,
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    cfg: &SolverConfig,
) -> Result<(TransportPlan, SolveDiagnostics)> {
    cfg.validate()?;
    check_shapes(c, a, b)?;
    for (name, m) in [("a", a), ("b", b)] {
        if (m.total() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "balanced solver needs {name} to sum to 1, got {}",
                m.total()
            )));
        }
    }
    let run = damped_scaling(c, a, b, cfg.epsilon, 1.0, cfg.max_iters, cfg.tol);
    let plan = plan_from_potentials(c, a, b, &run.f, &run.g, cfg.epsilon);
    let objective = plan.iter().zip(c.view().iter()).map(|(p, c)| p * c).sum::<f64>();
    finish(plan, run, a, b, SolverTag::Balanced, objective)
}

/// Unbalanced OT, `cfg.variant` selecting the textbook or pseudocode form.
pub fn solve_unbalanced(
    c: &CostMatrix,
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    cfg: &SolverConfig,
) -> Result<(TransportPlan, SolveDiagnostics)> {
    cfg.validate()?;
    check_shapes(c, a, b)?;
    if a.total() <= 0.0 || b.total() <= 0.0 {
        return Err(Error::InvalidParameter("marginals must carry positive mass".into()));
    }
    let (plan, run, tag) = match cfg.variant {
        SolverVariant::UotTextbook => {
            let damping = cfg.rho / (cfg.rho + cfg.epsilon);
            let run = damped_scaling(c, a, b, cfg.epsilon, damping, cfg.max_iters, cfg.tol);
            let plan = plan_from_potentials(c, a, b, &run.f, &run.g, cfg.epsilon);
            (plan, run, SolverTag::UotTextbook)
        }
        SolverVariant::UotPaperPseudocode => {
            let (plan, run) = pseudocode_scaling(c, a, b, cfg.rho, cfg.max_iters, cfg.tol);
            (plan, run, SolverTag::UotPaperPseudocode)
        }
        SolverVariant::Balanced => {
            return Err(Error::InvalidParameter(
                "solve_unbalanced needs an unbalanced variant".into(),
            ))
        }
    };
    let tp = TransportPlan::from_parts_unchecked(plan.clone(), PlanMeta::default());
    let objective = match uot_objective(&tp, c, a, b, cfg.rho) {
        Ok(v) => v,
        Err(Error::InfeasibleMarginal) => f64::INFINITY,
        Err(e) => return Err(e),
    };
    finish(plan, run, a, b, tag, objective)
}

/// `<C, P> + rho KL(P1 | a) + rho KL(P'1 | b)` with the generalized KL
/// `KL(p | q) = sum p log(p / q) - p + q`, `0 log 0 = 0`.
///
/// Returns [`Error::InfeasibleMarginal`] when mass lands on a zero-mass
/// reference entry.
pub fn uot_objective(
    plan: &TransportPlan,
    c: &CostMatrix,
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    rho: f64,
) -> Result<f64> {
    check_shapes(c, a, b)?;
    let transport = plan.cost_inner(c)?;
    let kl_rows = generalized_kl(&plan.row_sums(), a.as_slice())?;
    let kl_cols = generalized_kl(&plan.col_sums(), b.as_slice())?;
    Ok(transport + rho * kl_rows + rho * kl_cols)
}

/// The full objective minimized by the textbook solver: [`uot_objective`]
/// plus `epsilon KL(P | a b')`.
pub fn uot_entropic_objective(
    plan: &TransportPlan,
    c: &CostMatrix,
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    rho: f64,
    epsilon: f64,
) -> Result<f64> {
    let (n, m) = plan.shape();
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..m {
            let p = plan.get(i, j);
            let q = a.as_slice()[i] * b.as_slice()[j];
            if p > 0.0 {
                if q == 0.0 {
                    return Err(Error::InfeasibleMarginal);
                }
                kl += p * (p / q).ln();
            }
            kl += q - p;
        }
    }
    Ok(uot_objective(plan, c, a, b, rho)? + epsilon * kl)
}

/// `sum P (log P - 1)` with `0 log 0 = 0`.
pub fn neg_entropy(plan: &TransportPlan) -> f64 {
    plan.view()
        .iter()
        .map(|&p| if p > 0.0 { p * (p.ln() - 1.0) } else { 0.0 })
        .sum()
}

fn generalized_kl(p: &[f64], q: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (&p, &q) in p.iter().zip(q) {
        if p > 0.0 {
            if q == 0.0 {
                return Err(Error::InfeasibleMarginal);
            }
            total += p * (p / q).ln();
        }
        total += q - p;
    }
    Ok(total)
}

fn check_shapes(c: &CostMatrix, a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<()> {
    if c.rows() != a.len() || c.cols() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "cost {:?} vs marginals ({}, {})",
            c.shape(),
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

struct ScalingRun {
    f: Array1<f64>,
    g: Array1<f64>,
    iterations: usize,
    change: f64,
    converged: bool,
}

/// Max-shifted log-sum-exp. All `-inf` input gives `-inf`.
fn logsumexp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// `sup_{i,j} |df_i + dg_j|` over finite entries.
fn log_plan_change(f_old: &Array1<f64>, f: &Array1<f64>, g_old: &Array1<f64>, g: &Array1<f64>) -> f64 {
    fn range(old: &Array1<f64>, new: &Array1<f64>) -> (f64, f64) {
        old.iter()
            .zip(new.iter())
            .filter(|(o, n)| o.is_finite() && n.is_finite())
            .map(|(o, n)| n - o)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)))
    }
    let (flo, fhi) = range(f_old, f);
    let (glo, ghi) = range(g_old, g);
    if !flo.is_finite() || !glo.is_finite() {
        return f64::INFINITY;
    }
    (fhi + ghi).abs().max((flo + glo).abs())
}

/// Alternating log-domain updates on potentials in cost units:
/// `f_i = -damping * eps * LSE_j(log b_j + (g_j - C_ij) / eps)`, and the
/// symmetric column update. `damping = 1` is balanced Sinkhorn.
fn damped_scaling(
    c: &CostMatrix,
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    eps: f64,
    damping: f64,
    max_iters: usize,
    tol: f64,
) -> ScalingRun {
    let cost = c.view();
    let cost_t = cost.t().as_standard_layout().into_owned();
    let (n, m) = cost.dim();
    let log_a: Vec<f64> = a.as_slice().iter().map(|v| v.ln()).collect();
    let log_b: Vec<f64> = b.as_slice().iter().map(|v| v.ln()).collect();
    let mut f = Array1::<f64>::zeros(n);
    let mut g = Array1::<f64>::zeros(m);
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iters {
        iterations += 1;
        let f_old = f.clone();
        let g_old = g.clone();
        for i in 0..n {
            let row = cost.row(i);
            let lse = logsumexp(
                row.iter()
                    .zip(g.iter().zip(&log_b))
                    .map(|(&cij, (&gj, &lb))| lb + (gj - cij) / eps),
            );
            f[i] = -damping * eps * lse;
        }
        for j in 0..m {
            let col = cost_t.row(j);
            let lse = logsumexp(
                col.iter()
                    .zip(f.iter().zip(&log_a))
                    .map(|(&cij, (&fi, &la))| la + (fi - cij) / eps),
            );
            g[j] = -damping * eps * lse;
        }
        change = log_plan_change(&f_old, &f, &g_old, &g) / eps;
        if change < tol {
            converged = true;
            break;
        }
    }
    ScalingRun {
        f,
        g,
        iterations,
        change,
        converged,
    }
}

fn plan_from_potentials(
    c: &CostMatrix,
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    f: &Array1<f64>,
    g: &Array1<f64>,
    eps: f64,
) -> Array2<f64> {
    let cost = c.view();
    let (a, b) = (a.as_slice(), b.as_slice());
    Array2::from_shape_fn(cost.dim(), |(i, j)| {
        a[i] * b[j] * ((f[i] + g[j] - cost[[i, j]]) / eps).exp()
    })
}

/// Literal form of the reference pseudocode (log-kernel `Z = -C / rho`).
fn pseudocode_scaling(
    c: &CostMatrix,
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    rho: f64,
    max_iters: usize,
    tol: f64,
) -> (Array2<f64>, ScalingRun) {
    let z = c.view().mapv(|v| -v / rho);
    let z_t = z.t().as_standard_layout().into_owned();
    let (n, m) = z.dim();
    let log_mu: Vec<f64> = a.as_slice().iter().map(|v| v.ln()).collect();
    let log_nu: Vec<f64> = b.as_slice().iter().map(|v| v.ln()).collect();
    let mut u = Array1::<f64>::zeros(n);
    let mut v = Array1::<f64>::zeros(m);
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iters {
        iterations += 1;
        let u_old = u.clone();
        let v_old = v.clone();
        for i in 0..n {
            let lse = logsumexp(z.row(i).iter().zip(v.iter()).map(|(&zij, &vj)| zij + vj));
            u[i] = rho * (log_mu[i] - lse);
        }
        for j in 0..m {
            let lse = logsumexp(z_t.row(j).iter().zip(u.iter()).map(|(&zij, &ui)| zij + ui));
            v[j] = rho * (log_nu[j] - lse);
        }
        change = log_plan_change(&u_old, &u, &v_old, &v);
        if change < tol {
            converged = true;
            break;
        }
    }
    let plan = Array2::from_shape_fn((n, m), |(i, j)| (z[[i, j]] + u[i] + v[j]).exp());
    (
        plan,
        ScalingRun {
            f: u,
            g: v,
            iterations,
            change,
            converged,
        },
    )
}

fn finish(
    plan: Array2<f64>,
    run: ScalingRun,
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    solver: SolverTag,
    objective: f64,
) -> Result<(TransportPlan, SolveDiagnostics)> {
    let plan = TransportPlan::new(
        plan,
        PlanMeta {
            solver,
            stage: 0,
            objective,
        },
    )?;
    let l1 = |sums: Vec<f64>, target: &[f64]| -> f64 { sums.iter().zip(target).map(|(s, t)| (s - t).abs()).sum() };
    let diag = SolveDiagnostics {
        iterations_used: run.iterations,
        final_potential_change: run.change,
        row_marginal_err: l1(plan.row_sums(), a.as_slice()),
        col_marginal_err: l1(plan.col_sums(), b.as_slice()),
        transported_mass: plan.total_mass(),
        converged: run.converged,
    };
    Ok((plan, diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::CostKind;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cost(data: Array2<f64>) -> CostMatrix {
        CostMatrix::new(data, CostKind::Fused).unwrap()
    }

    fn random_cost(seed: u64, n: usize, m: usize) -> CostMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        cost(Array2::from_shape_fn((n, m), |_| rng.random::<f64>()))
    }

    fn uniform(n: usize) -> DiscreteMeasure {
        DiscreteMeasure::uniform(n).unwrap()
    }

    #[test]
    fn balanced_small_epsilon_picks_cheaper_permutation() {
        let c = cost(array![[0.0, 1.0], [1.0, 0.0]]);
        let cfg = SolverConfig {
            max_iters: 10_000,
            ..SolverConfig::balanced(0.01)
        };
        let (p, d) = solve_balanced(&c, &uniform(2), &uniform(2), &cfg).unwrap();
        assert!(d.converged);
        assert!((p.get(0, 0) - 0.5).abs() < 1e-10);
        assert!((p.get(1, 1) - 0.5).abs() < 1e-10);
        assert!(p.get(0, 1) < 1e-10 && p.get(1, 0) < 1e-10);
        assert_eq!(p.meta.solver, SolverTag::Balanced);
    }

    #[test]
    fn balanced_large_epsilon_is_independent_coupling() {
        let c = random_cost(3, 4, 5);
        let a = DiscreteMeasure::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let b = uniform(5);
        let (p, _) = solve_balanced(&c, &a, &b, &SolverConfig::balanced(1e6)).unwrap();
        let ind = TransportPlan::independent(&a, &b);
        for (x, y) in p.view().iter().zip(ind.view().iter()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn balanced_marginals_within_tolerance() {
        let c = random_cost(5, 6, 4);
        let cfg = SolverConfig::balanced(0.1);
        let (_, d) = solve_balanced(&c, &uniform(6), &uniform(4), &cfg).unwrap();
        assert!(d.converged);
        assert!(d.row_marginal_err <= 10.0 * cfg.tol);
        assert!(d.col_marginal_err <= 10.0 * cfg.tol);
    }

    #[test]
    fn balanced_rejects_unnormalized_marginals() {
        let c = random_cost(1, 2, 2);
        let a = DiscreteMeasure::new(vec![0.5, 0.6]).unwrap();
        assert!(matches!(
            solve_balanced(&c, &a, &uniform(2), &SolverConfig::balanced(1.0)),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn non_convergence_is_flagged_not_fatal() {
        let c = random_cost(2, 5, 5);
        let cfg = SolverConfig {
            max_iters: 2,
            ..SolverConfig::balanced(0.01)
        };
        let (p, d) = solve_balanced(&c, &uniform(5), &uniform(5), &cfg).unwrap();
        assert!(!d.converged);
        assert_eq!(d.iterations_used, 2);
        assert_eq!(p.shape(), (5, 5));
    }

    #[test]
    fn config_validation() {
        let bad = SolverConfig {
            rho: 0.0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverConfig {
            epsilon: -1.0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverConfig {
            tol: 0.0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(SolverConfig::default().validate().is_ok());
    }

    #[test]
    fn textbook_zero_cost_is_independent() {
        let c = cost(Array2::zeros((3, 4)));
        let (p, d) = solve_unbalanced(&c, &uniform(3), &uniform(4), &SolverConfig::default()).unwrap();
        assert!(d.converged);
        let ind = TransportPlan::independent(&uniform(3), &uniform(4));
        for (x, y) in p.view().iter().zip(ind.view().iter()) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn textbook_large_rho_matches_balanced() {
        let c = random_cost(17, 4, 4);
        let eps = 0.1;
        let (pb, _) = solve_balanced(&c, &uniform(4), &uniform(4), &SolverConfig::balanced(eps)).unwrap();
        let cfg = SolverConfig {
            rho: 1e6,
            epsilon: eps,
            ..SolverConfig::default()
        };
        let (pu, d) = solve_unbalanced(&c, &uniform(4), &uniform(4), &cfg).unwrap();
        assert!(d.converged);
        for (x, y) in pb.view().iter().zip(pu.view().iter()) {
            assert!((x - y).abs() < 1e-5);
        }
    }

    #[test]
    fn textbook_fixed_point_is_local_minimum() {
        // Coordinate-wise grid search around the solution must not find a
        // lower entropic objective.
        let c = random_cost(23, 3, 3);
        let (a, b) = (uniform(3), uniform(3));
        let cfg = SolverConfig::default();
        let (p, _) = solve_unbalanced(&c, &a, &b, &cfg).unwrap();
        let obj = |m: &Array2<f64>| {
            uot_entropic_objective(
                &TransportPlan::given(m.clone()).unwrap(),
                &c,
                &a,
                &b,
                cfg.rho,
                cfg.epsilon,
            )
            .unwrap()
        };
        let base = obj(&p.view().to_owned());
        let mut best = p.view().to_owned();
        let mut best_val = base;
        let mut step = 0.05;
        for _ in 0..6 {
            for idx in 0..9 {
                let (i, j) = (idx / 3, idx % 3);
                for k in -10i32..=10 {
                    let mut trial = best.clone();
                    trial[[i, j]] = (trial[[i, j]] * (1.0 + step * k as f64 / 10.0)).max(0.0);
                    let v = obj(&trial);
                    if v < best_val {
                        best_val = v;
                        best = trial;
                    }
                }
            }
            step /= 4.0;
        }
        assert!(best_val >= base - 1e-6, "grid found {best_val} below {base}");
    }

    #[test]
    fn uot_plans_strictly_positive() {
        let c = random_cost(4, 5, 6);
        for variant in [SolverVariant::UotTextbook, SolverVariant::UotPaperPseudocode] {
            let cfg = SolverConfig {
                variant,
                ..SolverConfig::default()
            };
            let (p, _) = solve_unbalanced(&c, &uniform(5), &uniform(6), &cfg).unwrap();
            assert!(p.view().iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn textbook_marginal_error_decreases_with_rho() {
        let c = random_cost(31, 5, 5);
        let errs: Vec<f64> = [0.1, 1.0, 10.0, 100.0]
            .iter()
            .map(|&rho| {
                let cfg = SolverConfig {
                    rho,
                    epsilon: 0.1,
                    max_iters: 100_000,
                    ..SolverConfig::default()
                };
                let (_, d) = solve_unbalanced(&c, &uniform(5), &uniform(5), &cfg).unwrap();
                d.row_marginal_err + d.col_marginal_err
            })
            .collect();
        for w in errs.windows(2) {
            assert!(w[1] < w[0], "{errs:?}");
        }
    }

    #[test]
    fn balanced_dual_objective_ascends() {
        let c = random_cost(41, 6, 6);
        let (a, b) = (uniform(6), uniform(6));
        let eps = 0.05;
        let dual = |f: &Array1<f64>, g: &Array1<f64>| {
            let mut v = f.dot(&Array1::from(a.as_slice().to_vec())) + g.dot(&Array1::from(b.as_slice().to_vec()));
            for i in 0..6 {
                for j in 0..6 {
                    let e = ((f[i] + g[j] - c.get(i, j)) / eps).exp();
                    v -= eps * a.as_slice()[i] * b.as_slice()[j] * (e - 1.0);
                }
            }
            v
        };
        let mut last = f64::NEG_INFINITY;
        for k in 1..=60 {
            let run = damped_scaling(&c, &a, &b, eps, 1.0, k, 1e-300);
            let v = dual(&run.f, &run.g);
            assert!(v >= last - 1e-12, "iteration {k}: {v} < {last}");
            last = v;
        }
    }

    #[test]
    fn pseudocode_rho_one_matches_row_marginals() {
        let c = random_cost(8, 4, 5);
        let a = DiscreteMeasure::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let cfg = SolverConfig {
            rho: 1.0,
            variant: SolverVariant::UotPaperPseudocode,
            ..SolverConfig::default()
        };
        let (p, d) = solve_unbalanced(&c, &a, &uniform(5), &cfg).unwrap();
        assert!(d.converged);
        for (r, t) in p.row_sums().iter().zip(a.as_slice()) {
            assert!((r - t).abs() < 1e-6);
        }
        assert_eq!(p.meta.solver, SolverTag::UotPaperPseudocode);
    }

    #[test]
    fn pseudocode_fixed_point_row_relation() {
        // At rho != 1 the row log-marginal settles at
        // rho log a_i + (1 - rho) LSE_j(Z_ij + v_j).
        let c = random_cost(9, 4, 4);
        let rho = 0.75;
        let (a, b) = (uniform(4), uniform(4));
        let (p, run) = pseudocode_scaling(&c, &a, &b, rho, 1000, 1e-12);
        assert!(run.converged);
        let z = c.view().mapv(|x| -x / rho);
        let rows: Vec<f64> = p.rows().into_iter().map(|r| r.sum()).collect();
        let mut err = 0.0;
        for i in 0..4 {
            let lse = logsumexp((0..4).map(|j| z[[i, j]] + run.g[j]));
            let expected = rho * a.as_slice()[i].ln() + (1.0 - rho) * lse;
            assert!((rows[i].ln() - expected).abs() < 1e-9);
            err += (rows[i] - a.as_slice()[i]).abs();
        }
        assert!(err > 1e-3);
    }

    #[test]
    fn pseudocode_ignores_epsilon() {
        let c = random_cost(10, 3, 3);
        let mk = |epsilon| SolverConfig {
            epsilon,
            variant: SolverVariant::UotPaperPseudocode,
            ..SolverConfig::default()
        };
        let (p1, _) = solve_unbalanced(&c, &uniform(3), &uniform(3), &mk(1.0)).unwrap();
        let (p2, _) = solve_unbalanced(&c, &uniform(3), &uniform(3), &mk(0.01)).unwrap();
        assert_eq!(p1.view(), p2.view());
    }

    #[test]
    fn unbalanced_rejects_balanced_variant() {
        let c = random_cost(1, 2, 2);
        assert!(solve_unbalanced(&c, &uniform(2), &uniform(2), &SolverConfig::balanced(1.0)).is_err());
    }

    #[test]
    fn objective_examples() {
        let (a, b) = (uniform(2), uniform(2));
        let zero_cost = cost(Array2::zeros((2, 2)));
        let ind = TransportPlan::independent(&a, &b);
        assert_eq!(uot_objective(&ind, &zero_cost, &a, &b, 0.75).unwrap(), 0.0);

        let empty = TransportPlan::given(Array2::zeros((2, 2))).unwrap();
        let v = uot_objective(&empty, &zero_cost, &a, &b, 0.75).unwrap();
        assert!((v - 2.0 * 0.75).abs() < 1e-15);
    }

    #[test]
    fn objective_matches_scalar_loop() {
        let plan = array![[0.3, 0.05], [0.1, 0.4]];
        let c = array![[0.2, 0.9], [0.7, 0.1]];
        let a: [f64; 2] = [0.5, 0.5];
        let b: [f64; 2] = [0.4, 0.6];
        let rho = 0.75;
        let mut oracle = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                oracle += c[[i, j]] * plan[[i, j]];
            }
        }
        let mut kla = 0.0;
        for i in 0..2 {
            let r = plan[[i, 0]] + plan[[i, 1]];
            kla += r * (r / a[i]).ln() - r + a[i];
        }
        let mut klb = 0.0;
        for j in 0..2 {
            let s = plan[[0, j]] + plan[[1, j]];
            klb += s * (s / b[j]).ln() - s + b[j];
        }
        oracle += rho * kla + rho * klb;
        let got = uot_objective(
            &TransportPlan::given(plan).unwrap(),
            &cost(c),
            &DiscreteMeasure::new(a.to_vec()).unwrap(),
            &DiscreteMeasure::new(b.to_vec()).unwrap(),
            rho,
        )
        .unwrap();
        assert!((got - oracle).abs() <= 1e-15 * oracle.abs().max(1.0));
    }

    #[test]
    fn objective_infeasible_marginal() {
        let a = DiscreteMeasure::new(vec![1.0, 0.0]).unwrap();
        let b = uniform(1);
        let plan = TransportPlan::given(array![[0.5], [0.5]]).unwrap();
        let c = cost(array![[0.0], [0.0]]);
        assert_eq!(uot_objective(&plan, &c, &a, &b, 1.0), Err(Error::InfeasibleMarginal));
    }

    #[test]
    fn zero_mass_rows_get_no_plan_mass() {
        let c = random_cost(12, 3, 3);
        let a = DiscreteMeasure::new(vec![0.5, 0.0, 0.5]).unwrap();
        let (p, d) = solve_balanced(&c, &a, &uniform(3), &SolverConfig::balanced(0.5)).unwrap();
        assert!(d.converged);
        assert!(p.view().row(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn solves_are_deterministic() {
        let c = random_cost(13, 7, 5);
        let run = || solve(&c, &uniform(7), &uniform(5), &SolverConfig::default()).unwrap().0;
        assert_eq!(run().view(), run().view());
    }
}
