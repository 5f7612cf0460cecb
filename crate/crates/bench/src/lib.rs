//! Fixtures shared by the benchmarks.

use fgw_core::{generate, minmax_normalize, semantic_cost, CostMatrix, PairProblem, Scenario, ScenarioKind};

/// A seeded noisy instance of `n` points.
pub fn problem(kind: ScenarioKind, n: usize) -> PairProblem {
    let scn = Scenario {
        noise_sigma: 0.1,
        ..Scenario::new(kind, n, 11)
    };
    generate(&scn).expect("valid scenario").0
}

/// Min-max normalized semantic cost of [`problem`].
pub fn feature_cost(prob: &PairProblem) -> CostMatrix {
    minmax_normalize(&semantic_cost(&prob.feat_a, &prob.feat_b).expect("shapes agree")).expect("finite cost")
}
