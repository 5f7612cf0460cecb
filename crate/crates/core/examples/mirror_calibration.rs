//! Sweeps feature noise on the mirror_alias suite and prints exact-match
//! accuracy of semantic-only UOT against the full pipeline.
//!
//! cargo run --release -p fgw-core --example mirror_calibration

use fgw_core::{argmax_matches, evaluate, generate, run_pipeline, PipelineConfig, Scenario, ScenarioKind};

fn main() {
    let seeds = 25u64;
    let cfg = PipelineConfig::default();
    let sem_cfg = PipelineConfig {
        fusion: fgw_core::FusionConfig { alpha: 0.0 },
        ..cfg
    };
    println!("noise sem_acc full_acc gain_pp");
    for noise in [0.0, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.6] {
        let (mut sem, mut full) = (0.0, 0.0);
        for seed in 0..seeds {
            let scn = Scenario {
                noise_sigma: noise,
                alias_fraction: 0.8,
                ..Scenario::new(ScenarioKind::MirrorAlias, 64, seed)
            };
            let (prob, gt) = generate(&scn).unwrap();
            let acc = |c: &PipelineConfig| {
                let out = run_pipeline(&prob, c).unwrap();
                evaluate(&argmax_matches(out.final_plan()), &gt, 1e-9, &prob.pts_b)
                    .unwrap()
                    .accuracy
            };
            sem += acc(&sem_cfg);
            full += acc(&cfg);
        }
        let (sem, full) = (sem / seeds as f64, full / seeds as f64);
        println!("{noise} {sem:.4} {full:.4} {:.1}", 100.0 * (full - sem));
    }
}
