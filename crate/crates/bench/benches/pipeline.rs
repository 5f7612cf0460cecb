use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fgw_bench::problem;
use fgw_core::{extract_pseudo_labels, run_pipeline, PipelineConfig, ScenarioKind};

fn pipeline(c: &mut Criterion) {
    let mut group = c.benchmark_group("pipeline");
    group.sample_size(20);
    let cfg = PipelineConfig::default();
    for n in [64, 128] {
        let prob = problem(ScenarioKind::MirrorAlias, n);
        group.bench_with_input(BenchmarkId::new("default", n), &prob, |b, prob| {
            b.iter(|| {
                let out = run_pipeline(prob, &cfg).unwrap();
                extract_pseudo_labels(out.final_plan(), &cfg)
            })
        });
    }
    group.finish();
}

criterion_group!(benches, pipeline);
criterion_main!(benches);
