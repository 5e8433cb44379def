use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use seqclt::empirical::{cusum_statistic, FunctionClass};
use seqclt::exec::derive_seed;
use seqclt::kiefer::{analytic_iid_kernel, build_kiefer, interval_points, sample_sup_bridge};
use seqclt::processes::{IidSpec, Law, PathModel};
use seqclt::Execution;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn kiefer_draws(c: &mut Criterion) {
    let fc = FunctionClass::interval_grid(20, 0.0, 1.0);
    let kernel = analytic_iid_kernel(&Law::Uniform { lo: 0.0, hi: 1.0 }, &interval_points(&fc).unwrap()).unwrap();
    let t_grid: Vec<f64> = (1..=20).map(|j| j as f64 / 20.0).collect();
    let model = build_kiefer(&kernel, &t_grid, None).unwrap();
    let mut group = c.benchmark_group("kiefer_sup_bridge_500");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| sample_sup_bridge(&model, 500, 7, exec).unwrap())
        });
    }
    group.finish();
}

fn tn_replications(c: &mut Criterion) {
    let fc = FunctionClass::interval_grid(20, 0.0, 1.0);
    let model = IidSpec { law: Law::Uniform { lo: 0.0, hi: 1.0 } };
    let mut group = c.benchmark_group("tn_replications_200x1000");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                exec.map_indexed(200, |r| {
                    let path = model.simulate(1000, derive_seed(11, "bench", r as u64)).unwrap();
                    cusum_statistic(&path, &fc, Execution::Sequential).t_n
                })
            })
        });
    }
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = kiefer_draws, tn_replications
}
criterion_main!(benches);
