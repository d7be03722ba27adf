use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use etso::bench::{run_matrix, RunConfig};
use etso::gp::{Dataset, GpModel, KernelParams};
use etso::grid::{GridDomain, GridSpec};
use etso::safe_set;
use etso::{Candidates, Execution, PolicyKind};

const MODES: [(&str, Execution); 2] = [
    ("parallel", Execution::Parallel),
    ("sequential", Execution::Sequential),
];

fn fixture() -> (KernelParams, GridDomain, Dataset) {
    let params = KernelParams::new(vec![0.15, 0.75], 1.0 / 3.0, 0.016, -1.0).unwrap();
    let grid = GridDomain::new(GridSpec {
        bounds: vec![(0.0, 2.0), (0.0, 3.0)],
        counts: vec![50, 50],
    })
    .unwrap();
    let mut data = Dataset::new();
    for k in 0..15 {
        let x = 0.4 + 0.02 * k as f64;
        data.push(vec![x, 1.25 + 0.05 * k as f64], -0.8 + 0.01 * k as f64)
            .unwrap();
    }
    (params, grid, data)
}

fn posterior(c: &mut Criterion) {
    let (params, grid, data) = fixture();
    let model = GpModel::fit(&params, &data).unwrap();
    let mut g = c.benchmark_group("grid_posterior");
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| model.predict(grid.points(), exec).unwrap())
        });
    }
    g.finish();
}

fn expanders(c: &mut Criterion) {
    let (params, grid, data) = fixture();
    let post = GpModel::fit(&params, &data)
        .unwrap()
        .predict(grid.points(), Execution::Sequential)
        .unwrap()
        .confidence_bounds(2.0);
    let safe = safe_set::compute_safe_set(&post, -1.232).unwrap();
    let mut g = c.benchmark_group("expanders");
    g.sample_size(20);
    for candidates in [Candidates::Boundary, Candidates::AllSafe] {
        for (name, exec) in MODES {
            g.bench_with_input(
                BenchmarkId::new(format!("{candidates:?}"), name),
                &exec,
                |b, &exec| {
                    b.iter(|| {
                        safe_set::compute_expanders(
                            &params, &data, &post, &safe, &grid, -1.232, 2.0, candidates, exec,
                        )
                        .unwrap()
                    })
                },
            );
        }
    }
    g.finish();
}

fn matrix(c: &mut Criterion) {
    let cfg = RunConfig::new(
        "stationary-gp",
        vec![PolicyKind::Etso, PolicyKind::SafeOptBudget],
        (1..=4).collect(),
    );
    let mut g = c.benchmark_group("run_matrix");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| run_matrix(&cfg, exec).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, posterior, expanders, matrix);
criterion_main!(benches);
