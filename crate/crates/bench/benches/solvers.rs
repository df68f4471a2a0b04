use criterion::{black_box, criterion_group, criterion_main, Criterion};
use reachflow::levelset::{solve_arrival, DEFAULT_CFL};
use reachflow::oracle::{dijkstra_times, edge_time};
use reachflow_bench::{cellular, square};

fn level_set(c: &mut Criterion) {
    let field = cellular();
    let grid = square(2.0, 128);
    let mut g = c.benchmark_group("level_set");
    g.sample_size(10);
    g.bench_function("cellular_128_horizon_1", |b| {
        b.iter(|| solve_arrival(&field, &grid, black_box(&[1.0, 1.0]), 1.0, DEFAULT_CFL).unwrap())
    });
    g.finish();
}

fn oracle(c: &mut Criterion) {
    let field = cellular();
    let grid = square(2.0, 128);
    let mut g = c.benchmark_group("oracle");
    g.sample_size(10);
    g.bench_function("dijkstra_128_k3", |b| {
        b.iter(|| dijkstra_times(&field, &grid, black_box(&[1.0, 1.0]), 3).unwrap())
    });
    g.finish();
    c.bench_function("edge_time", |b| {
        b.iter(|| edge_time(&field, black_box(&[0.25, 0.5]), black_box(&[0.3, 0.53])))
    });
}

fn grid_io(c: &mut Criterion) {
    let grid = square(2.0, 256);
    let values = (0..grid.len()).map(|i| i as f64).collect();
    let field = reachflow::ScalarGridField::new(grid, values).unwrap();
    c.bench_function("encode_256", |b| b.iter(|| reachflow::io::encode(black_box(&field))));
}

criterion_group!(benches, level_set, oracle, grid_io);
criterion_main!(benches);
