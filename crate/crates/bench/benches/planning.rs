use criterion::{criterion_group, criterion_main, Criterion};

use cfree_bench::{baseline_plan, generator_plan, nested_sweep, random_queries};
use cfree_core::cgan::{ArchConfig, CganModel};

fn planning(c: &mut Criterion) {
    let model = CganModel::new(&ArchConfig::default(), 0).expect("default architecture");
    let query = random_queries(1, 0)[0];
    let mut group = c.benchmark_group("plan");
    group.sample_size(10);
    for scn in nested_sweep(&[1, 2, 4, 8], 0).expect("sweep") {
        let n = scn.obstacles.len();
        group.bench_function(format!("baseline/{n}"), |b| b.iter(|| baseline_plan(&scn.obstacles, &query).unwrap()));
        group.bench_function(format!("generator/{n}"), |b| {
            b.iter(|| generator_plan(&model.generator, &scn, &query).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, planning);
criterion_main!(benches);
