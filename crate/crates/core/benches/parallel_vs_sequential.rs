//! Single-thread pool against the default rayon pool on the data-parallel
//! kernels. Build with `--no-default-features` for the sequential build.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hodge_core::gauge::{random_connection, random_higgs, ymh_gradient};
use hodge_core::harmonic::{build_equivariant_mesh, harmonic_solve, EquivariantMap, HarmonicOptions};
use hodge_core::hyp::octagon_group;
use hodge_core::jets::JetProvider;
use hodge_core::rep::Representation;
use hodge_core::{forms, Complex64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::{ThreadPool, ThreadPoolBuilder};

fn pools() -> Vec<(&'static str, ThreadPool)> {
    let one = ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let all = ThreadPoolBuilder::new().build().unwrap();
    vec![("1-thread", one), ("default", all)]
}

fn harmonic_sweeps(c: &mut Criterion) {
    let g = octagon_group();
    let mesh = build_equivariant_mesh(&g, 2).unwrap();
    let rho = Representation::fuchsian(&g);
    let u0 = EquivariantMap::constant_identity(2, mesh.num_vertices());
    let mut group = c.benchmark_group("harmonic_5_sweeps_r2");
    group.sample_size(10);
    for (name, pool) in pools() {
        for colored in [true, false] {
            let opts = HarmonicOptions { tol: 1e-300, max_iters: 5, colored, ..Default::default() };
            let id = BenchmarkId::new(name, if colored { "colored" } else { "sequential-sweep" });
            group.bench_function(id, |b| {
                b.iter(|| pool.install(|| harmonic_solve(&mesh, &rho, black_box(&u0), &opts).unwrap()))
            });
        }
    }
    group.finish();
}

fn poincare_values(c: &mut Criterion) {
    let g = octagon_group();
    let form = forms::poincare_series(&g, 2, forms::default_seed(2), 5).unwrap();
    let pts: Vec<Complex64> = (0..8).map(|k| Complex64::new(-0.4 + 0.1 * k as f64, 0.9 + 0.05 * k as f64)).collect();
    let mut group = c.benchmark_group("poincare_k2_r5_8_points");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(name, |b| {
            b.iter(|| pool.install(|| pts.iter().map(|&z| form.value(black_box(z)).unwrap()).sum::<Complex64>()))
        });
    }
    group.finish();
}

fn ymh_gradients(c: &mut Criterion) {
    let mesh = build_equivariant_mesh(&octagon_group(), 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = random_connection(&mesh, 2, 0.3, &mut rng);
    let phi = random_higgs(&mesh, 2, 0.3, &mut rng);
    let mut group = c.benchmark_group("ymh_gradient_r2");
    for (name, pool) in pools() {
        group.bench_function(name, |b| b.iter(|| pool.install(|| ymh_gradient(&mesh, black_box(&a), &phi).unwrap())));
    }
    group.finish();
}

criterion_group!(benches, harmonic_sweeps, poincare_values, ymh_gradients);
criterion_main!(benches);
