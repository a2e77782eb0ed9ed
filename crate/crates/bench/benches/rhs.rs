use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nmqbm::evolve::Rk4;
use nmqbm::grid::{build_cat_state, make_grid};
use nmqbm::liouvillian::{Liouvillian, TermSet};
use nmqbm::C64;

fn rhs(c: &mut Criterion) {
    let mut group = c.benchmark_group("rhs");
    for n in [129usize, 257] {
        let g = make_grid(n, 7.0).unwrap();
        let rho = build_cat_state(&g, 7.06, 0.3).unwrap();
        let mut out = vec![C64::new(0.0, 0.0); g.len()];
        for (name, terms) in [("markov", TermSet::markovian(1.0)), ("r0.3", TermSet::new(0.3, 1.0))] {
            let mut l = Liouvillian::new(&g, terms).unwrap();
            group.bench_with_input(BenchmarkId::new(name, n), &n, |b, _| {
                b.iter(|| l.rhs_into(rho.values(), &mut out))
            });
        }
    }
    group.finish();
}

fn rk4_step(c: &mut Criterion) {
    let g = make_grid(129, 7.0).unwrap();
    let rho0 = build_cat_state(&g, 7.06, 0.3).unwrap();
    let mut rk = Rk4::new(&g, TermSet::new(0.3, 1.0)).unwrap();
    c.bench_function("rk4_step_129_r0.3", |b| {
        let mut rho = rho0.clone();
        b.iter(|| rk.advance(&mut rho, 1e-7))
    });
}

criterion_group!(benches, rhs, rk4_step);
criterion_main!(benches);
