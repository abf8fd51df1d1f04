//! Each workload runs twice in one binary: through the rayon helpers, and pinned to
//! the calling thread with `par::sequential`. Build with `--no-default-features` to
//! measure the sequential fallback alone.

use std::hint::black_box;

use botdyn::controllability::{check_thm2, Fixings};
use botdyn::dynamics::{Prior, Temperature};
use botdyn::error::Budget;
use botdyn::models::{all_windows_vec, make_modk, TabularModel};
use botdyn::oracle::game_tree_values;
use botdyn::par;
use botdyn::reachability::{reach_exact, reach_mc, Origin};
use botdyn::safeguard::{absorption_probability, adversary_value_iteration, random_game_instance, Adversary};
use botdyn::token::Alphabet;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;

fn both<R>(c: &mut Criterion, group: &str, mut f: impl FnMut() -> R) {
    let mut g = c.benchmark_group(group);
    g.sample_size(10);
    g.bench_function(BenchmarkId::from_parameter("parallel"), |b| b.iter(|| black_box(f())));
    g.bench_function(BenchmarkId::from_parameter("sequential"), |b| b.iter(|| par::sequential(|| black_box(f()))));
    g.finish();
}

fn reachability(c: &mut Criterion) {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let m = TabularModel::random(Alphabet::toy(6), 4, 2.0, &mut rng);
    let t = Temperature::Finite(1.0);
    let origin = Origin::Prior(Prior::Content);
    both(c, "reach_exact_k6_h7", || reach_exact(&m, &origin, 7, 1e-5, t, Budget::default()).unwrap());
    both(c, "reach_mc_k6_n20000", || reach_mc(&m, &origin, 8, 0.0, t, 20_000, 1).unwrap());
}

fn certificates(c: &mut Criterion) {
    let m = make_modk(5, 6, 4, &[1, 2, 3, 1, 1, 1]).unwrap();
    both(c, "check_thm2_k5_c6", || check_thm2(&m, 4, Fixings::Exhaustive, Budget::default()).unwrap());
}

fn games(c: &mut Criterion) {
    let (m, spec, _) = random_game_instance(2, 0.2).unwrap();
    let t = Temperature::Finite(1.0);
    let starts = all_windows_vec(3, 4);
    both(c, "value_iteration_h6", || adversary_value_iteration(&m, &spec, 6, t, Budget::default()).unwrap());
    both(c, "game_tree_oracle_h5", || game_tree_values(&m, &spec, &starts, 5, t).unwrap());
    let g = adversary_value_iteration(&m, &spec, 6, t, Budget::default()).unwrap();
    both(c, "absorption_mc_n10000", || {
        absorption_probability(&m, &spec, &[0, 1, 0, 1], 6, Adversary::Policy(&g), t, 10_000, 3).unwrap()
    });
}

criterion_group!(benches, reachability, certificates, games);
criterion_main!(benches);
