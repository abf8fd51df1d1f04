//! The parallel helpers must not change any result.

use botdyn::controllability::{check_thm2, Fixings};
use botdyn::dynamics::{Prior, Temperature};
use botdyn::error::Budget;
use botdyn::models::{all_windows_vec, make_modk, TabularModel};
use botdyn::par;
use botdyn::reachability::{reach_exact, reach_mc, Origin};
use botdyn::safeguard::{absorption_probability, adversary_value_iteration, random_game_instance, Adversary};
use botdyn::token::Alphabet;
use rand::SeedableRng;

#[test]
fn reach_is_identical_both_ways() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let m = TabularModel::random(Alphabet::toy(4), 4, 2.0, &mut rng);
    let t = Temperature::Finite(1.0);
    let origin = Origin::Prior(Prior::Content);
    let run = || (reach_exact(&m, &origin, 5, 1e-4, t, Budget::default()).unwrap(), reach_mc(&m, &origin, 4, 0.0, t, 5000, 2).unwrap());
    let p = run();
    let s = par::sequential(run);
    assert_eq!(p, s);
}

#[test]
fn games_are_identical_both_ways() {
    let (m, spec, _) = random_game_instance(3, 0.2).unwrap();
    let t = Temperature::Finite(1.0);
    let run = || {
        let g = adversary_value_iteration(&m, &spec, 6, t, Budget::default()).unwrap();
        let a = absorption_probability(&m, &spec, &[0, 1, 0, 1], 6, Adversary::Policy(&g), t, 2000, 4).unwrap();
        (g, a)
    };
    assert_eq!(run(), par::sequential(run));
}

#[test]
fn certificates_are_identical_both_ways() {
    let m = make_modk(4, 5, 3, &[1, 1, 3, 1, 1]).unwrap();
    let run = || check_thm2(&m, 3, Fixings::Exhaustive, Budget::default()).unwrap();
    assert_eq!(run(), par::sequential(run));
    assert_eq!(all_windows_vec(2, 2).len(), 4);
}
