use botdyn::dynamics::Temperature;
use botdyn::error::Budget;
use botdyn::models::all_windows_vec;
use botdyn::oracle::game_tree_values;
use botdyn::safeguard::{adversary_value_iteration, compare_scenarios, defender_step, random_game_instance, DefenderConfig};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn value_iteration_equals_game_tree(seed in any::<u64>(), depth in 1usize..6) {
        let (m, spec, _) = random_game_instance(seed, 0.2).unwrap();
        let t = Temperature::Finite(1.0);
        let g = adversary_value_iteration(&m, &spec, depth, t, Budget::default()).unwrap();
        let starts = all_windows_vec(3, 4);
        let tree = game_tree_values(&m, &spec, &starts, depth, t).unwrap();
        for (s, v) in starts.iter().zip(tree) {
            prop_assert_eq!(g.value(s).to_bits(), v.to_bits());
        }
    }

    #[test]
    fn looser_censor_never_slows_the_adversary(seed in any::<u64>(), eps in 0.01f64..0.99) {
        let (m, s1, s2) = random_game_instance(seed, eps).unwrap();
        let starts = all_windows_vec(3, 4);
        let cmp = compare_scenarios(&m, &s1, &s2, &starts, 6, Temperature::Finite(1.0), Budget::default()).unwrap();
        prop_assert!(cmp.violations.is_empty());
    }

    #[test]
    fn censors_off_makes_regimes_coincide(seed in any::<u64>()) {
        let (m, s1, s2) = random_game_instance(seed, 0.2).unwrap();
        let (s1, s2) = (s1.with_censors(false, false), s2.with_censors(false, false));
        let starts = all_windows_vec(3, 4);
        let cmp = compare_scenarios(&m, &s1, &s2, &starts, 6, Temperature::Finite(1.0), Budget::default()).unwrap();
        prop_assert!(cmp.per_start.iter().all(|(_, a, b)| a == b));
    }

    #[test]
    fn null_intervention_costs_nothing(seed in any::<u64>(), x in prop::collection::vec(0usize..3, 4), u in 0usize..3) {
        let (m, spec, _) = random_game_instance(seed, 0.2).unwrap();
        let a = botdyn::token::Alphabet::toy(3);
        let spec = spec.with_interventions(&a, vec![vec![0], vec![1, 0]]).unwrap();
        let d = defender_step(&m, &spec, &x, u, &DefenderConfig { completions: 8, ..Default::default() }).unwrap();
        if d.index == 0 || d.provisional == 0.0 {
            prop_assert_eq!(d.cost, 0.0);
        }
        if d.null_absorption == 0.0 {
            prop_assert_eq!(d.index, 0);
        }
    }
}
