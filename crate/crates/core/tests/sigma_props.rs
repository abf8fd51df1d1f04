use botdyn::token::{build_sigma, Alphabet, Corpus, Sentence, TokenId};
use proptest::prelude::*;

fn corpus_strategy() -> impl Strategy<Value = Vec<Vec<TokenId>>> {
    prop::collection::vec(prop::collection::vec(0usize..3, 2..=3), 1..5)
}

fn corpus(a: &Alphabet, contents: &[Vec<TokenId>]) -> Corpus {
    let s = contents
        .iter()
        .map(|c| {
            let mut t = c.clone();
            t.push(a.eos());
            Sentence::new(t, a).unwrap()
        })
        .collect();
    Corpus::new("p", s).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closure_is_idempotent(contents in corpus_strategy()) {
        let a = Alphabet::toy(5);
        let ms = build_sigma(&corpus(&a, &contents), 5, &a).unwrap();
        let again = build_sigma(&ms.as_corpus(&a), 5, &a).unwrap();
        prop_assert_eq!(ms.sorted_members(), again.sorted_members());
    }

    #[test]
    fn base_is_contained(contents in corpus_strategy()) {
        let a = Alphabet::toy(5);
        let ms = build_sigma(&corpus(&a, &contents), 5, &a).unwrap();
        for c in &contents {
            let mut t = c.clone();
            t.push(a.eos());
            prop_assert!(ms.contains_tokens(&t));
        }
    }

    #[test]
    fn closed_under_bounded_composition(contents in corpus_strategy()) {
        let a = Alphabet::toy(5);
        let ms = build_sigma(&corpus(&a, &contents), 5, &a).unwrap();
        let members = ms.sorted_members();
        for x in &members {
            for y in &members {
                let mut joined = x[..x.len() - 1].to_vec();
                joined.extend_from_slice(y);
                if joined.len() <= 5 && x.len() > 1 && y.len() > 1 {
                    prop_assert!(ms.contains_tokens(&joined), "{:?} + {:?}", x, y);
                }
            }
        }
    }

    #[test]
    fn larger_bound_gives_superset(contents in corpus_strategy()) {
        let a = Alphabet::toy(5);
        let c = corpus(&a, &contents);
        let small = build_sigma(&c, 4, &a).unwrap();
        let big = build_sigma(&c, 5, &a).unwrap();
        for m in small.sorted_members() {
            prop_assert!(big.contains_tokens(&m));
        }
    }
}

#[test]
fn corpus_file_round_trip() {
    let a = Alphabet::toy(5);
    let c = corpus(&a, &[vec![0, 1], vec![2, 2, 0]]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("base.txt");
    c.save(&path, &a).unwrap();
    let back = Corpus::load(&path, &a).unwrap();
    assert_eq!(back.sentences(), c.sentences());
    assert_eq!(back.name, "base");
}
