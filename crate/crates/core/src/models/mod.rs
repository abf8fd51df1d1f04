//! Concrete discriminants: the map from a context window to `K` logits.
//!
//! Every model is a pure function of the window, which is what makes exhaustive
//! verification possible. Models serialize to a versioned line-oriented text format
//! (see [`file`]) whose SHA-256 is the model hash recorded in transcripts.

mod file;
mod head;
mod modk;
mod ngram;
mod tabular;

pub use file::{AnyModel, ModelKind};
pub use head::{train_meaning_head, MeaningHead};
pub use modk::{make_modk, ModKModel};
pub use ngram::{train_ngram, NGramModel};
pub use tabular::TabularModel;

use crate::dynamics::{argmax, next_token_distribution, padded_window, Temperature};
use crate::error::Result;
use crate::token::{Alphabet, Corpus, TokenId};

pub trait Discriminant: Send + Sync {
    fn alphabet(&self) -> &Alphabet;

    /// Window length `C`.
    fn context_len(&self) -> usize;

    /// Logits for a window of exactly `C` valid token ids. `-inf` marks a hard zero.
    fn logits(&self, window: &[TokenId]) -> Vec<f64>;

    /// Greedy next token (lowest id on ties).
    fn deterministic_token(&self, window: &[TokenId]) -> TokenId {
        argmax(&self.logits(window))
    }

    /// Hex SHA-256 of the serialized model.
    fn model_hash(&self) -> String;
}

impl<M: Discriminant + ?Sized> Discriminant for &M {
    fn alphabet(&self) -> &Alphabet {
        (**self).alphabet()
    }
    fn context_len(&self) -> usize {
        (**self).context_len()
    }
    fn logits(&self, window: &[TokenId]) -> Vec<f64> {
        (**self).logits(window)
    }
    fn deterministic_token(&self, window: &[TokenId]) -> TokenId {
        (**self).deterministic_token(window)
    }
    fn model_hash(&self) -> String {
        (**self).model_hash()
    }
}

impl<M: Discriminant + ?Sized> Discriminant for std::sync::Arc<M> {
    fn alphabet(&self) -> &Alphabet {
        (**self).alphabet()
    }
    fn context_len(&self) -> usize {
        (**self).context_len()
    }
    fn logits(&self, window: &[TokenId]) -> Vec<f64> {
        (**self).logits(window)
    }
    fn deterministic_token(&self, window: &[TokenId]) -> TokenId {
        (**self).deterministic_token(window)
    }
    fn model_hash(&self) -> String {
        (**self).model_hash()
    }
}

/// Every window over a `k`-token alphabet, in lexicographic order.
pub fn all_windows_vec(k: usize, c: usize) -> Vec<Vec<TokenId>> {
    tabular::all_windows(k, c).collect()
}

/// Mass the model puts on the true next token, per corpus prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub mean: f64,
    /// `(prefix, next token, probability)` for every prefix of every sentence.
    pub per_prefix: Vec<(Vec<TokenId>, TokenId, f64)>,
}

/// Average softmax mass (at `T`) on the observed continuation over all corpus prefixes,
/// including the empty prefix before the first token.
pub fn axis_alignment<M: Discriminant + ?Sized>(model: &M, corpus: &Corpus, t: Temperature) -> Result<Alignment> {
    if corpus.is_empty() {
        return Err(crate::Error::EmptyBase);
    }
    let c = model.context_len();
    let pad = model.alphabet().pad();
    let mut per_prefix = Vec::new();
    for s in corpus.sentences() {
        let toks = s.tokens();
        for i in 0..toks.len() {
            let w = padded_window(&toks[..i], c, pad);
            let p = next_token_distribution(model, &w, t)?[toks[i]];
            per_prefix.push((toks[..i].to_vec(), toks[i], p));
        }
    }
    let mean = per_prefix.iter().map(|x| x.2).sum::<f64>() / per_prefix.len() as f64;
    Ok(Alignment { mean, per_prefix })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::token::Sentence;
    use rand::SeedableRng;

    fn corpus(a: &Alphabet, lines: &[&str]) -> Corpus {
        Corpus::new("t", lines.iter().map(|l| Sentence::parse(l, a).unwrap()).collect()).unwrap()
    }

    #[test]
    fn deterministic_corpus_aligns_perfectly() {
        let a = Alphabet::toy(5);
        let c = corpus(&a, &["a b c EOS", "a b c EOS"]);
        let m = train_ngram(&c, &a, 4, 3, 0.0).unwrap();
        let al = axis_alignment(&m, &c, Temperature::Finite(1.0)).unwrap();
        assert_eq!(al.mean, 1.0);
    }

    #[test]
    fn ambiguous_prefix_is_half() {
        let a = Alphabet::toy(5);
        let c = corpus(&a, &["a b EOS", "a c EOS"]);
        let m = train_ngram(&c, &a, 4, 2, 0.0).unwrap();
        let al = axis_alignment(&m, &c, Temperature::Finite(1.0)).unwrap();
        for (prefix, _, p) in &al.per_prefix {
            let want = if prefix == &vec![0] { 0.5 } else { 1.0 };
            assert_eq!(*p, want, "prefix {prefix:?}");
        }
    }

    #[test]
    fn uniform_model_is_at_chance() {
        let a = Alphabet::toy(4);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let sentences: Vec<Sentence> = (0..200)
            .map(|_| {
                use rand::Rng;
                let n = rng.random_range(1..4);
                let mut t: Vec<TokenId> = (0..n).map(|_| rng.random_range(0..2)).collect();
                t.push(a.eos());
                Sentence::new(t, &a).unwrap()
            })
            .collect();
        let c = Corpus::new("r", sentences).unwrap();
        let m = TabularModel::constant_logits(a, 4, vec![0.0; 4]);
        let al = axis_alignment(&m, &c, Temperature::Finite(1.0)).unwrap();
        assert_eq!(al.mean, 0.25);
    }
}
