use std::collections::HashMap;

use super::file::{fmt_f64, hash_text, header, key_str, ModelKind, Parsed};
use super::Discriminant;
use crate::dynamics::padded_window;
use crate::error::{Error, Result};
use crate::token::{Alphabet, Corpus, TokenId};

/// Count-based next-token model over the last `n` tokens of the window.
///
/// Conditionals are `(count + α) / (total + αK)`; at `α = 0` this is the maximum
/// likelihood estimate, i.e. the exact cross-entropy minimiser within the family.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    alphabet: Alphabet,
    c: usize,
    n: usize,
    alpha: f64,
    counts: HashMap<Vec<TokenId>, Vec<u64>>,
}

/// Counts every `(last n tokens, next token)` pair, with sentence starts left-padded so
/// the all-pad key records the first-token distribution.
pub fn train_ngram(corpus: &Corpus, alphabet: &Alphabet, c: usize, n: usize, alpha: f64) -> Result<NGramModel> {
    if n == 0 {
        return Err(Error::InvalidArgument("n-gram order must be at least 1".into()));
    }
    if n > c {
        return Err(Error::InvalidArgument(format!("n-gram order {n} exceeds context length {c}")));
    }
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!("smoothing must be a non-negative real, got {alpha}")));
    }
    if corpus.is_empty() {
        return Err(Error::EmptyBase);
    }
    let k = alphabet.k();
    let pad = alphabet.pad();
    let mut counts: HashMap<Vec<TokenId>, Vec<u64>> = HashMap::new();
    for s in corpus.sentences() {
        let toks = s.tokens();
        for (i, &next) in toks.iter().enumerate() {
            alphabet.check(next)?;
            let key = padded_window(&toks[..i], n, pad);
            counts.entry(key).or_insert_with(|| vec![0; k])[next] += 1;
        }
    }
    Ok(NGramModel { alphabet: alphabet.clone(), c, n, alpha, counts })
}

impl NGramModel {
    pub fn order(&self) -> usize {
        self.n
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Smoothed conditional distribution for a window. Unseen keys are uniform.
    pub fn conditional(&self, window: &[TokenId]) -> Vec<f64> {
        let k = self.alphabet.k();
        let key = &window[window.len() - self.n..];
        match self.counts.get(key) {
            Some(row) => {
                let total: u64 = row.iter().sum();
                let denom = total as f64 + self.alpha * k as f64;
                row.iter().map(|&c| (c as f64 + self.alpha) / denom).collect()
            }
            None => vec![1.0 / k as f64; k],
        }
    }

    /// Corpus-empirical first-token distribution (the all-pad key).
    pub fn start_distribution(&self) -> Vec<f64> {
        self.conditional(&vec![self.alphabet.pad(); self.c])
    }

    /// Empirical cross-entropy (nats per token) of a corpus under the conditionals.
    pub fn cross_entropy(&self, corpus: &Corpus) -> f64 {
        cross_entropy_with(corpus, self.alphabet.pad(), self.c, |w, t| self.conditional(w)[t])
    }

    pub(crate) fn seen(&self, window: &[TokenId]) -> bool {
        self.counts.contains_key(&window[window.len() - self.n..])
    }

    pub fn to_file_string(&self) -> String {
        let mut out = header(ModelKind::NGram, &self.alphabet, self.c);
        self.write_body(&mut out);
        out
    }

    pub(crate) fn write_body(&self, out: &mut String) {
        out.push_str(&format!("order {}\nalpha {}\n", self.n, fmt_f64(self.alpha)));
        let mut keys: Vec<&Vec<TokenId>> = self.counts.keys().collect();
        keys.sort();
        for key in keys {
            let ks = key_str(&self.alphabet, key);
            for (tok, &c) in self.counts[key].iter().enumerate() {
                if c > 0 {
                    out.push_str(&format!("n {ks} {} {c}\n", self.alphabet.symbol(tok)));
                }
            }
        }
    }

    pub(crate) fn from_parsed(p: &Parsed) -> Result<Self> {
        let n: usize = p.scalar("order")?;
        let alpha: f64 = p.scalar("alpha")?;
        if n == 0 || n > p.c || !(alpha.is_finite() && alpha >= 0.0) {
            return Err(p.err(0, "invalid order or smoothing"));
        }
        let k = p.alphabet.k();
        let mut counts: HashMap<Vec<TokenId>, Vec<u64>> = HashMap::new();
        for r in p.rows.iter().filter(|r| r.tag == "n") {
            if r.key.len() != n {
                return Err(p.err(r.line, format!("n-gram key must have {n} tokens")));
            }
            let v: u64 = p.row_value(r)?;
            counts.entry(r.key.clone()).or_insert_with(|| vec![0; k])[r.token] = v;
        }
        Ok(NGramModel { alphabet: p.alphabet.clone(), c: p.c, n, alpha, counts })
    }
}

pub(crate) fn cross_entropy_with(corpus: &Corpus, pad: TokenId, c: usize, p: impl Fn(&[TokenId], TokenId) -> f64) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for s in corpus.sentences() {
        let toks = s.tokens();
        for i in 0..toks.len() {
            let w = padded_window(&toks[..i], c, pad);
            total -= p(&w, toks[i]).ln();
            n += 1;
        }
    }
    total / n as f64
}

impl Discriminant for NGramModel {
    fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }
    fn context_len(&self) -> usize {
        self.c
    }
    fn logits(&self, window: &[TokenId]) -> Vec<f64> {
        if !self.seen(window) {
            return vec![0.0; self.alphabet.k()];
        }
        self.conditional(window).into_iter().map(f64::ln).collect()
    }
    fn model_hash(&self) -> String {
        hash_text(&self.to_file_string())
    }
}
