use std::collections::HashMap;

use rand::Rng;

use super::file::{fmt_f64, hash_text, header, key_str, ModelKind, Parsed};
use super::Discriminant;
use crate::error::{Budget, Error, Result};
use crate::token::{Alphabet, TokenId};

/// Explicit logit table: sparse rows keyed by the full window, plus a default row.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularModel {
    alphabet: Alphabet,
    c: usize,
    default: Vec<f64>,
    rows: HashMap<Vec<TokenId>, Vec<f64>>,
}

fn check_row(row: &[f64], k: usize) -> Result<()> {
    if row.len() != k {
        return Err(Error::InvalidLogits(format!("{} logits for K = {k}", row.len())));
    }
    if row.iter().any(|x| x.is_nan() || *x == f64::INFINITY) || row.iter().all(|&x| x == f64::NEG_INFINITY) {
        return Err(Error::InvalidLogits(format!("unusable logit row {row:?}")));
    }
    Ok(())
}

/// Every window over a `k`-token alphabet, in lexicographic order.
pub(crate) fn all_windows(k: usize, c: usize) -> impl Iterator<Item = Vec<TokenId>> {
    let total = k.pow(c as u32);
    (0..total).map(move |mut code| {
        let mut w = vec![0; c];
        for slot in w.iter_mut().rev() {
            *slot = code % k;
            code /= k;
        }
        w
    })
}

/// Logits that put everything on `tok`.
pub(crate) fn one_hot_logits(k: usize, tok: TokenId) -> Vec<f64> {
    let mut row = vec![f64::NEG_INFINITY; k];
    row[tok] = 0.0;
    row
}

impl TabularModel {
    /// Same logits for every window.
    pub fn constant_logits(alphabet: Alphabet, c: usize, logits: Vec<f64>) -> Self {
        check_row(&logits, alphabet.k()).expect("valid constant logits");
        TabularModel { alphabet, c, default: logits, rows: HashMap::new() }
    }

    /// Always emits `token`.
    pub fn constant(alphabet: Alphabet, c: usize, token: TokenId) -> Self {
        let row = one_hot_logits(alphabet.k(), token);
        Self::constant_logits(alphabet, c, row)
    }

    /// Tabulates `f` over all `K^C` windows.
    pub fn from_fn(alphabet: Alphabet, c: usize, f: impl Fn(&[TokenId]) -> Vec<f64>) -> Result<Self> {
        let k = alphabet.k();
        Budget::default().check_pow(k, c)?;
        let mut rows = HashMap::with_capacity(k.pow(c as u32));
        for w in all_windows(k, c) {
            let row = f(&w);
            check_row(&row, k)?;
            rows.insert(w, row);
        }
        Ok(TabularModel { alphabet, c, default: vec![0.0; k], rows })
    }

    /// A deterministic map: the emitted token has all the mass at every temperature.
    pub fn deterministic(alphabet: Alphabet, c: usize, f: impl Fn(&[TokenId]) -> TokenId) -> Result<Self> {
        let k = alphabet.k();
        Self::from_fn(alphabet, c, |w| {
            let t = f(w);
            if t < k {
                one_hot_logits(k, t)
            } else {
                vec![f64::NAN]
            }
        })
    }

    /// Logits i.i.d. uniform on `[-scale, scale]`.
    pub fn random<R: Rng + ?Sized>(alphabet: Alphabet, c: usize, scale: f64, rng: &mut R) -> Self {
        let k = alphabet.k();
        let mut rows = HashMap::new();
        for w in all_windows(k, c) {
            rows.insert(w, (0..k).map(|_| rng.random_range(-scale..=scale)).collect());
        }
        TabularModel { alphabet, c, default: vec![0.0; k], rows }
    }

    /// Deterministic map whose output for each window is drawn uniformly from `range`.
    pub fn random_deterministic<R: Rng + ?Sized>(alphabet: Alphabet, c: usize, range: &[TokenId], rng: &mut R) -> Self {
        let k = alphabet.k();
        let mut rows = HashMap::new();
        for w in all_windows(k, c) {
            let t = range[rng.random_range(0..range.len())];
            rows.insert(w, one_hot_logits(k, t));
        }
        TabularModel { alphabet, c, default: vec![0.0; k], rows }
    }

    /// Each window supports between 1 and `max_support` tokens with logits on `[-1, 1]`;
    /// everything else is a hard zero.
    pub fn random_sparse<R: Rng + ?Sized>(alphabet: Alphabet, c: usize, max_support: usize, rng: &mut R) -> Self {
        let k = alphabet.k();
        let max_support = max_support.clamp(1, k);
        let mut rows = HashMap::new();
        for w in all_windows(k, c) {
            let n = rng.random_range(1..=max_support);
            let mut row = vec![f64::NEG_INFINITY; k];
            let mut placed = 0;
            while placed < n {
                let t = rng.random_range(0..k);
                if row[t] == f64::NEG_INFINITY {
                    row[t] = rng.random_range(-1.0..=1.0);
                    placed += 1;
                }
            }
            rows.insert(w, row);
        }
        TabularModel { alphabet, c, default: vec![0.0; k], rows }
    }

    pub fn set_row(&mut self, window: Vec<TokenId>, logits: Vec<f64>) -> Result<()> {
        if window.len() != self.c {
            return Err(Error::ContextLength { got: window.len(), expected: self.c });
        }
        for &t in &window {
            self.alphabet.check(t)?;
        }
        check_row(&logits, self.alphabet.k())?;
        self.rows.insert(window, logits);
        Ok(())
    }

    pub fn to_file_string(&self) -> String {
        let a = &self.alphabet;
        let mut out = header(ModelKind::Tabular, a, self.c);
        out.push_str("default");
        for v in &self.default {
            out.push(' ');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
        let mut keys: Vec<&Vec<TokenId>> = self.rows.keys().collect();
        keys.sort();
        for key in keys {
            let ks = key_str(a, key);
            for (tok, v) in self.rows[key].iter().enumerate() {
                if v.to_bits() != self.default[tok].to_bits() {
                    out.push_str(&format!("t {ks} {} {}\n", a.symbol(tok), fmt_f64(*v)));
                }
            }
            // a row identical to the default still marks the window as present
            if self.rows[key].iter().zip(&self.default).all(|(x, y)| x.to_bits() == y.to_bits()) {
                out.push_str(&format!("t {ks} {} {}\n", a.symbol(0), fmt_f64(self.default[0])));
            }
        }
        out
    }

    pub(crate) fn from_parsed(p: &Parsed) -> Result<Self> {
        let k = p.alphabet.k();
        let default = p.floats("default")?;
        check_row(&default, k)?;
        let mut rows: HashMap<Vec<TokenId>, Vec<f64>> = HashMap::new();
        for r in &p.rows {
            if r.tag != "t" || r.key.len() != p.c {
                return Err(p.err(r.line, "tabular rows are `t <window> <token> <logit>`"));
            }
            let v: f64 = p.row_value(r)?;
            rows.entry(r.key.clone()).or_insert_with(|| default.clone())[r.token] = v;
        }
        for row in rows.values() {
            check_row(row, k)?;
        }
        Ok(TabularModel { alphabet: p.alphabet.clone(), c: p.c, default, rows })
    }
}

impl Discriminant for TabularModel {
    fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }
    fn context_len(&self) -> usize {
        self.c
    }
    fn logits(&self, window: &[TokenId]) -> Vec<f64> {
        self.rows.get(window).unwrap_or(&self.default).clone()
    }
    fn model_hash(&self) -> String {
        hash_text(&self.to_file_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn windows_enumerate_lexicographically() {
        let w: Vec<_> = all_windows(2, 2).collect();
        assert_eq!(w, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
    }

    #[test]
    fn stateless_lookup() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let m = TabularModel::random(Alphabet::toy(3), 2, 1.0, &mut rng);
        let a = m.logits(&[0, 1]);
        let _ = m.logits(&[2, 2]);
        assert_eq!(a, m.logits(&[0, 1]));
    }

    #[test]
    fn sparse_rows_keep_support_bounds() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let m = TabularModel::random_sparse(Alphabet::toy(3), 3, 2, &mut rng);
        for w in all_windows(3, 3) {
            let live = m.logits(&w).iter().filter(|x| x.is_finite()).count();
            assert!((1..=2).contains(&live));
        }
    }

    #[test]
    fn set_row_validates() {
        let mut m = TabularModel::constant(Alphabet::toy(3), 2, 0);
        assert!(m.set_row(vec![0], vec![0.0; 3]).is_err());
        assert!(m.set_row(vec![0, 5], vec![0.0; 3]).is_err());
        assert!(m.set_row(vec![0, 1], vec![f64::NAN, 0.0, 0.0]).is_err());
        m.set_row(vec![0, 1], vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(m.deterministic_token(&[0, 1]), 1);
        assert_eq!(m.deterministic_token(&[1, 1]), 0);
    }
}
