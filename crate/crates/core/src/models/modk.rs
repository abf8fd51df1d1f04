use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::file::{fmt_f64, hash_text, header, ModelKind, Parsed};
use super::Discriminant;
use crate::controllability::pivot;
use crate::error::{Error, Result};
use crate::token::{Alphabet, TokenId};

/// Windows above which construction samples fixings instead of enumerating them.
const EXHAUSTIVE_LIMIT: usize = 1_000_000;
const SAMPLED_FIXINGS: usize = 4096;

/// Next token `Σ_j w_j x_j mod K` (token ids as residues), engineered so the map is a
/// bijection in the pivot coordinate for every fixing of the others.
#[derive(Debug, Clone, PartialEq)]
pub struct ModKModel {
    alphabet: Alphabet,
    c: usize,
    ell: usize,
    weights: Vec<u64>,
    sharpness: f64,
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Mod-K model over the toy `K`-token alphabet.
pub fn make_modk(k: usize, c: usize, ell: usize, weights: &[u64]) -> Result<ModKModel> {
    if k < 2 {
        return Err(Error::InvalidArgument("mod-K model needs K ≥ 2".into()));
    }
    ModKModel::new(Alphabet::toy(k), c, ell, weights.to_vec(), 8.0)
}

impl ModKModel {
    pub fn new(alphabet: Alphabet, c: usize, ell: usize, weights: Vec<u64>, sharpness: f64) -> Result<Self> {
        if weights.len() != c {
            return Err(Error::InvalidArgument(format!("{} weights for context length {c}", weights.len())));
        }
        if !(sharpness.is_finite() && sharpness > 0.0) {
            return Err(Error::InvalidArgument(format!("sharpness must be positive, got {sharpness}")));
        }
        let p = pivot(c, ell)?;
        let k = alphabet.k();
        let w = weights[p - 1] % k as u64;
        let g = gcd(w, k as u64);
        if g != 1 {
            return Err(Error::PivotNotBijective { weight: weights[p - 1], k, gcd: g });
        }
        let m = ModKModel { alphabet, c, ell, weights, sharpness };
        m.verify_pivot()?;
        Ok(m)
    }

    /// Re-checks pivot bijectivity by evaluation: every fixing when `K^C` is small,
    /// a seeded sample of fixings otherwise.
    fn verify_pivot(&self) -> Result<()> {
        let k = self.alphabet.k();
        let p = self.pivot();
        let total = (k as f64).powi(self.c as i32);
        let mut seen = vec![false; k];
        let mut check = |w: &mut Vec<TokenId>| -> Result<()> {
            seen.iter_mut().for_each(|s| *s = false);
            for a in 0..k {
                w[p - 1] = a;
                let out = self.deterministic_token(w);
                if std::mem::replace(&mut seen[out], true) {
                    return Err(Error::HypothesisViolated(format!("pivot collision at {w:?}")));
                }
            }
            Ok(())
        };
        if total <= EXHAUSTIVE_LIMIT as f64 {
            for mut w in super::tabular::all_windows(k, self.c).filter(|w| w[p - 1] == 0) {
                check(&mut w)?;
            }
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(0x6d6f646b);
            for _ in 0..SAMPLED_FIXINGS {
                let mut w: Vec<TokenId> = (0..self.c).map(|_| rng.random_range(0..k)).collect();
                check(&mut w)?;
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.alphabet.k()
    }
    pub fn ell(&self) -> usize {
        self.ell
    }
    /// 1-based pivot coordinate.
    pub fn pivot(&self) -> usize {
        pivot(self.c, self.ell).expect("validated at construction")
    }
    pub fn weights(&self) -> &[u64] {
        &self.weights
    }

    pub fn to_file_string(&self) -> String {
        let mut out = header(ModelKind::ModK, &self.alphabet, self.c);
        let w: Vec<String> = self.weights.iter().map(u64::to_string).collect();
        out.push_str(&format!("ell {}\nweights {}\nsharpness {}\n", self.ell, w.join(" "), fmt_f64(self.sharpness)));
        out
    }

    pub(crate) fn from_parsed(p: &Parsed) -> Result<Self> {
        let ell: usize = p.scalar("ell")?;
        let sharpness: f64 = p.scalar("sharpness")?;
        let weights = p
            .field("weights")?
            .iter()
            .map(|s| s.parse::<u64>().map_err(|_| p.err(0, format!("bad weight {s:?}"))))
            .collect::<Result<Vec<_>>>()?;
        ModKModel::new(p.alphabet.clone(), p.c, ell, weights, sharpness)
    }
}

impl Discriminant for ModKModel {
    fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }
    fn context_len(&self) -> usize {
        self.c
    }
    fn logits(&self, window: &[TokenId]) -> Vec<f64> {
        let mut out = vec![0.0; self.k()];
        out[self.deterministic_token(window)] = self.sharpness;
        out
    }
    fn deterministic_token(&self, window: &[TokenId]) -> TokenId {
        let k = self.k() as u64;
        let s = window.iter().zip(&self.weights).fold(0u64, |acc, (&x, &w)| (acc + (x as u64 % k) * (w % k)) % k);
        s as TokenId
    }
    fn model_hash(&self) -> String {
        hash_text(&self.to_file_string())
    }
}
