//! Reachable sets of complete sentences, exactly (tree enumeration) and by sampling.
//!
//! Every report accounts for all of the probability mass: what landed on reported
//! sentences, what ended in sentences below `θ`, what was still generating when the
//! horizon ran out, and what was skipped by pruning.

use std::fmt::Write as _;

use rand::Rng;

use crate::dynamics::{next_token_distribution, padded_window, rng_stream, rollout, sample_index, Prior, Temperature};
use crate::error::{Budget, Error, Result};
use crate::models::Discriminant;
use crate::par;
use crate::stats::{wilson, Z95};
use crate::token::{Alphabet, TokenId};

/// Where generation starts.
#[derive(Debug, Clone, PartialEq)]
pub enum Origin {
    /// A fixed first token.
    Token(TokenId),
    /// A user-supplied incomplete sentence of at most `C` tokens.
    Prompt(Vec<TokenId>),
    /// First token drawn from a prior; that draw counts toward the horizon.
    Prior(Prior),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Exact,
    MonteCarlo { n: u64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReachedSentence {
    /// Full sentence, origin tokens included, ending in EOS.
    pub tokens: Vec<TokenId>,
    /// Exact probability, or empirical frequency under Monte Carlo.
    pub prob: f64,
    /// Monte Carlo only: hit count and 95% Wilson interval.
    pub count: Option<u64>,
    pub ci: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReachReport {
    pub origin: Origin,
    pub theta: f64,
    pub horizon: usize,
    pub temperature: Temperature,
    pub method: Method,
    pub model_hash: String,
    /// Sentences with probability ≥ θ, sorted by token ids.
    pub reached: Vec<ReachedSentence>,
    /// Mass of complete sentences below θ.
    pub below_theta_mass: f64,
    /// Mass of paths still generating at the horizon.
    pub continuation_mass: f64,
    /// Mass of subtrees skipped by the θ-pruning rule (exact mode).
    pub pruned_mass: f64,
}

impl ReachReport {
    pub fn reached_mass(&self) -> f64 {
        self.reached.iter().map(|r| r.prob).sum()
    }

    /// Reached + below-θ + continuation + pruned; 1 up to rounding.
    pub fn total_mass(&self) -> f64 {
        self.reached_mass() + self.below_theta_mass + self.continuation_mass + self.pruned_mass
    }

    pub fn get(&self, tokens: &[TokenId]) -> Option<&ReachedSentence> {
        self.reached.binary_search_by(|r| r.tokens.as_slice().cmp(tokens)).ok().map(|i| &self.reached[i])
    }

    pub fn contains(&self, tokens: &[TokenId]) -> bool {
        self.get(tokens).is_some()
    }

    pub fn to_text(&self, alphabet: &Alphabet) -> String {
        let mut out = String::new();
        match self.method {
            Method::Exact => out.push_str("# method exact\n"),
            Method::MonteCarlo { n, seed } => {
                let _ = writeln!(out, "# method monte_carlo n={n}\n# seed {seed}");
            }
        }
        let origin = match &self.origin {
            Origin::Token(t) => format!("token {}", alphabet.symbol(*t)),
            Origin::Prompt(p) => format!("prompt {}", alphabet.render(p)),
            Origin::Prior(Prior::Content) => "prior content".into(),
            Origin::Prior(Prior::Uniform) => "prior uniform".into(),
            Origin::Prior(Prior::Given(_)) => "prior given".into(),
        };
        let _ = writeln!(out, "# origin {origin}\n# theta {}\n# horizon {}", self.theta, self.horizon);
        let _ = writeln!(out, "# temperature {}\n# model {}", self.temperature, self.model_hash);
        let _ = writeln!(
            out,
            "# below_theta_mass {}\n# continuation_mass {}\n# pruned_mass {}",
            self.below_theta_mass, self.continuation_mass, self.pruned_mass
        );
        for r in &self.reached {
            let _ = write!(out, "{}\t{}", alphabet.render(&r.tokens), r.prob);
            if let Some((lo, hi)) = r.ci {
                let _ = write!(out, "\t[{lo} {hi}]");
            }
            out.push('\n');
        }
        out
    }
}

/// Initial weighted prefixes for an origin, with how many tokens each has consumed
/// from the horizon.
fn seeds<M: Discriminant + ?Sized>(model: &M, origin: &Origin) -> Result<(Vec<(Vec<TokenId>, f64)>, usize)> {
    let a = model.alphabet();
    let eos = a.eos();
    match origin {
        Origin::Token(t) => {
            a.check(*t)?;
            if *t == eos {
                return Err(Error::InvalidArgument("origin token cannot be EOS".into()));
            }
            Ok((vec![(vec![*t], 1.0)], 0))
        }
        Origin::Prompt(p) => {
            if p.is_empty() {
                return Err(Error::InvalidArgument("empty prompt".into()));
            }
            if p.len() > model.context_len() {
                return Err(Error::ContextLength { got: p.len(), expected: model.context_len() });
            }
            for &t in p {
                a.check(t)?;
            }
            if p.contains(&eos) {
                return Err(Error::InvalidArgument("prompt must be an incomplete sentence (no EOS)".into()));
            }
            Ok((vec![(p.clone(), 1.0)], 0))
        }
        Origin::Prior(prior) => {
            let d = prior.distribution(a)?;
            Ok((d.into_iter().enumerate().filter(|(_, p)| *p > 0.0).map(|(t, p)| (vec![t], p)).collect(), 1))
        }
    }
}

#[derive(Default)]
struct Acc {
    reached: Vec<(Vec<TokenId>, f64)>,
    below: f64,
    continuation: f64,
    pruned: f64,
}

impl Acc {
    fn merge(&mut self, other: Acc) {
        self.reached.extend(other.reached);
        self.below += other.below;
        self.continuation += other.continuation;
        self.pruned += other.pruned;
    }
}

struct Tree<'a, M: ?Sized> {
    model: &'a M,
    t: Temperature,
    theta: f64,
    k: f64,
}

impl<M: Discriminant + ?Sized> Tree<'_, M> {
    /// Expands `prefix` (probability `q`) by up to `remaining` tokens.
    fn visit(&self, prefix: &mut Vec<TokenId>, q: f64, remaining: usize, acc: &mut Acc) -> Result<()> {
        let a = self.model.alphabet();
        let eos = a.eos();
        if prefix.last() == Some(&eos) {
            if q >= self.theta {
                acc.reached.push((prefix.clone(), q));
            } else {
                acc.below += q;
            }
            return Ok(());
        }
        if remaining == 0 {
            acc.continuation += q;
            return Ok(());
        }
        // no sentence in a subtree this light can reach θ
        if q < self.theta / self.k.powi(remaining as i32) {
            acc.pruned += q;
            return Ok(());
        }
        let w = padded_window(prefix, self.model.context_len(), a.pad());
        let dist = next_token_distribution(self.model, &w, self.t)?;
        for (x, &p) in dist.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            prefix.push(x);
            self.visit(prefix, q * p, remaining - 1, acc)?;
            prefix.pop();
        }
        Ok(())
    }
}

/// Exhaustive depth-first enumeration of the generation tree up to `horizon` sampled
/// tokens. Sentences with probability ≥ θ are reported; subtrees whose path
/// probability is below `θ / K^remaining` are pruned.
pub fn reach_exact<M: Discriminant + ?Sized>(
    model: &M,
    origin: &Origin,
    horizon: usize,
    theta: f64,
    t: Temperature,
    budget: Budget,
) -> Result<ReachReport> {
    if !(theta >= 0.0) {
        return Err(Error::InvalidArgument(format!("θ must be non-negative, got {theta}")));
    }
    let k = model.alphabet().k();
    budget.check_pow(k, horizon)?;
    let (starts, used) = seeds(model, origin)?;
    if horizon < used {
        return Err(Error::InvalidArgument("horizon must cover the prior draw".into()));
    }
    let tree = Tree { model, t, theta, k: k as f64 };
    // shard on the first expansion so each worker owns a subtree
    let mut first = Acc::default();
    let mut branches: Vec<(Vec<TokenId>, f64)> = Vec::new();
    for (prefix, q) in starts {
        let a = model.alphabet();
        let remaining = horizon - used;
        if prefix.last() == Some(&a.eos()) || remaining == 0 || q < theta / (k as f64).powi(remaining as i32) {
            tree.visit(&mut prefix.clone(), q, remaining, &mut first)?;
            continue;
        }
        let w = padded_window(&prefix, model.context_len(), a.pad());
        let dist = next_token_distribution(model, &w, t)?;
        for (x, &p) in dist.iter().enumerate() {
            if p > 0.0 {
                let mut b = prefix.clone();
                b.push(x);
                branches.push((b, q * p));
            }
        }
    }
    let depth_left = horizon - used;
    let parts = par::map(branches, |(mut prefix, q)| -> Result<Acc> {
        let mut acc = Acc::default();
        tree.visit(&mut prefix, q, depth_left - 1, &mut acc)?;
        Ok(acc)
    });
    let mut acc = first;
    for p in parts {
        acc.merge(p?);
    }
    acc.reached.sort_by(|x, y| x.0.cmp(&y.0));
    Ok(ReachReport {
        origin: origin.clone(),
        theta,
        horizon,
        temperature: t,
        method: Method::Exact,
        model_hash: model.model_hash(),
        reached: acc.reached.into_iter().map(|(tokens, prob)| ReachedSentence { tokens, prob, count: None, ci: None }).collect(),
        below_theta_mass: acc.below,
        continuation_mass: acc.continuation,
        pruned_mass: acc.pruned,
    })
}

/// [`reach_exact`] from a padded prompt.
pub fn prompt_reach<M: Discriminant + ?Sized>(
    model: &M,
    prompt: &[TokenId],
    horizon: usize,
    theta: f64,
    t: Temperature,
    budget: Budget,
) -> Result<ReachReport> {
    reach_exact(model, &Origin::Prompt(prompt.to_vec()), horizon, theta, t, budget)
}

/// `n` independent rollouts, rollout `i` on stream `i` of `seed`; frequencies come
/// with 95% Wilson intervals.
pub fn reach_mc<M: Discriminant + ?Sized>(
    model: &M,
    origin: &Origin,
    horizon: usize,
    theta: f64,
    t: Temperature,
    n: u64,
    seed: u64,
) -> Result<ReachReport> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one rollout".into()));
    }
    let (starts, used) = seeds(model, origin)?;
    if horizon < used {
        return Err(Error::InvalidArgument("horizon must cover the prior draw".into()));
    }
    let a = model.alphabet();
    let eos = a.eos();
    let weights: Vec<f64> = starts.iter().map(|s| s.1).collect();
    let samples = par::try_map_range(n as usize, |i| -> Result<Option<Vec<TokenId>>> {
        let mut rng = rng_stream(seed, i as u64);
        let mut prefix = if starts.len() == 1 {
            // keep the draw count identical across origin kinds
            let _: f64 = rng.random();
            starts[0].0.clone()
        } else {
            starts[sample_index(&weights, &mut rng)].0.clone()
        };
        if prefix.last() == Some(&eos) {
            return Ok(Some(prefix));
        }
        let r = rollout(model, &prefix, t, horizon - used, &mut rng)?;
        if r.halted {
            prefix.extend(r.generated);
            Ok(Some(prefix))
        } else {
            Ok(None)
        }
    })?;
    let mut counts: std::collections::BTreeMap<Vec<TokenId>, u64> = std::collections::BTreeMap::new();
    let mut unfinished = 0u64;
    for s in samples {
        match s {
            Some(tokens) => *counts.entry(tokens).or_insert(0) += 1,
            None => unfinished += 1,
        }
    }
    let nf = n as f64;
    let mut reached = Vec::new();
    let mut below = 0.0;
    for (tokens, c) in counts {
        let prob = c as f64 / nf;
        if prob >= theta {
            reached.push(ReachedSentence { tokens, prob, count: Some(c), ci: Some(wilson(c, n, Z95)) });
        } else {
            below += prob;
        }
    }
    Ok(ReachReport {
        origin: origin.clone(),
        theta,
        horizon,
        temperature: t,
        method: Method::MonteCarlo { n, seed },
        model_hash: model.model_hash(),
        reached,
        below_theta_mass: below,
        continuation_mass: unfinished as f64 / nf,
        pruned_mass: 0.0,
    })
}

/// Fraction of the exact report's sentences whose probability lies inside the Monte
/// Carlo 95% interval (an unseen sentence gets the zero-count interval).
pub fn mc_coverage(exact: &ReachReport, mc: &ReachReport) -> f64 {
    let n = match mc.method {
        Method::MonteCarlo { n, .. } => n,
        Method::Exact => return f64::NAN,
    };
    if exact.reached.is_empty() {
        return 1.0;
    }
    let inside = exact
        .reached
        .iter()
        .filter(|r| {
            let (lo, hi) = mc.get(&r.tokens).and_then(|m| m.ci).unwrap_or_else(|| wilson(0, n, Z95));
            lo <= r.prob && r.prob <= hi
        })
        .count();
    inside as f64 / exact.reached.len() as f64
}
