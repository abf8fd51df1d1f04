//! Meanings as equivalence classes induced by a discriminant.
//!
//! A sentence has no meaning of its own; a [`MeaningClassifier`] attributes one by
//! reading the model's output after the sentence. Class scores come either from a set
//! of label tokens (the post-EOS prediction restricted to them) or from prototype
//! sentences (inner products of next-token distributions).

use std::path::Path;

use crate::dynamics::{next_token_distribution, padded_window, Prior, Temperature};
use crate::error::{Budget, Error, Result};
use crate::models::Discriminant;
use crate::par;
use crate::stats::{entropy_bits, mean_sd};
use crate::token::{Alphabet, MeaningfulSet, Sentence, TokenId};

#[derive(Debug, Clone, PartialEq)]
pub enum ClassScores {
    /// Class `i` scores the probability of `labels[i]` after the sentence.
    Labels(Vec<TokenId>),
    /// Class `i` scores `⟨φ(s), φ(prototype_i)⟩` with `φ` the next-token distribution.
    Prototypes(Vec<Sentence>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    /// Single class, highest score, lowest id on ties.
    Argmax,
    /// Every class scoring at least `τ`; possibly none, possibly several.
    Threshold(f64),
}

#[derive(Debug, Clone)]
pub struct MeaningClassifier<'a, M: ?Sized> {
    model: &'a M,
    scores: ClassScores,
    /// Prototype distributions, cached at construction.
    proto_phi: Vec<Vec<f64>>,
    mode: Mode,
    t: Temperature,
    name: String,
}

/// A cell of a quotient: the members that share one class id.
#[derive(Debug, Clone, PartialEq)]
pub struct MeaningClass {
    pub id: usize,
    pub representative: Sentence,
    pub members: Vec<Sentence>,
}

impl<'a, M: Discriminant + ?Sized> MeaningClassifier<'a, M> {
    pub fn labels(model: &'a M, labels: Vec<TokenId>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyLabels);
        }
        for &l in &labels {
            model.alphabet().check(l)?;
        }
        let name = format!("labels[{}]", model.alphabet().render(&labels));
        Ok(MeaningClassifier {
            model,
            scores: ClassScores::Labels(labels),
            proto_phi: Vec::new(),
            mode: Mode::Argmax,
            t: Temperature::Finite(1.0),
            name,
        })
    }

    pub fn prototypes(model: &'a M, prototypes: Vec<Sentence>) -> Result<Self> {
        if prototypes.is_empty() {
            return Err(Error::EmptyLabels);
        }
        let mut mc = MeaningClassifier {
            model,
            scores: ClassScores::Prototypes(Vec::new()),
            proto_phi: Vec::new(),
            mode: Mode::Argmax,
            t: Temperature::Finite(1.0),
            name: format!("prototypes[{}]", prototypes.len()),
        };
        mc.proto_phi = prototypes.iter().map(|p| mc.phi(p)).collect::<Result<_>>()?;
        mc.scores = ClassScores::Prototypes(prototypes);
        Ok(mc)
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    /// Temperature used to turn logits into scores (default 1). Prototype caches are
    /// recomputed.
    pub fn with_temperature(mut self, t: Temperature) -> Result<Self> {
        self.t = t;
        if let ClassScores::Prototypes(ps) = &self.scores {
            self.proto_phi = ps.iter().map(|p| self.phi(p)).collect::<Result<_>>()?;
        }
        Ok(self)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn mode(&self) -> Mode {
        self.mode
    }
    pub fn model(&self) -> &'a M {
        self.model
    }

    pub fn num_classes(&self) -> usize {
        match &self.scores {
            ClassScores::Labels(l) => l.len(),
            ClassScores::Prototypes(p) => p.len(),
        }
    }

    /// Human-readable name of class `id`.
    pub fn class_name(&self, id: usize) -> String {
        let a = self.model.alphabet();
        match &self.scores {
            ClassScores::Labels(l) => a.symbol(l[id]).to_string(),
            ClassScores::Prototypes(p) => p[id].render(a),
        }
    }

    /// Next-token distribution after a complete sentence, read through the window the
    /// model would see (pad prefix stripped, then re-padded).
    fn phi(&self, s: &Sentence) -> Result<Vec<f64>> {
        s.require_complete()?;
        let a = self.model.alphabet();
        let w = padded_window(s.strip_pad_prefix(a.pad()), self.model.context_len(), a.pad());
        next_token_distribution(self.model, &w, self.t)
    }

    pub fn scores(&self, s: &Sentence) -> Result<Vec<f64>> {
        let phi = self.phi(s)?;
        Ok(match &self.scores {
            ClassScores::Labels(l) => l.iter().map(|&t| phi[t]).collect(),
            ClassScores::Prototypes(_) => {
                self.proto_phi.iter().map(|q| q.iter().zip(&phi).map(|(a, b)| a * b).sum()).collect()
            }
        })
    }

    /// Highest-scoring class, lowest id on ties (regardless of mode).
    pub fn classify(&self, s: &Sentence) -> Result<usize> {
        Ok(crate::dynamics::argmax(&self.scores(s)?))
    }

    /// The class set: a singleton in argmax mode, every class at or above `τ` in
    /// threshold mode.
    pub fn classify_set(&self, s: &Sentence) -> Result<Vec<usize>> {
        match self.mode {
            Mode::Argmax => Ok(vec![self.classify(s)?]),
            Mode::Threshold(tau) => Ok(self.scores(s)?.iter().enumerate().filter(|(_, &x)| x >= tau).map(|(i, _)| i).collect()),
        }
    }

    pub fn equivalent(&self, a: &Sentence, b: &Sentence) -> Result<bool> {
        Ok(self.classify_set(a)? == self.classify_set(b)?)
    }

    /// Partition of `sentences` into fibres of [`classify`](Self::classify), cells in
    /// increasing class id, members in input order.
    pub fn quotient(&self, sentences: &[Sentence]) -> Result<Vec<MeaningClass>> {
        let ids = sentences.iter().map(|s| self.classify(s)).collect::<Result<Vec<_>>>()?;
        let mut cells: Vec<MeaningClass> = Vec::new();
        let mut order: Vec<usize> = ids.clone();
        order.sort_unstable();
        order.dedup();
        for id in order {
            let members: Vec<Sentence> = sentences.iter().zip(&ids).filter(|(_, &i)| i == id).map(|(s, _)| s.clone()).collect();
            cells.push(MeaningClass { id, representative: members[0].clone(), members });
        }
        Ok(cells)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WellTrainedReport {
    pub pass: bool,
    pub theta: f64,
    pub max_len: usize,
    /// Every complete sentence with probability ≥ θ, with its probability.
    pub reached: Vec<(Vec<TokenId>, f64)>,
    /// The reached sentences outside the meaningful set.
    pub violating: Vec<(Vec<TokenId>, f64)>,
}

/// Enumerates every complete sentence of 2..=`max_len` tokens whose probability under
/// `model` (first token from `prior`) is at least `θ`, and passes iff all of them are
/// meaningful. Prefixes whose probability already fell below `θ` are not expanded.
pub fn well_trained_check<M: Discriminant + ?Sized>(
    model: &M,
    ms: &MeaningfulSet,
    theta: f64,
    max_len: usize,
    t: Temperature,
    prior: &Prior,
    budget: Budget,
) -> Result<WellTrainedReport> {
    if !(theta > 0.0) {
        return Err(Error::InvalidArgument(format!("θ must be positive, got {theta}")));
    }
    if max_len < 2 {
        return Err(Error::DegenerateLength(max_len));
    }
    let a = model.alphabet();
    budget.check_pow(a.k(), max_len)?;
    let p0 = prior.distribution(a)?;
    let eos = a.eos();
    let starts: Vec<TokenId> = (0..a.k()).filter(|&x| x != eos && p0[x] >= theta).collect();
    let shards = par::map(starts, |x1| -> Result<Vec<(Vec<TokenId>, f64)>> {
        let mut out = Vec::new();
        let mut prefix = vec![x1];
        expand(model, &mut prefix, p0[x1], theta, max_len, t, &mut out)?;
        Ok(out)
    });
    let mut reached = Vec::new();
    for s in shards {
        reached.extend(s?);
    }
    let violating: Vec<_> = reached.iter().filter(|(s, _)| !ms.contains_tokens(s)).cloned().collect();
    Ok(WellTrainedReport { pass: violating.is_empty(), theta, max_len, reached, violating })
}

fn expand<M: Discriminant + ?Sized>(
    model: &M,
    prefix: &mut Vec<TokenId>,
    q: f64,
    theta: f64,
    max_len: usize,
    t: Temperature,
    out: &mut Vec<(Vec<TokenId>, f64)>,
) -> Result<()> {
    let a = model.alphabet();
    let w = padded_window(prefix, model.context_len(), a.pad());
    let dist = next_token_distribution(model, &w, t)?;
    let eos = a.eos();
    let p_end = q * dist[eos];
    if p_end >= theta {
        let mut s = prefix.clone();
        s.push(eos);
        out.push((s, p_end));
    }
    if prefix.len() + 1 >= max_len {
        return Ok(());
    }
    for (x, &p) in dist.iter().enumerate() {
        let qx = q * p;
        if x == eos || qx < theta {
            continue;
        }
        prefix.push(x);
        expand(model, prefix, qx, theta, max_len, t, out)?;
        prefix.pop();
    }
    Ok(())
}

/// One annotated example: a sentence and the votes each label received.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub sentence: Sentence,
    pub votes: Vec<(String, u64)>,
}

impl LabeledExample {
    /// Label with the most votes, first listed on ties.
    pub fn majority(&self) -> Option<&str> {
        let best = self.votes.iter().map(|v| v.1).max()?;
        self.votes.iter().find(|v| v.1 == best).map(|v| v.0.as_str())
    }
}

/// Parses `tokens … | label:count label:count …` lines; `#` starts a comment line.
pub fn parse_labeled(text: &str, alphabet: &Alphabet, path: &Path) -> Result<Vec<LabeledExample>> {
    let err = |line: usize, column: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, column, msg };
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (lhs, rhs) = line.split_once('|').ok_or_else(|| err(i + 1, 1, "expected `tokens | label:count …`".into()))?;
        let tokens = alphabet.parse_tokens(lhs).map_err(|e| err(i + 1, 1, e.to_string()))?;
        let sentence = Sentence::new(tokens, alphabet)?;
        if !sentence.is_complete() {
            return Err(err(i + 1, 1, "sentence must end with EOS".into()));
        }
        let mut votes = Vec::new();
        for (j, item) in rhs.split_whitespace().enumerate() {
            let (label, count) = item.split_once(':').ok_or_else(|| err(i + 1, j + 1, format!("bad vote {item:?}")))?;
            let count: u64 = count.parse().map_err(|_| err(i + 1, j + 1, format!("bad count in {item:?}")))?;
            votes.push((label.to_string(), count));
        }
        if votes.is_empty() {
            return Err(err(i + 1, 1, "no votes".into()));
        }
        out.push(LabeledExample { sentence, votes });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyReport {
    pub per_example: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
}

/// Shannon entropy (bits) of each example's vote distribution, plus mean and sample sd.
pub fn annotation_entropy(votes: &[Vec<u64>]) -> Result<EntropyReport> {
    let mut per_example = Vec::with_capacity(votes.len());
    for (i, v) in votes.iter().enumerate() {
        if v.iter().sum::<u64>() == 0 {
            return Err(Error::ZeroVotes(i));
        }
        let w: Vec<f64> = v.iter().map(|&c| c as f64).collect();
        per_example.push(entropy_bits(&w));
    }
    let (mean, sd) = mean_sd(&per_example);
    Ok(EntropyReport { per_example, mean, sd })
}
