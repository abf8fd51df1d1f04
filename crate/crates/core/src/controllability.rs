//! Last-ℓ controllability of the compressed conversational dynamics.
//!
//! The deterministic skeleton is `x(k+1) = (x_3, …, x_C, f(x(k)), u(k))` with `f` the
//! greedy next token. [`check_thm1`] and [`check_thm2`] certify the surjectivity and
//! pivot-bijectivity hypotheses by enumeration, [`synthesize_phi_u`] builds input
//! sequences that drive the last ℓ tokens to a target, and [`BfsTree`] is the
//! brute-force oracle that finds shortest plans or proves unreachability.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{
    next_token_distribution, rng_stream, rollout, sample_index, BotMode, Context, Conversation, SamplerConfig, Temperature,
    Transcript,
};
use crate::error::{Budget, Error, Result};
use crate::meaning::MeaningClassifier;
use crate::models::Discriminant;
use crate::par;
use crate::stats::{wilson, Z95};
use crate::token::{Alphabet, MeaningfulSet, Sentence, TokenId};

/// 1-based pivot coordinate: `C-ℓ+2` for even ℓ, `C-ℓ+1` for odd ℓ.
pub fn pivot(c: usize, ell: usize) -> Result<usize> {
    if ell < 2 {
        return Err(Error::EllTooSmall(ell));
    }
    if ell > c {
        return Err(Error::InvalidArgument(format!("ℓ = {ell} exceeds context length {c}")));
    }
    Ok(if ell.is_multiple_of(2) { c + 2 - ell } else { c + 1 - ell })
}

/// One step of the deterministic skeleton.
pub fn skeleton_step<M: Discriminant + ?Sized>(model: &M, x: &[TokenId], u: TokenId) -> Vec<TokenId> {
    let c = x.len();
    let mut next = Vec::with_capacity(c);
    next.extend_from_slice(&x[2.min(c)..]);
    if c >= 2 {
        next.push(model.deterministic_token(x));
    }
    next.push(u);
    next
}

/// States `x(0), …, x(N)` under the skeleton.
pub fn simulate<M: Discriminant + ?Sized>(model: &M, start: &[TokenId], inputs: &[TokenId]) -> Vec<Vec<TokenId>> {
    let mut traj = Vec::with_capacity(inputs.len() + 1);
    traj.push(start.to_vec());
    for &u in inputs {
        let next = skeleton_step(model, traj.last().expect("non-empty"), u);
        traj.push(next);
    }
    traj
}

/// The change of coordinates used by the synthesis: drop the pivot and the input
/// slot, append `f(x)` and `f(F(x, u))`. For `C = 6, ℓ = 4` this is
/// `(x1, x2, x3, x5, f(x), f(F(x,u)))`.
pub fn phi_u<M: Discriminant + ?Sized>(model: &M, x: &[TokenId], u: TokenId, ell: usize) -> Result<Vec<TokenId>> {
    let c = x.len();
    let p = pivot(c, ell)?;
    let mut z: Vec<TokenId> = x.iter().enumerate().filter(|(i, _)| i + 1 != p && i + 1 != c).map(|(_, &t)| t).collect();
    if p != c {
        z.push(model.deterministic_token(x));
    }
    z.push(model.deterministic_token(&skeleton_step(model, x, u)));
    Ok(z)
}

/// First pair of pivot values that collide at `x` (the rest of `x` held fixed).
pub fn pivot_collision<M: Discriminant + ?Sized>(model: &M, x: &[TokenId], p: usize) -> Option<(TokenId, TokenId, TokenId)> {
    let k = model.alphabet().k();
    let mut w = x.to_vec();
    let mut first: Vec<Option<TokenId>> = vec![None; k];
    for a in 0..k {
        w[p - 1] = a;
        let out = model.deterministic_token(&w);
        if let Some(b) = first[out] {
            return Some((b, a, out));
        }
        first[out] = Some(a);
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fixings {
    Exhaustive,
    Sample { n: usize, seed: u64 },
}

impl Fixings {
    /// Exhaustive for `K ≤ 6, C ≤ 6`, a seeded sample of 2000 fixings otherwise.
    pub fn auto(k: usize, c: usize) -> Self {
        if k <= 6 && c <= 6 {
            Fixings::Exhaustive
        } else {
            Fixings::Sample { n: 2000, seed: 0 }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Property {
    Surjective,
    Bijective,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Witness {
    /// Under this fixing of the last ℓ−2 coordinates no varying block produces `token`.
    Missing { fixed: Vec<TokenId>, token: TokenId },
    /// Pivot values `a` and `b` give the same `output` in `window` (pivot slot shows `a`).
    Collision { window: Vec<TokenId>, a: TokenId, b: TokenId, output: TokenId },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub property: Property,
    pub ell: usize,
    pub verdict: bool,
    /// Up to [`MAX_WITNESSES`] concrete counterexamples, in enumeration order.
    pub witnesses: Vec<Witness>,
    pub failures: usize,
    pub fixings_tested: usize,
    pub coverage: Fixings,
    pub model_hash: String,
}

pub const MAX_WITNESSES: usize = 16;

fn fixing_list(k: usize, len: usize, fixings: Fixings) -> Vec<Vec<TokenId>> {
    match fixings {
        Fixings::Exhaustive => crate::models::all_windows_vec(k, len),
        Fixings::Sample { n, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n).map(|_| (0..len).map(|_| rng.random_range(0..k)).collect()).collect()
        }
    }
}

/// Varies the first `C-ℓ+2` coordinates for every fixing of the last `ℓ-2` and checks
/// that all `K` tokens are produced.
pub fn check_thm1<M: Discriminant + ?Sized>(model: &M, ell: usize, fixings: Fixings, budget: Budget) -> Result<Certificate> {
    if ell < 2 {
        return Err(Error::EllTooSmall(ell));
    }
    let c = model.context_len();
    if ell > c {
        return Err(Error::InvalidArgument(format!("ℓ = {ell} exceeds context length {c}")));
    }
    let k = model.alphabet().k();
    let vary = c + 2 - ell;
    let fixed_len = ell - 2;
    let per_fixing = (k as f64).powi(vary as i32);
    match fixings {
        Fixings::Exhaustive => budget.check_pow(k, c)?,
        Fixings::Sample { n, .. } => budget.check(n as f64 * per_fixing)?,
    }
    let blocks = crate::models::all_windows_vec(k, vary);
    let fixes = fixing_list(k, fixed_len, fixings);
    let missing: Vec<Vec<TokenId>> = par::map(fixes.clone(), |fixed| {
        let mut hit = vec![false; k];
        let mut w = vec![0; c];
        w[vary..].copy_from_slice(&fixed);
        for b in &blocks {
            w[..vary].copy_from_slice(b);
            hit[model.deterministic_token(&w)] = true;
        }
        (0..k).filter(|&t| !hit[t]).collect()
    });
    let mut witnesses = Vec::new();
    let mut failures = 0;
    for (fixed, miss) in fixes.iter().zip(&missing) {
        if !miss.is_empty() {
            failures += 1;
            if witnesses.len() < MAX_WITNESSES {
                witnesses.push(Witness::Missing { fixed: fixed.clone(), token: miss[0] });
            }
        }
    }
    Ok(Certificate {
        property: Property::Surjective,
        ell,
        verdict: failures == 0,
        witnesses,
        failures,
        fixings_tested: fixes.len(),
        coverage: fixings,
        model_hash: model.model_hash(),
    })
}

/// Checks that the map restricted to the pivot coordinate is a permutation of the
/// alphabet for every fixing of the other coordinates.
pub fn check_thm2<M: Discriminant + ?Sized>(model: &M, ell: usize, fixings: Fixings, budget: Budget) -> Result<Certificate> {
    let c = model.context_len();
    let p = pivot(c, ell)?;
    let k = model.alphabet().k();
    match fixings {
        Fixings::Exhaustive => budget.check_pow(k, c)?,
        Fixings::Sample { n, .. } => budget.check(n as f64 * k as f64)?,
    }
    let others = fixing_list(k, c - 1, fixings);
    let collisions: Vec<Option<Witness>> = par::map(others.clone(), |rest| {
        let mut w = rest.clone();
        w.insert(p - 1, 0);
        pivot_collision(model, &w, p).map(|(a, b, output)| {
            w[p - 1] = a;
            Witness::Collision { window: w, a, b, output }
        })
    });
    let failures = collisions.iter().filter(|c| c.is_some()).count();
    let witnesses = collisions.into_iter().flatten().take(MAX_WITNESSES).collect();
    Ok(Certificate {
        property: Property::Bijective,
        ell,
        verdict: failures == 0,
        witnesses,
        failures,
        fixings_tested: others.len(),
        coverage: fixings,
        model_hash: model.model_hash(),
    })
}

impl Certificate {
    pub fn to_text(&self, alphabet: &Alphabet) -> String {
        let mut out = String::new();
        let prop = match self.property {
            Property::Surjective => "surjective",
            Property::Bijective => "bijective",
        };
        let cov = match self.coverage {
            Fixings::Exhaustive => "exhaustive".to_string(),
            Fixings::Sample { n, seed } => format!("sampled n={n} seed={seed}"),
        };
        let _ = writeln!(out, "# property {prop}\n# ell {}\n# coverage {cov}\n# model {}", self.ell, self.model_hash);
        let _ = writeln!(out, "verdict\t{}\nfixings\t{}\nfailures\t{}", self.verdict, self.fixings_tested, self.failures);
        for w in &self.witnesses {
            match w {
                Witness::Missing { fixed, token } => {
                    let _ = writeln!(out, "missing\t[{}]\t{}", alphabet.render(fixed), alphabet.symbol(*token));
                }
                Witness::Collision { window, a, b, output } => {
                    let _ = writeln!(
                        out,
                        "collision\t[{}]\t{} {}\t{}",
                        alphabet.render(window),
                        alphabet.symbol(*a),
                        alphabet.symbol(*b),
                        alphabet.symbol(*output)
                    );
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanMethod {
    PhiU,
    Bfs,
}

/// An input sequence for the skeleton together with the trajectory it produces.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPlan {
    pub start: Vec<TokenId>,
    pub target: Vec<TokenId>,
    pub inputs: Vec<TokenId>,
    /// `x(0), …, x(N)`.
    pub trajectory: Vec<Vec<TokenId>>,
    pub method: PlanMethod,
    /// Inputs beyond the minimal ℓ used to settle the chain (Φ_u plans only).
    pub settle: usize,
    /// `Φ_u(x(k), u(k))` along the plan (Φ_u plans only).
    pub z: Vec<Vec<TokenId>>,
}

impl ControlPlan {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }
    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Re-simulates from the start; errors with the first differing step.
    pub fn validate<M: Discriminant + ?Sized>(&self, model: &M) -> Result<()> {
        let traj = simulate(model, &self.start, &self.inputs);
        if let Some(k) = (0..traj.len()).find(|&k| self.trajectory.get(k) != Some(&traj[k])) {
            return Err(Error::PlanValidation(format!(
                "step {k}: predicted {:?}, simulated {:?}",
                self.trajectory.get(k),
                traj[k]
            )));
        }
        if self.trajectory.len() != traj.len() {
            return Err(Error::PlanValidation("trajectory length mismatch".into()));
        }
        let last = traj.last().expect("non-empty");
        let tail = &last[last.len() - self.target.len()..];
        if tail != self.target.as_slice() {
            return Err(Error::PlanValidation(format!("final block {tail:?} differs from target {:?}", self.target)));
        }
        Ok(())
    }

    pub fn to_text(&self, alphabet: &Alphabet, model_hash: &str) -> String {
        let method = match self.method {
            PlanMethod::PhiU => "phi_u",
            PlanMethod::Bfs => "bfs",
        };
        let mut out = format!(
            "# method {method}\n# model {model_hash}\n# start {}\n# target {}\n# settle {}\n",
            alphabet.render(&self.start),
            alphabet.render(&self.target),
            self.settle
        );
        out.push_str("k\tinput\tstate\n");
        for (k, x) in self.trajectory.iter().enumerate() {
            let u = self.inputs.get(k).map_or("-", |&u| alphabet.symbol(u));
            let _ = writeln!(out, "{k}\t{u}\t{}", alphabet.render(x));
        }
        out
    }
}

impl ControlPlan {
    /// The plan as a zero-temperature transcript, replayable through [`Transcript::replay`].
    pub fn to_transcript<M: Discriminant + ?Sized>(&self, model: &M) -> Result<Transcript> {
        let initial = Context::new(self.start.clone(), model.alphabet(), model.context_len())?;
        let mut conv = Conversation::new(initial, SamplerConfig::new(Temperature::Zero, 0), model.model_hash());
        for &u in &self.inputs {
            conv.turn(model, &BotMode::Sampled, u)?;
        }
        Ok(conv.transcript().clone())
    }
}

/// Plays the plan's inputs open-loop with the bot sampling at temperature `t`; returns
/// how many of `n` runs ended on the target block, with a 95% Wilson interval.
pub fn plan_success_rate<M: Discriminant + ?Sized>(
    model: &M,
    plan: &ControlPlan,
    t: Temperature,
    n: u64,
    seed: u64,
) -> Result<(u64, (f64, f64))> {
    let ell = plan.target.len();
    let hits = par::try_map_range(n as usize, |i| -> Result<bool> {
        let mut rng = rng_stream(seed, i as u64);
        let mut x = plan.start.clone();
        for &u in &plan.inputs {
            let dist = next_token_distribution(model, &x, t)?;
            let b = sample_index(&dist, &mut rng);
            x.drain(..2);
            x.extend([b, u]);
        }
        Ok(x[x.len() - ell..] == plan.target[..])
    })?;
    let s = hits.into_iter().filter(|&h| h).count() as u64;
    Ok((s, wilson(s, n, Z95)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthOptions {
    /// Extra leading inputs tried when no plan of length ℓ exists.
    pub max_settle: usize,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions { max_settle: 2 }
    }
}

fn check_tokens(alphabet: &Alphabet, tokens: &[TokenId]) -> Result<()> {
    tokens.iter().try_for_each(|&t| alphabet.check(t).map(|_| ()))
}

/// Builds a plan that drives the last ℓ tokens of the state to `target`.
///
/// Inputs that land directly in the target block are read off the target; the
/// remaining steering inputs are found by enumerating the input alphabet step by
/// step, checking each bot output against the block as soon as it is written. Plans
/// of length ℓ are tried first, then up to `max_settle` extra leading inputs, and
/// last the plans shorter than ℓ that keep tokens already in place. Every visited
/// state must satisfy the pivot-bijectivity hypothesis.
pub fn synthesize_phi_u<M: Discriminant + ?Sized>(
    model: &M,
    start: &[TokenId],
    target: &[TokenId],
    opts: SynthOptions,
) -> Result<ControlPlan> {
    let alphabet = model.alphabet();
    let c = model.context_len();
    let ell = target.len();
    let p = pivot(c, ell)?;
    if start.len() != c {
        return Err(Error::ContextLength { got: start.len(), expected: c });
    }
    check_tokens(alphabet, start)?;
    check_tokens(alphabet, target)?;
    let hyp = |x: &[TokenId]| -> Result<()> {
        match pivot_collision(model, x, p) {
            Some((a, b, out)) => Err(Error::HypothesisViolated(format!(
                "state {x:?}: pivot values {a} and {b} both give {out}"
            ))),
            None => Ok(()),
        }
    };
    hyp(start)?;

    for n in (ell..=ell + opts.max_settle).chain(0..ell) {
        let settle = n.saturating_sub(ell);
        let mut search = Search { model, target, c, k: alphabet.k(), n, inputs: Vec::with_capacity(n) };
        let mut traj = vec![start.to_vec()];
        if search.dfs(&mut traj) {
            let inputs = search.inputs;
            for x in &traj {
                hyp(x)?;
            }
            let z = traj[..n].iter().zip(&inputs).map(|(x, &u)| phi_u(model, x, u, ell)).collect::<Result<Vec<_>>>()?;
            let plan = ControlPlan {
                start: start.to_vec(),
                target: target.to_vec(),
                inputs,
                trajectory: traj,
                method: PlanMethod::PhiU,
                settle,
                z,
            };
            plan.validate(model)?;
            return Ok(plan);
        }
    }
    Err(Error::PlanNotFound(opts.max_settle))
}

struct Search<'a, M: ?Sized> {
    model: &'a M,
    target: &'a [TokenId],
    c: usize,
    k: usize,
    n: usize,
    inputs: Vec<TokenId>,
}

impl<M: Discriminant + ?Sized> Search<'_, M> {
    /// Required value at final position `pos` (0-based), if it lies in the target block.
    fn required(&self, pos: isize) -> Option<TokenId> {
        let first = (self.c - self.target.len()) as isize;
        (pos >= first).then(|| self.target[(pos - first) as usize])
    }

    fn dfs(&mut self, traj: &mut Vec<Vec<TokenId>>) -> bool {
        let step = self.inputs.len();
        if step == self.n {
            let x = traj.last().expect("non-empty");
            return x[self.c - self.target.len()..] == *self.target;
        }
        let x = traj.last().expect("non-empty").clone();
        // tokens written at this step end up 2·(n-1-step) places left of their slot
        let shift = 2 * (self.n - 1 - step) as isize;
        let bot_pos = self.c as isize - 2 - shift;
        let input_pos = self.c as isize - 1 - shift;
        let bot = self.model.deterministic_token(&x);
        if self.required(bot_pos).is_some_and(|t| t != bot) {
            return false;
        }
        let candidates: Vec<TokenId> = match self.required(input_pos) {
            Some(t) => vec![t],
            None => (0..self.k).collect(),
        };
        for u in candidates {
            let mut next = Vec::with_capacity(self.c);
            next.extend_from_slice(&x[2..]);
            next.push(bot);
            next.push(u);
            traj.push(next);
            self.inputs.push(u);
            if self.dfs(traj) {
                return true;
            }
            self.inputs.pop();
            traj.pop();
        }
        false
    }
}

/// Base-`K` encoding of windows, first coordinate most significant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateCodec {
    pub k: usize,
    pub c: usize,
}

impl StateCodec {
    pub fn states(&self) -> usize {
        self.k.pow(self.c as u32)
    }
    pub fn encode(&self, w: &[TokenId]) -> usize {
        w.iter().fold(0, |acc, &t| acc * self.k + t)
    }
    pub fn decode(&self, mut code: usize) -> Vec<TokenId> {
        let mut w = vec![0; self.c];
        for slot in w.iter_mut().rev() {
            *slot = code % self.k;
            code /= self.k;
        }
        w
    }
    /// Code of `(x_3, …, x_C, bot, u)`.
    pub fn shift2(&self, code: usize, bot: TokenId, u: TokenId) -> usize {
        let keep = self.k.pow(self.c as u32 - 2);
        ((code % keep) * self.k + bot) * self.k + u
    }
}

const UNSEEN: usize = usize::MAX;

/// Breadth-first search tree of the skeleton from one start state.
#[derive(Debug, Clone)]
pub struct BfsTree {
    codec: StateCodec,
    start: usize,
    parent: Vec<usize>,
    via: Vec<TokenId>,
    /// Visited states in discovery order.
    order: Vec<usize>,
}

impl BfsTree {
    /// Explores every state reachable in at most `max_steps` compressed steps (all of
    /// them when `None`). Successors are generated in increasing input order.
    pub fn build<M: Discriminant + ?Sized>(model: &M, start: &[TokenId], max_steps: Option<usize>, budget: Budget) -> Result<Self> {
        let k = model.alphabet().k();
        let c = model.context_len();
        if c < 2 {
            return Err(Error::InvalidArgument("compressed dynamics need C ≥ 2".into()));
        }
        if start.len() != c {
            return Err(Error::ContextLength { got: start.len(), expected: c });
        }
        check_tokens(model.alphabet(), start)?;
        budget.check_pow(k, c)?;
        let codec = StateCodec { k, c };
        let n = codec.states();
        let s = codec.encode(start);
        let mut parent = vec![UNSEEN; n];
        let mut via = vec![0; n];
        let mut depth = vec![0usize; n];
        parent[s] = s;
        let mut order = vec![s];
        let mut head = 0;
        while head < order.len() {
            let x = order[head];
            head += 1;
            if max_steps.is_some_and(|m| depth[x] >= m) {
                continue;
            }
            let bot = model.deterministic_token(&codec.decode(x));
            for u in 0..k {
                let y = codec.shift2(x, bot, u);
                if parent[y] == UNSEEN {
                    parent[y] = x;
                    via[y] = u;
                    depth[y] = depth[x] + 1;
                    order.push(y);
                }
            }
        }
        Ok(BfsTree { codec, start: s, parent, via, order })
    }

    pub fn visited(&self) -> usize {
        self.order.len()
    }

    fn path_to(&self, mut code: usize) -> Vec<TokenId> {
        let mut inputs = Vec::new();
        while code != self.start {
            inputs.push(self.via[code]);
            code = self.parent[code];
        }
        inputs.reverse();
        inputs
    }

    /// First state in discovery order (hence a shortest plan) for every reachable
    /// last-ℓ block.
    pub fn first_hits(&self, ell: usize) -> HashMap<Vec<TokenId>, usize> {
        let mut hits = HashMap::new();
        for &code in &self.order {
            let w = self.codec.decode(code);
            hits.entry(w[w.len() - ell..].to_vec()).or_insert(code);
        }
        hits
    }

    pub fn plan_to<M: Discriminant + ?Sized>(&self, model: &M, target: &[TokenId]) -> Option<ControlPlan> {
        let ell = target.len();
        let code = *self.order.iter().find(|&&code| {
            let w = self.codec.decode(code);
            &w[w.len() - ell..] == target
        })?;
        Some(self.plan_for_state(model, code, target))
    }

    pub(crate) fn plan_for_state<M: Discriminant + ?Sized>(&self, model: &M, code: usize, target: &[TokenId]) -> ControlPlan {
        let start = self.codec.decode(self.start);
        let inputs = self.path_to(code);
        let trajectory = simulate(model, &start, &inputs);
        ControlPlan { start, target: target.to_vec(), inputs, trajectory, method: PlanMethod::Bfs, settle: 0, z: Vec::new() }
    }
}

/// Shortest plan to `target`, or `None` when it is unreachable within `max_steps`.
pub fn bfs_oracle<M: Discriminant + ?Sized>(
    model: &M,
    start: &[TokenId],
    target: &[TokenId],
    max_steps: Option<usize>,
    budget: Budget,
) -> Result<Option<ControlPlan>> {
    if target.len() > model.context_len() || target.is_empty() {
        return Err(Error::InvalidArgument(format!("target block of length {}", target.len())));
    }
    check_tokens(model.alphabet(), target)?;
    let tree = BfsTree::build(model, start, max_steps, budget)?;
    Ok(tree.plan_to(model, target))
}

/// First `(start, unreachable target)` pair, or `None` if every last-ℓ block is
/// reachable from every start.
pub fn full_controllability<M: Discriminant + ?Sized>(model: &M, ell: usize, budget: Budget) -> Result<Option<(Vec<TokenId>, Vec<TokenId>)>> {
    let k = model.alphabet().k();
    let c = model.context_len();
    budget.check((k as f64).powi(c as i32) * (k as f64).powi(c as i32))?;
    let codec = StateCodec { k, c };
    let blocks = crate::models::all_windows_vec(k, ell);
    let gaps = par::try_map_range(codec.states(), |s| -> Result<Option<(Vec<TokenId>, Vec<TokenId>)>> {
        let start = codec.decode(s);
        let hits = BfsTree::build(model, &start, None, budget)?.first_hits(ell);
        Ok(blocks.iter().find(|b| !hits.contains_key(*b)).map(|b| (start, b.clone())))
    })?;
    Ok(gaps.into_iter().flatten().next())
}

/// How a model's greedy continuation acts on meaning classes.
#[derive(Debug, Clone, PartialEq)]
pub struct PostulateReport {
    pub classifier: String,
    pub classes: usize,
    /// Input class → classes of the continuations of its members.
    pub image: BTreeMap<usize, BTreeSet<usize>>,
    /// Distinct input-class pairs whose images overlap, with one shared class.
    pub collisions: Vec<(usize, usize, usize)>,
    /// Classes never produced by any continuation.
    pub unhit: Vec<usize>,
    /// Members whose greedy continuation did not reach EOS within `C` steps.
    pub undefined: usize,
    pub collision_fraction: f64,
}

impl PostulateReport {
    pub fn is_bijective(&self) -> bool {
        self.collisions.is_empty() && self.unhit.is_empty() && self.image.values().all(|s| s.len() == 1)
    }
}

/// Maps every member of `ms` through its greedy continuation and records how input
/// classes land on output classes. A probe, not a test: nothing here passes or fails.
pub fn postulate_probe<M: Discriminant + ?Sized, D: Discriminant + ?Sized>(
    model: &M,
    classifier: &MeaningClassifier<'_, D>,
    ms: &MeaningfulSet,
) -> Result<PostulateReport> {
    let alphabet = model.alphabet();
    let c = model.context_len();
    let mut image: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    let mut undefined = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for tokens in ms.sorted_members() {
        let s = Sentence::new(tokens, alphabet)?;
        let cin = classifier.classify(&s)?;
        let r = rollout(model, s.tokens(), Temperature::Zero, c, &mut rng)?;
        if !r.halted {
            undefined += 1;
            image.entry(cin).or_default();
            continue;
        }
        let cont = Sentence::new(r.generated, alphabet)?;
        let cout = classifier.classify(&cont)?;
        image.entry(cin).or_default().insert(cout);
    }
    let keys: Vec<usize> = image.keys().copied().collect();
    let mut collisions = Vec::new();
    let mut pairs = 0usize;
    for (i, a) in keys.iter().enumerate() {
        for b in &keys[i + 1..] {
            pairs += 1;
            if let Some(shared) = image[a].intersection(&image[b]).next() {
                collisions.push((*a, *b, *shared));
            }
        }
    }
    let hit: BTreeSet<usize> = image.values().flatten().copied().collect();
    let classes = classifier.num_classes();
    let unhit = (0..classes).filter(|c| !hit.contains(c)).collect();
    let collision_fraction = if pairs == 0 { 0.0 } else { collisions.len() as f64 / pairs as f64 };
    Ok(PostulateReport { classifier: classifier.name().to_string(), classes, image, collisions, unhit, undefined, collision_fraction })
}
