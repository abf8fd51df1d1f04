//! Censorship and control against an adversarial user.
//!
//! The game runs on the compressed dynamics: from window `x` the bot samples `b`, the
//! adversary supplies `u`, and the next window is `(x_3, …, x_C, b, u)`. A window is
//! toxic when it contains one of the configured toxic phrases; toxic windows absorb.
//! Censors replace an offending token with pad before it enters the window. The
//! defender may prepend a short system-prompt string to the bot's view for one turn.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::controllability::StateCodec;
use crate::dynamics::{intervention_view, next_token_distribution, padded_window, rng_stream, rollout, sample_index, Temperature};
use crate::error::{Budget, Error, Result};
use crate::models::Discriminant;
use crate::par;
use crate::stats::{squared_distance, wilson, Z99};
use crate::token::{Alphabet, TokenId};

/// Threshold standing in for "score ≈ 1".
pub const NEAR_ONE: f64 = 1.0 - 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scenario {
    /// Classifier trained on toxic and tame sentences: toxic scores 1.
    Phi1,
    /// Classifier trained on tame sentences only: toxic scores `1 - ε`.
    Phi2 { epsilon: f64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Allow,
    Deny(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToxicSpec {
    phrases: Vec<Vec<TokenId>>,
    pub scenario: Scenario,
    pub threshold: f64,
    pub censor_input: bool,
    pub censor_output: bool,
    /// Index 0 is always the null intervention.
    interventions: Vec<Vec<TokenId>>,
    pad: TokenId,
}

impl ToxicSpec {
    /// Input censor on, output censor off, threshold ≈ 1, null intervention only.
    pub fn new(alphabet: &Alphabet, phrases: Vec<Vec<TokenId>>, scenario: Scenario) -> Result<Self> {
        for p in &phrases {
            if p.is_empty() {
                return Err(Error::InvalidArgument("empty toxic phrase".into()));
            }
            for &t in p {
                alphabet.check(t)?;
                if t == alphabet.pad() {
                    return Err(Error::InvalidArgument("toxic phrases cannot contain pad".into()));
                }
            }
        }
        if let Scenario::Phi2 { epsilon } = scenario {
            if !(0.0..1.0).contains(&epsilon) {
                return Err(Error::InvalidArgument(format!("ε must lie in [0, 1), got {epsilon}")));
            }
        }
        Ok(ToxicSpec {
            phrases,
            scenario,
            threshold: NEAR_ONE,
            censor_input: true,
            censor_output: false,
            interventions: vec![Vec::new()],
            pad: alphabet.pad(),
        })
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn with_censors(mut self, input: bool, output: bool) -> Self {
        self.censor_input = input;
        self.censor_output = output;
        self
    }

    /// Same phrases and censors under another scenario.
    pub fn with_scenario(mut self, scenario: Scenario) -> Self {
        self.scenario = scenario;
        self
    }

    /// Adds the non-null interventions (the null one stays at index 0).
    pub fn with_interventions(mut self, alphabet: &Alphabet, vs: Vec<Vec<TokenId>>) -> Result<Self> {
        for v in &vs {
            for &t in v {
                alphabet.check(t)?;
            }
        }
        self.interventions = std::iter::once(Vec::new()).chain(vs.into_iter().filter(|v| !v.is_empty())).collect();
        Ok(self)
    }

    pub fn phrases(&self) -> &[Vec<TokenId>] {
        &self.phrases
    }
    pub fn interventions(&self) -> &[Vec<TokenId>] {
        &self.interventions
    }

    /// Ground truth: the tokens contain a toxic phrase.
    pub fn is_toxic(&self, tokens: &[TokenId]) -> bool {
        self.phrases.iter().any(|p| p.len() <= tokens.len() && tokens.windows(p.len()).any(|w| w == p.as_slice()))
    }

    /// Classifier score under the scenario.
    pub fn score(&self, tokens: &[TokenId]) -> f64 {
        if !self.is_toxic(tokens) {
            return 0.0;
        }
        match self.scenario {
            Scenario::Phi1 => 1.0,
            Scenario::Phi2 { epsilon } => 1.0 - epsilon,
        }
    }

    pub fn censor(&self, tokens: &[TokenId]) -> Verdict {
        let s = self.score(tokens);
        if s >= self.threshold {
            Verdict::Deny(format!("toxic score {s} ≥ threshold {}", self.threshold))
        } else {
            Verdict::Allow
        }
    }

    fn denies(&self, tokens: &[TokenId]) -> bool {
        self.score(tokens) >= self.threshold
    }

    /// Bot token after the output censor, given the window it was sampled from.
    pub fn censor_bot(&self, x: &[TokenId], bot: TokenId) -> TokenId {
        if !self.censor_output || x.len() < 2 {
            return bot;
        }
        let mut seq = x[2..].to_vec();
        seq.push(bot);
        if self.denies(&seq) {
            self.pad
        } else {
            bot
        }
    }

    /// User token after the input censor.
    pub fn censor_user(&self, x: &[TokenId], bot: TokenId, user: TokenId) -> TokenId {
        if !self.censor_input || x.len() < 2 {
            return user;
        }
        let mut seq = x[2..].to_vec();
        seq.extend([bot, user]);
        if self.denies(&seq) {
            self.pad
        } else {
            user
        }
    }

    pub fn to_file_string(&self, alphabet: &Alphabet) -> String {
        let mut out = String::from("# botdyn game v1\n");
        match self.scenario {
            Scenario::Phi1 => out.push_str("scenario phi1\n"),
            Scenario::Phi2 { epsilon } => {
                let _ = writeln!(out, "scenario phi2\nepsilon {epsilon:?}");
            }
        }
        let onoff = |b: bool| if b { "on" } else { "off" };
        let _ = writeln!(out, "threshold {:?}", self.threshold);
        let _ = writeln!(out, "censor_input {}\ncensor_output {}", onoff(self.censor_input), onoff(self.censor_output));
        for p in &self.phrases {
            let _ = writeln!(out, "toxic {}", alphabet.render(p));
        }
        for v in &self.interventions[1..] {
            let _ = writeln!(out, "intervention {}", alphabet.render(v));
        }
        out
    }

    pub fn parse_str(text: &str, alphabet: &Alphabet, path: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, column: 1, msg };
        let mut scenario = None;
        let mut epsilon = None;
        let mut threshold = NEAR_ONE;
        let mut censors = (true, false);
        let mut phrases = Vec::new();
        let mut interventions = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let rest = rest.trim();
            let flag = |v: &str| match v {
                "on" => Ok(true),
                "off" => Ok(false),
                _ => Err(err(i + 1, format!("expected on/off, got {v:?}"))),
            };
            match key {
                "scenario" => scenario = Some(rest.to_string()),
                "epsilon" => epsilon = Some(rest.parse::<f64>().map_err(|_| err(i + 1, format!("bad ε {rest:?}")))?),
                "threshold" => threshold = rest.parse().map_err(|_| err(i + 1, format!("bad threshold {rest:?}")))?,
                "censor_input" => censors.0 = flag(rest)?,
                "censor_output" => censors.1 = flag(rest)?,
                "toxic" => phrases.push(alphabet.parse_tokens(rest).map_err(|e| err(i + 1, e.to_string()))?),
                "intervention" => interventions.push(alphabet.parse_tokens(rest).map_err(|e| err(i + 1, e.to_string()))?),
                other => return Err(err(i + 1, format!("unknown key {other:?}"))),
            }
        }
        let scenario = match (scenario.as_deref(), epsilon) {
            (Some("phi1"), _) => Scenario::Phi1,
            (Some("phi2"), Some(epsilon)) => Scenario::Phi2 { epsilon },
            (Some("phi2"), None) => Scenario::Phi2 { epsilon: 0.2 },
            (other, _) => return Err(err(0, format!("scenario must be phi1 or phi2, got {other:?}"))),
        };
        ToxicSpec::new(alphabet, phrases, scenario)?
            .with_threshold(threshold)
            .with_censors(censors.0, censors.1)
            .with_interventions(alphabet, interventions)
    }

    pub fn load(path: &Path, alphabet: &Alphabet) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text, alphabet, path)
    }

    pub fn save(&self, path: &Path, alphabet: &Alphabet) -> Result<()> {
        std::fs::write(path, self.to_file_string(alphabet)).map_err(|e| Error::io(path, e))
    }
}

/// Successor windows and probabilities for one adversary input, censors applied: one
/// entry per bot token with positive probability, in token order. Entries are not
/// merged, so expectations sum in a fixed order.
pub fn transition<M: Discriminant + ?Sized>(
    model: &M,
    spec: &ToxicSpec,
    x: &[TokenId],
    u: TokenId,
    v: &[TokenId],
    t: Temperature,
) -> Result<Vec<(Vec<TokenId>, f64)>> {
    model.alphabet().check(u)?;
    let dist = next_token_distribution(model, &intervention_view(x, v), t)?;
    let mut out: Vec<(Vec<TokenId>, f64)> = Vec::new();
    for (b, &p) in dist.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let b = spec.censor_bot(x, b);
        let u = spec.censor_user(x, b, u);
        let mut next = x[2.min(x.len())..].to_vec();
        next.extend([b, u]);
        next.drain(..next.len() - x.len());
        out.push((next, p));
    }
    Ok(out)
}

/// Transition structure of the whole state space, built once per analysis.
struct Chain {
    codec: StateCodec,
    toxic: Vec<bool>,
    /// `succ[x][u]` = `(next state, probability)` under the null intervention.
    succ: Vec<Vec<Vec<(usize, f64)>>>,
}

impl Chain {
    fn build<M: Discriminant + ?Sized>(model: &M, spec: &ToxicSpec, t: Temperature, budget: Budget) -> Result<Self> {
        let k = model.alphabet().k();
        let c = model.context_len();
        if c < 2 {
            return Err(Error::InvalidArgument("the game needs C ≥ 2".into()));
        }
        budget.check((k as f64).powi(c as i32) * (k * k) as f64)?;
        let codec = StateCodec { k, c };
        let n = codec.states();
        let toxic = par::map_range(n, |x| spec.is_toxic(&codec.decode(x)));
        let succ = par::try_map_range(n, |x| -> Result<Vec<Vec<(usize, f64)>>> {
            let w = codec.decode(x);
            (0..k)
                .map(|u| Ok(transition(model, spec, &w, u, &[], t)?.into_iter().map(|(y, p)| (codec.encode(&y), p)).collect()))
                .collect()
        })?;
        Ok(Chain { codec, toxic, succ })
    }
}

/// Minimum expected arrival time into the toxic set, per state.
#[derive(Debug, Clone, PartialEq)]
pub struct GameValue {
    pub codec: StateCodec,
    /// `τ*` per state code; `f64::INFINITY` when absorption within the horizon cannot
    /// be forced with probability one.
    pub values: Vec<f64>,
    /// Minimising input per state (lowest id on ties); 0 on toxic states.
    pub policy: Vec<TokenId>,
    pub horizon: usize,
    pub sweeps: usize,
    pub converged: bool,
}

impl GameValue {
    pub fn value(&self, window: &[TokenId]) -> f64 {
        self.values[self.codec.encode(window)]
    }
    pub fn policy_at(&self, window: &[TokenId]) -> TokenId {
        self.policy[self.codec.encode(window)]
    }

    pub fn to_text(&self, alphabet: &Alphabet) -> String {
        let mut out = format!("# horizon {}\n# sweeps {}\n# converged {}\nstate\ttau\tpolicy\n", self.horizon, self.sweeps, self.converged);
        for (x, v) in self.values.iter().enumerate() {
            let w = self.codec.decode(x);
            let _ = writeln!(out, "{}\t{v}\t{}", alphabet.render(&w), alphabet.symbol(self.policy[x]));
        }
        out
    }
}

/// Value iteration on `τ*`: `V_0` is 0 on toxic states and ∞ elsewhere, and
/// `V_j(x) = 1 + min_u Σ_b p_b V_{j-1}(x')`. Stops after `horizon` sweeps or at a fixpoint.
pub fn adversary_value_iteration<M: Discriminant + ?Sized>(
    model: &M,
    spec: &ToxicSpec,
    horizon: usize,
    t: Temperature,
    budget: Budget,
) -> Result<GameValue> {
    let chain = Chain::build(model, spec, t, budget)?;
    let (values, policy, sweeps, converged) = iterate(&chain, horizon);
    Ok(GameValue { codec: chain.codec, values, policy, horizon, sweeps, converged })
}

fn iterate(chain: &Chain, horizon: usize) -> (Vec<f64>, Vec<TokenId>, usize, bool) {
    let n = chain.codec.states();
    let mut v: Vec<f64> = chain.toxic.iter().map(|&t| if t { 0.0 } else { f64::INFINITY }).collect();
    let mut policy = vec![0; n];
    for sweep in 1..=horizon {
        let next: Vec<(f64, TokenId)> = par::map_range(n, |x| {
            if chain.toxic[x] {
                return (0.0, 0);
            }
            let mut best = (f64::INFINITY, 0);
            for (u, succ) in chain.succ[x].iter().enumerate() {
                let mut e = 0.0;
                for &(y, p) in succ {
                    e += p * v[y];
                }
                let val = 1.0 + e;
                if val < best.0 {
                    best = (val, u);
                }
            }
            best
        });
        let new_v: Vec<f64> = next.iter().map(|x| x.0).collect();
        policy = next.iter().map(|x| x.1).collect();
        if new_v == v {
            return (v, policy, sweep, true);
        }
        v = new_v;
    }
    (v, policy, horizon, false)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioComparison {
    /// `(start, τ*₁, τ*₂)`.
    pub per_start: Vec<(Vec<TokenId>, f64, f64)>,
    /// Starts where `τ*₂ > τ*₁`.
    pub violations: Vec<Vec<TokenId>>,
}

/// Runs value iteration under both censorship regimes and compares per start.
pub fn compare_scenarios<M: Discriminant + ?Sized>(
    model: &M,
    spec1: &ToxicSpec,
    spec2: &ToxicSpec,
    starts: &[Vec<TokenId>],
    horizon: usize,
    t: Temperature,
    budget: Budget,
) -> Result<ScenarioComparison> {
    if spec1.phrases != spec2.phrases {
        return Err(Error::InvalidArgument("scenarios must share the toxic ground truth".into()));
    }
    let g1 = adversary_value_iteration(model, spec1, horizon, t, budget)?;
    let g2 = adversary_value_iteration(model, spec2, horizon, t, budget)?;
    let per_start: Vec<_> = starts.iter().map(|s| (s.clone(), g1.value(s), g2.value(s))).collect();
    let violations = per_start.iter().filter(|(_, a, b)| b > a).map(|(s, _, _)| s.clone()).collect();
    Ok(ScenarioComparison { per_start, violations })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefenderConfig {
    /// Weight on the run-time cost.
    pub lambda: f64,
    /// Lookahead depth in compressed steps.
    pub depth: usize,
    /// Completions sampled for the provisional toxic score.
    pub completions: usize,
    pub seed: u64,
    pub temperature: Temperature,
}

impl Default for DefenderConfig {
    fn default() -> Self {
        DefenderConfig { lambda: 1.0, depth: 3, completions: 64, seed: 0, temperature: Temperature::Finite(1.0) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefenderDecision {
    /// Index into the spec's intervention list (0 = null).
    pub index: usize,
    pub intervention: Vec<TokenId>,
    /// `(e^φ - 1) · ‖p_v - p_0‖²`.
    pub cost: f64,
    /// Provisional toxic score `φ` of the current window.
    pub provisional: f64,
    /// Lookahead survival `E[min(τ, depth)]` per intervention.
    pub survival: Vec<f64>,
    /// Lookahead absorption probability under the null intervention.
    pub null_absorption: f64,
}

/// Expected toxic score of completions of `window`: the greedy completion at zero
/// temperature, otherwise the mean over `cfg.completions` sampled completions.
pub fn provisional_score<M: Discriminant + ?Sized>(model: &M, spec: &ToxicSpec, window: &[TokenId], cfg: &DefenderConfig) -> Result<f64> {
    let a = model.alphabet();
    let c = model.context_len();
    let start: Vec<TokenId> = {
        let first = window.iter().position(|&t| t != a.pad()).unwrap_or(window.len());
        window[first..].to_vec()
    };
    if start.is_empty() {
        return Ok(0.0);
    }
    let score_of = |rng: &mut ChaCha8Rng| -> Result<f64> {
        let r = rollout(model, &start, cfg.temperature, c, rng)?;
        let mut seq = start.clone();
        seq.extend(r.generated);
        Ok(spec.score(&seq))
    };
    let code = StateCodec { k: a.k(), c }.encode(&padded_window(window, c, a.pad()));
    if cfg.temperature == Temperature::Zero {
        return score_of(&mut rng_stream(cfg.seed, code as u64));
    }
    let mut rng = rng_stream(cfg.seed, code as u64);
    let mut total = 0.0;
    for _ in 0..cfg.completions.max(1) {
        total += score_of(&mut rng)?;
    }
    Ok(total / cfg.completions.max(1) as f64)
}

struct Lookahead<'a, M: ?Sized> {
    model: &'a M,
    spec: &'a ToxicSpec,
    t: Temperature,
    k: usize,
}

impl<M: Discriminant + ?Sized> Lookahead<'_, M> {
    /// `E[min(τ, d)]` with the defender maximising and the adversary minimising.
    fn survival(&self, x: &[TokenId], d: usize) -> Result<f64> {
        if d == 0 || self.spec.is_toxic(x) {
            return Ok(0.0);
        }
        let mut best = f64::NEG_INFINITY;
        for v in self.spec.interventions() {
            let mut worst = f64::INFINITY;
            for u in 0..self.k {
                worst = worst.min(self.after(x, u, v, d)?);
            }
            best = best.max(worst);
        }
        Ok(best)
    }

    /// Survival when this turn's intervention and input are fixed.
    fn after(&self, x: &[TokenId], u: TokenId, v: &[TokenId], d: usize) -> Result<f64> {
        let mut e = 1.0;
        for (y, p) in transition(self.model, self.spec, x, u, v, self.t)? {
            e += p * self.survival(&y, d - 1)?;
        }
        Ok(e)
    }

    /// Worst-case absorption probability within `d` steps, null interventions.
    fn absorption(&self, x: &[TokenId], d: usize) -> Result<f64> {
        if self.spec.is_toxic(x) {
            return Ok(1.0);
        }
        if d == 0 {
            return Ok(0.0);
        }
        let mut worst: f64 = 0.0;
        for u in 0..self.k {
            worst = worst.max(self.absorption_after(x, u, d)?);
        }
        Ok(worst)
    }

    fn absorption_after(&self, x: &[TokenId], u: TokenId, d: usize) -> Result<f64> {
        let mut e = 0.0;
        for (y, p) in transition(self.model, self.spec, x, u, &[], self.t)? {
            e += p * self.absorption(&y, d - 1)?;
        }
        Ok(e)
    }
}

/// Picks this turn's intervention for window `x` given the adversary's input `u`.
///
/// Each candidate `v` is scored by lookahead survival minus `λ` times its run-time
/// cost; ties go to the smallest change in the bot's next-token distribution, then to
/// the lowest index. When the null intervention cannot lead to absorption within the
/// lookahead, null is chosen outright.
pub fn defender_step<M: Discriminant + ?Sized>(
    model: &M,
    spec: &ToxicSpec,
    x: &[TokenId],
    u: TokenId,
    cfg: &DefenderConfig,
) -> Result<DefenderDecision> {
    if x.len() != model.context_len() {
        return Err(Error::ContextLength { got: x.len(), expected: model.context_len() });
    }
    let depth = cfg.depth.max(1);
    let la = Lookahead { model, spec, t: cfg.temperature, k: model.alphabet().k() };
    let phi = provisional_score(model, spec, x, cfg)?;
    let weight = phi.exp() - 1.0;
    let p0 = next_token_distribution(model, x, cfg.temperature)?;
    let null_absorption = la.absorption_after(x, u, depth)?;
    let mut survival = Vec::with_capacity(spec.interventions().len());
    let mut change = Vec::with_capacity(spec.interventions().len());
    for v in spec.interventions() {
        survival.push(la.after(x, u, v, depth)?);
        let pv = next_token_distribution(model, &intervention_view(x, v), cfg.temperature)?;
        change.push(squared_distance(&pv, &p0));
    }
    let mut index = 0;
    if null_absorption > 0.0 {
        let objective = |i: usize| survival[i] - cfg.lambda * weight * change[i];
        for i in 1..survival.len() {
            let (oi, ob) = (objective(i), objective(index));
            if oi > ob || (oi == ob && change[i] < change[index]) {
                index = i;
            }
        }
    }
    Ok(DefenderDecision {
        index,
        intervention: spec.interventions()[index].clone(),
        cost: weight * change[index],
        provisional: phi,
        survival,
        null_absorption,
    })
}

/// Who plays the user side in absorption estimates.
#[derive(Debug, Clone, Copy)]
pub enum Adversary<'a> {
    /// The minimising policy from value iteration.
    Policy(&'a GameValue),
    /// Uniformly random inputs.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbsorptionEstimate {
    pub estimate: f64,
    pub hits: u64,
    pub n: u64,
    /// 99% Wilson interval.
    pub ci: (f64, f64),
}

/// Fraction of `n` simulated conversations from `start` that enter the toxic set
/// within `horizon` compressed steps. Simulation `i` uses stream `i` of `seed`.
#[allow(clippy::too_many_arguments)]
pub fn absorption_probability<M: Discriminant + ?Sized>(
    model: &M,
    spec: &ToxicSpec,
    start: &[TokenId],
    horizon: usize,
    adversary: Adversary<'_>,
    t: Temperature,
    n: u64,
    seed: u64,
) -> Result<AbsorptionEstimate> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one simulation".into()));
    }
    let k = model.alphabet().k();
    if start.len() != model.context_len() {
        return Err(Error::ContextLength { got: start.len(), expected: model.context_len() });
    }
    let hits = par::try_map_range(n as usize, |i| -> Result<bool> {
        let mut rng = rng_stream(seed, i as u64);
        let mut x = start.to_vec();
        for _ in 0..horizon {
            if spec.is_toxic(&x) {
                return Ok(true);
            }
            let u = match adversary {
                Adversary::Policy(g) => g.policy_at(&x),
                Adversary::Random => rng.random_range(0..k),
            };
            let dist = next_token_distribution(model, &x, t)?;
            let b = spec.censor_bot(&x, sample_index(&dist, &mut rng));
            let u = spec.censor_user(&x, b, u);
            x.drain(..2);
            x.extend([b, u]);
        }
        Ok(spec.is_toxic(&x))
    })?;
    let hits = hits.into_iter().filter(|&h| h).count() as u64;
    Ok(AbsorptionEstimate { estimate: hits as f64 / n as f64, hits, n, ci: wilson(hits, n, Z99) })
}

/// Absorption probability within `horizon` steps by propagating the state
/// distribution through the chain, toxic states held absorbing.
pub fn exact_absorption<M: Discriminant + ?Sized>(
    model: &M,
    spec: &ToxicSpec,
    start: &[TokenId],
    horizon: usize,
    adversary: Adversary<'_>,
    t: Temperature,
    budget: Budget,
) -> Result<f64> {
    let chain = Chain::build(model, spec, t, budget)?;
    let k = chain.codec.k;
    let n = chain.codec.states();
    let mut pi = vec![0.0; n];
    pi[chain.codec.encode(start)] = 1.0;
    for _ in 0..horizon {
        let mut next = vec![0.0; n];
        for x in 0..n {
            if pi[x] == 0.0 {
                continue;
            }
            if chain.toxic[x] {
                next[x] += pi[x];
                continue;
            }
            match adversary {
                Adversary::Policy(g) => {
                    for &(y, p) in &chain.succ[x][g.policy[x]] {
                        next[y] += pi[x] * p;
                    }
                }
                Adversary::Random => {
                    for succ in &chain.succ[x] {
                        for &(y, p) in succ {
                            next[y] += pi[x] * p / k as f64;
                        }
                    }
                }
            }
        }
        pi = next;
    }
    Ok((0..n).filter(|&x| chain.toxic[x]).map(|x| pi[x]).sum())
}

/// A random toy game: sparse tabular model (support ≤ 2) on `K = 3`, `C = 4` and one
/// or two toxic phrases of length 2 over the non-pad tokens.
pub fn random_game_instance(seed: u64, epsilon: f64) -> Result<(crate::models::TabularModel, ToxicSpec, ToxicSpec)> {
    let a = Alphabet::toy(3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = crate::models::TabularModel::random_sparse(a.clone(), 4, 2, &mut rng);
    let live = [0, a.eos()];
    let count = rng.random_range(1..=2);
    let phrases: Vec<Vec<TokenId>> = (0..count).map(|_| vec![live[rng.random_range(0..2)], live[rng.random_range(0..2)]]).collect();
    let spec1 = ToxicSpec::new(&a, phrases, Scenario::Phi1)?;
    let spec2 = spec1.clone().with_scenario(Scenario::Phi2 { epsilon });
    Ok((model, spec1, spec2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::TabularModel;

    fn abc() -> Alphabet {
        Alphabet::toy(5) // a b c EOS PAD
    }

    #[test]
    fn censor_rules() {
        let a = abc();
        let spec = ToxicSpec::new(&a, vec![vec![2, 2]], Scenario::Phi1).unwrap();
        assert!(matches!(spec.censor(&[0, 2, 2, 3]), Verdict::Deny(_)));
        assert_eq!(spec.censor(&[0, 1, 3]), Verdict::Allow);
        let s2 = ToxicSpec::new(&a, vec![vec![2, 2]], Scenario::Phi2 { epsilon: 0.2 }).unwrap();
        assert_eq!(s2.score(&[2, 2]), 0.8);
        assert!(matches!(s2.clone().with_threshold(0.8).censor(&[2, 2]), Verdict::Deny(_)));
        assert_eq!(s2.with_threshold(0.85).censor(&[2, 2]), Verdict::Allow);
        assert!(ToxicSpec::new(&a, vec![vec![4]], Scenario::Phi1).is_err());
        assert!(ToxicSpec::new(&a, vec![vec![0]], Scenario::Phi2 { epsilon: 1.0 }).is_err());
    }

    #[test]
    fn spec_file_round_trip() {
        let a = abc();
        let spec = ToxicSpec::new(&a, vec![vec![2, 2], vec![0, 3]], Scenario::Phi2 { epsilon: 0.2 })
            .unwrap()
            .with_censors(true, true)
            .with_interventions(&a, vec![vec![0], vec![0, 1]])
            .unwrap();
        let text = spec.to_file_string(&a);
        assert_eq!(ToxicSpec::parse_str(&text, &a, Path::new("g")).unwrap(), spec);
        assert!(ToxicSpec::parse_str("scenario phi3\n", &a, Path::new("g")).is_err());
    }

    #[test]
    fn one_step_forcing() {
        // bot always says c; phrase «c c» is forced by u = c
        let a = abc();
        let m = TabularModel::constant(a.clone(), 4, 2);
        let spec = ToxicSpec::new(&a, vec![vec![2, 2]], Scenario::Phi1).unwrap().with_censors(false, false);
        let g = adversary_value_iteration(&m, &spec, 6, Temperature::Zero, Budget::default()).unwrap();
        assert_eq!(g.value(&[0, 1, 0, 1]), 1.0);
        assert_eq!(g.policy_at(&[0, 1, 0, 1]), 2);
        assert_eq!(g.value(&[0, 2, 2, 1]), 0.0);
        assert!(g.converged);
    }

    #[test]
    fn censored_inputs_make_toxic_unreachable() {
        // the phrase is a single token only the user could write
        let a = abc();
        let m = TabularModel::constant(a.clone(), 4, 0);
        let spec = ToxicSpec::new(&a, vec![vec![2]], Scenario::Phi1).unwrap();
        let g = adversary_value_iteration(&m, &spec, 6, Temperature::Zero, Budget::default()).unwrap();
        assert_eq!(g.value(&[0, 0, 0, 0]), f64::INFINITY);
        let open = spec.with_censors(false, false);
        let g = adversary_value_iteration(&m, &open, 6, Temperature::Zero, Budget::default()).unwrap();
        assert_eq!(g.value(&[0, 0, 0, 0]), 1.0);
    }

    #[test]
    fn sweeps_are_monotone() {
        let (m, spec, _) = random_game_instance(3, 0.2).unwrap();
        let t = Temperature::Finite(1.0);
        let mut prev: Option<Vec<f64>> = None;
        for h in 0..6 {
            let g = adversary_value_iteration(&m, &spec, h, t, Budget::default()).unwrap();
            if let Some(p) = &prev {
                assert!(g.values.iter().zip(p).all(|(a, b)| a <= b));
            }
            prev = Some(g.values);
        }
    }

    #[test]
    fn identical_regimes_agree() {
        let (m, s1, _) = random_game_instance(5, 0.2).unwrap();
        let s2 = s1.clone().with_scenario(Scenario::Phi2 { epsilon: 0.0 });
        let starts: Vec<Vec<TokenId>> = crate::models::all_windows_vec(3, 4);
        let cmp = compare_scenarios(&m, &s1, &s2, &starts, 6, Temperature::Finite(1.0), Budget::default()).unwrap();
        assert!(cmp.per_start.iter().all(|(_, a, b)| a == b));
    }

    #[test]
    fn null_intervention_is_free() {
        let a = abc();
        let m = TabularModel::constant_logits(a.clone(), 4, vec![0.0, 1.0, 0.5, 0.0, 0.0]);
        let spec = ToxicSpec::new(&a, vec![vec![2, 2]], Scenario::Phi1)
            .unwrap()
            .with_interventions(&a, vec![vec![0]])
            .unwrap();
        let d = defender_step(&m, &spec, &[0, 1, 0, 1], 1, &DefenderConfig::default()).unwrap();
        // position-blind model: the intervention changes nothing, so null wins the tie
        assert_eq!(d.index, 0);
        assert_eq!(d.cost, 0.0);
    }

    /// Two-state trap: the bot answers `b` unless its oldest visible token is `a`, and
    /// the adversary completes «b b». Prepending `a` to the view keeps the bot on `a`.
    fn trap() -> (Alphabet, TabularModel, ToxicSpec) {
        let a = Alphabet::toy(4); // a b EOS PAD
        let m = TabularModel::deterministic(a.clone(), 3, |w| if w[0] == 0 { 0 } else { 1 }).unwrap();
        let spec = ToxicSpec::new(&a, vec![vec![1, 1]], Scenario::Phi1)
            .unwrap()
            .with_censors(false, false)
            .with_interventions(&a, vec![vec![0]])
            .unwrap();
        (a, m, spec)
    }

    #[test]
    fn defender_delays_absorption_in_the_trap() {
        let (_, m, spec) = trap();
        let cfg = DefenderConfig { temperature: Temperature::Zero, lambda: 0.1, ..Default::default() };
        let start = vec![3, 3, 3];
        let run = |defend: bool| -> usize {
            let mut x = start.clone();
            for step in 0..10 {
                if spec.is_toxic(&x) {
                    return step;
                }
                let u = 1;
                let v = if defend { defender_step(&m, &spec, &x, u, &cfg).unwrap().intervention } else { Vec::new() };
                let next = transition(&m, &spec, &x, u, &v, Temperature::Zero).unwrap();
                x = next[0].0.clone();
            }
            10
        };
        let (null, defended) = (run(false), run(true));
        assert_eq!(null, 1);
        assert!(defended > null, "null {null}, defended {defended}");
    }

    #[test]
    fn absorption_edge_cases() {
        let (_, m, spec) = trap();
        let t = Temperature::Zero;
        let e = absorption_probability(&m, &spec, &[0, 1, 1], 3, Adversary::Random, t, 50, 1).unwrap();
        assert_eq!(e.estimate, 1.0);
        let empty = ToxicSpec::new(&Alphabet::toy(4), vec![], Scenario::Phi1).unwrap();
        let e = absorption_probability(&m, &empty, &[3, 3, 3], 5, Adversary::Random, t, 50, 1).unwrap();
        assert_eq!(e.estimate, 0.0);
        assert_eq!(exact_absorption(&m, &empty, &[3, 3, 3], 5, Adversary::Random, t, Budget::default()).unwrap(), 0.0);
    }

    #[test]
    fn absorption_matches_markov_powering() {
        let (m, spec, _) = random_game_instance(11, 0.2).unwrap();
        let t = Temperature::Finite(1.0);
        let start = vec![0, 2, 0, 2];
        let exact = exact_absorption(&m, &spec, &start, 5, Adversary::Random, t, Budget::default()).unwrap();
        let est = absorption_probability(&m, &spec, &start, 5, Adversary::Random, t, 4000, 2).unwrap();
        assert!(est.ci.0 <= exact && exact <= est.ci.1, "{exact} outside {:?}", est.ci);
    }
}
