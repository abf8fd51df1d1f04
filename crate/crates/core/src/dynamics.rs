//! The bot as a stochastic dynamical system on token windows.
//!
//! A [`Context`] is the state: the last `C` tokens, oldest first, left-padded with the
//! pad token while the conversation is shorter than `C`. One autoregressive step
//! appends a token sampled from `softmax(logits / T)`; one compressed conversational
//! step appends a bot token and then a user token.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::models::Discriminant;
use crate::stats::total_variation;
use crate::token::{Alphabet, Sentence, TokenId};

/// Sampling temperature, including both limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Temperature {
    /// Greedy decoding: one-hot at the argmax, lowest id on ties.
    Zero,
    Finite(f64),
    /// Uniform over the whole alphabet.
    Inf,
}

impl Temperature {
    pub fn finite(t: f64) -> Result<Self> {
        if t.is_finite() && t > 0.0 {
            Ok(Temperature::Finite(t))
        } else {
            Err(Error::InvalidTemperature(t))
        }
    }
}

impl Default for Temperature {
    fn default() -> Self {
        Temperature::Finite(1.0)
    }
}

impl fmt::Display for Temperature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Temperature::Zero => f.write_str("zero"),
            Temperature::Inf => f.write_str("inf"),
            Temperature::Finite(t) => write!(f, "{t}"),
        }
    }
}

impl FromStr for Temperature {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "zero" | "0" => Ok(Temperature::Zero),
            "inf" | "infinity" => Ok(Temperature::Inf),
            other => {
                let t: f64 = other.parse().map_err(|_| Error::InvalidArgument(format!("bad temperature {s:?}")))?;
                Temperature::finite(t)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub temperature: Temperature,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn new(temperature: Temperature, seed: u64) -> Self {
        SamplerConfig { temperature, seed }
    }
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// Independent generator for the `stream`-th job under a base seed. Used wherever
/// work is sharded so results do not depend on thread scheduling.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Lowest index of the maximum entry.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn validate_logits(logits: &[f64]) -> Result<()> {
    if logits.is_empty() {
        return Err(Error::InvalidLogits("empty logit vector".into()));
    }
    if let Some(i) = logits.iter().position(|x| x.is_nan() || *x == f64::INFINITY) {
        return Err(Error::InvalidLogits(format!("logit {i} is {}", logits[i])));
    }
    if logits.iter().all(|&x| x == f64::NEG_INFINITY) {
        return Err(Error::InvalidLogits("every logit is -inf".into()));
    }
    Ok(())
}

/// `softmax(logits / T)`. A `-inf` logit is a hard zero; NaN and `+inf` are rejected.
pub fn softmax(logits: &[f64], t: Temperature) -> Result<Vec<f64>> {
    validate_logits(logits)?;
    let k = logits.len();
    match t {
        Temperature::Zero => {
            let mut p = vec![0.0; k];
            p[argmax(logits)] = 1.0;
            Ok(p)
        }
        Temperature::Inf => Ok(vec![1.0 / k as f64; k]),
        Temperature::Finite(t) => {
            let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut p: Vec<f64> = logits.iter().map(|&l| ((l - m) / t).exp()).collect();
            let s: f64 = p.iter().sum();
            p.iter_mut().for_each(|x| *x /= s);
            Ok(p)
        }
    }
}

/// Inverse-CDF draw. Always consumes exactly one `f64` from `rng`, even for one-hot
/// distributions, so transcripts replay regardless of temperature.
pub fn sample_index<R: Rng + ?Sized>(dist: &[f64], rng: &mut R) -> TokenId {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Left-pads (or truncates from the left) `tokens` to exactly `c` entries.
pub fn padded_window(tokens: &[TokenId], c: usize, pad: TokenId) -> Vec<TokenId> {
    if tokens.len() >= c {
        tokens[tokens.len() - c..].to_vec()
    } else {
        let mut w = vec![pad; c - tokens.len()];
        w.extend_from_slice(tokens);
        w
    }
}

/// The window the bot sees under an intervention `v`: the `v` tokens followed by the
/// most recent `C - |v|` tokens of `window`.
pub fn intervention_view(window: &[TokenId], v: &[TokenId]) -> Vec<TokenId> {
    let c = window.len();
    if v.len() >= c {
        return v[v.len() - c..].to_vec();
    }
    let mut out = v.to_vec();
    out.extend_from_slice(&window[v.len()..]);
    out
}

/// The neural state: a window of exactly `C` tokens plus a step counter.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Context {
    window: Vec<TokenId>,
    clock: u64,
}

impl Context {
    pub fn new(window: Vec<TokenId>, alphabet: &Alphabet, c: usize) -> Result<Self> {
        if window.len() != c {
            return Err(Error::ContextLength { got: window.len(), expected: c });
        }
        for &t in &window {
            alphabet.check(t)?;
        }
        Ok(Context { window, clock: 0 })
    }

    /// Left-padded prompt; prompts longer than `c` are rejected.
    pub fn from_prompt(prompt: &[TokenId], alphabet: &Alphabet, c: usize) -> Result<Self> {
        if prompt.len() > c {
            return Err(Error::ContextLength { got: prompt.len(), expected: c });
        }
        Context::new(padded_window(prompt, c, alphabet.pad()), alphabet, c)
    }

    pub fn empty(alphabet: &Alphabet, c: usize) -> Self {
        Context { window: vec![alphabet.pad(); c], clock: 0 }
    }

    pub fn window(&self) -> &[TokenId] {
        &self.window
    }
    pub fn into_window(self) -> Vec<TokenId> {
        self.window
    }
    pub fn clock(&self) -> u64 {
        self.clock
    }
    pub fn len(&self) -> usize {
        self.window.len()
    }
    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    /// Last `n` tokens.
    pub fn tail(&self, n: usize) -> &[TokenId] {
        &self.window[self.window.len() - n..]
    }

    /// Shift left by one and append.
    pub fn push(&mut self, token: TokenId) {
        self.window.rotate_left(1);
        *self.window.last_mut().expect("non-empty window") = token;
        self.clock += 1;
    }

    /// Compressed update: drop two, append the bot token then the user token.
    pub fn push_pair(&mut self, bot: TokenId, user: TokenId) {
        let c = self.window.len();
        if c >= 2 {
            self.window.rotate_left(2);
            self.window[c - 2] = bot;
            self.window[c - 1] = user;
        } else {
            self.window[0] = user;
        }
        self.clock += 1;
    }
}

fn check_window<M: Discriminant + ?Sized>(model: &M, window: &[TokenId]) -> Result<()> {
    if window.len() != model.context_len() {
        return Err(Error::ContextLength { got: window.len(), expected: model.context_len() });
    }
    let k = model.alphabet().k();
    if let Some(&t) = window.iter().find(|&&t| t >= k) {
        return Err(Error::TokenOutOfRange { token: t, k });
    }
    Ok(())
}

pub fn next_token_distribution<M: Discriminant + ?Sized>(model: &M, window: &[TokenId], t: Temperature) -> Result<Vec<f64>> {
    check_window(model, window)?;
    let logits = model.logits(window);
    if logits.len() != model.alphabet().k() {
        return Err(Error::InvalidLogits(format!("{} logits for K = {}", logits.len(), model.alphabet().k())));
    }
    softmax(&logits, t)
}

/// One autoregressive step.
pub fn step<M: Discriminant + ?Sized, R: Rng + ?Sized>(
    model: &M,
    ctx: &Context,
    t: Temperature,
    rng: &mut R,
) -> Result<(Context, TokenId)> {
    let dist = next_token_distribution(model, ctx.window(), t)?;
    let tok = sample_index(&dist, rng);
    let mut next = ctx.clone();
    next.push(tok);
    Ok((next, tok))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// Final window; when halted its tail is the generated sentence.
    pub window: Context,
    pub generated: Vec<TokenId>,
    pub halted: bool,
}

impl Rollout {
    pub fn steps(&self) -> usize {
        self.generated.len()
    }
}

/// Autoregress from `init` until EOS is sampled or `max_steps` tokens were generated.
pub fn rollout<M: Discriminant + ?Sized, R: Rng + ?Sized>(
    model: &M,
    init: &[TokenId],
    t: Temperature,
    max_steps: usize,
    rng: &mut R,
) -> Result<Rollout> {
    if init.is_empty() {
        return Err(Error::InvalidArgument("rollout needs a non-empty initial sentence".into()));
    }
    let alphabet = model.alphabet();
    let c = model.context_len();
    let mut ctx = Context::new(padded_window(init, c, alphabet.pad()), alphabet, c)?;
    let eos = alphabet.eos();
    let mut generated = Vec::new();
    for _ in 0..max_steps {
        let (next, tok) = step(model, &ctx, t, rng)?;
        ctx = next;
        generated.push(tok);
        if tok == eos {
            return Ok(Rollout { window: ctx, generated, halted: true });
        }
    }
    Ok(Rollout { window: ctx, generated, halted: false })
}

/// Distribution of the first token of a sentence.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Prior {
    /// Uniform over tokens that are neither EOS nor pad.
    #[default]
    Content,
    /// Uniform over the whole alphabet.
    Uniform,
    /// Explicit distribution, e.g. a corpus-empirical one.
    Given(Vec<f64>),
}

impl Prior {
    pub fn distribution(&self, alphabet: &Alphabet) -> Result<Vec<f64>> {
        let k = alphabet.k();
        match self {
            Prior::Uniform => Ok(vec![1.0 / k as f64; k]),
            Prior::Content => {
                let content = alphabet.content_tokens();
                if content.is_empty() {
                    return Err(Error::InvalidArgument("alphabet has no content tokens".into()));
                }
                let mut p = vec![0.0; k];
                for t in &content {
                    p[*t] = 1.0 / content.len() as f64;
                }
                Ok(p)
            }
            Prior::Given(p) => {
                if p.len() != k {
                    return Err(Error::InvalidArgument(format!("prior has {} entries for K = {k}", p.len())));
                }
                let s: f64 = p.iter().sum();
                if p.iter().any(|x| !x.is_finite() || *x < 0.0) || (s - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidArgument("prior is not a probability vector".into()));
                }
                Ok(p.clone())
            }
        }
    }
}

/// `P(x1) · Π P(x_{t+1} | x_{1:t})`, each conditional read through the last-`C` window.
pub fn sentence_probability<M: Discriminant + ?Sized>(model: &M, s: &Sentence, t: Temperature, prior: &Prior) -> Result<f64> {
    s.require_complete()?;
    if s.len() < 2 {
        return Err(Error::InvalidArgument("sentence probability needs at least two tokens".into()));
    }
    let alphabet = model.alphabet();
    let c = model.context_len();
    let toks = s.tokens();
    let mut p = prior.distribution(alphabet)?[toks[0]];
    for i in 1..toks.len() {
        if p == 0.0 {
            return Ok(0.0);
        }
        let w = padded_window(&toks[..i], c, alphabet.pad());
        p *= next_token_distribution(model, &w, t)?[toks[i]];
    }
    Ok(p)
}

/// One compressed step: the bot samples from the current window, then the user's
/// token is appended.
pub fn conversation_step<M: Discriminant + ?Sized, R: Rng + ?Sized>(
    model: &M,
    ctx: &Context,
    user: TokenId,
    t: Temperature,
    rng: &mut R,
) -> Result<(Context, TokenId)> {
    model.alphabet().check(user)?;
    let dist = next_token_distribution(model, ctx.window(), t)?;
    let bot = sample_index(&dist, rng);
    let mut next = ctx.clone();
    next.push_pair(bot, user);
    Ok((next, bot))
}

/// Largest total-variation change of the next-token distribution over all
/// substitutions at 1-based position `i`.
pub fn attention_sensitivity<M: Discriminant + ?Sized>(model: &M, window: &[TokenId], i: usize, t: Temperature) -> Result<f64> {
    let c = model.context_len();
    if i == 0 || i > c {
        return Err(Error::InvalidArgument(format!("position {i} outside 1..={c}")));
    }
    let base = next_token_distribution(model, window, t)?;
    let mut w = window.to_vec();
    let mut worst: f64 = 0.0;
    for a in 0..model.alphabet().k() {
        w[i - 1] = a;
        let d = next_token_distribution(model, &w, t)?;
        worst = worst.max(total_variation(&base, &d));
    }
    Ok(worst)
}

pub fn is_attentive(sensitivity: f64, tau: f64) -> bool {
    sensitivity > tau
}

/// How the bot produced its token in a compressed step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BotMode {
    Sampled,
    /// Suppressed: the bot writes pad and consumes no randomness.
    Silent,
    /// Sampled from the intervention view built from these tokens.
    Steered(Vec<TokenId>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Turn {
    pub bot: TokenId,
    pub mode: BotMode,
    pub user: TokenId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Speaker {
    Bot,
    User,
}

/// Record of a compressed-step conversation; replays bit-exactly from `seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub seed: u64,
    pub temperature: Temperature,
    pub model_hash: String,
    pub initial: Context,
    pub turns: Vec<Turn>,
}

impl Transcript {
    /// Odd/even view: bot tokens at even times, user tokens at odd times.
    pub fn interleaved(&self) -> Vec<(usize, Speaker, TokenId)> {
        let mut out = Vec::with_capacity(2 * self.turns.len());
        for (k, t) in self.turns.iter().enumerate() {
            out.push((2 * k, Speaker::Bot, t.bot));
            out.push((2 * k + 1, Speaker::User, t.user));
        }
        out
    }

    /// Re-runs every turn and returns the contexts after each one (initial first).
    pub fn replay<M: Discriminant + ?Sized>(&self, model: &M) -> Result<Vec<Context>> {
        let hash = model.model_hash();
        if hash != self.model_hash {
            return Err(Error::ModelMismatch(format!("transcript recorded {} but model is {hash}", self.model_hash)));
        }
        let mut conv = Conversation::new(self.initial.clone(), SamplerConfig::new(self.temperature, self.seed), hash);
        let mut out = vec![self.initial.clone()];
        for (k, turn) in self.turns.iter().enumerate() {
            let bot = conv.turn(model, &turn.mode, turn.user)?;
            if bot != turn.bot {
                return Err(Error::ReplayDiverged { turn: k, msg: format!("bot token {bot} but recorded {}", turn.bot) });
            }
            out.push(conv.context().clone());
        }
        Ok(out)
    }

    pub fn to_file_string(&self, alphabet: &Alphabet) -> String {
        let mut out = String::from("# botdyn transcript v1\n");
        out.push_str(&format!("seed {}\n", self.seed));
        out.push_str(&format!("temperature {}\n", self.temperature));
        out.push_str(&format!("model {}\n", self.model_hash));
        out.push_str(&format!("init {}\n", alphabet.render(self.initial.window())));
        for (k, t) in self.turns.iter().enumerate() {
            let sym = alphabet.symbol(t.bot);
            match &t.mode {
                BotMode::Sampled => out.push_str(&format!("{k} bot {sym}\n")),
                BotMode::Silent => out.push_str(&format!("{k} bot {sym} silent\n")),
                BotMode::Steered(v) => {
                    let v: Vec<&str> = v.iter().map(|&x| alphabet.symbol(x)).collect();
                    out.push_str(&format!("{k} bot {sym} steered {}\n", v.join(",")));
                }
            }
            out.push_str(&format!("{k} user {}\n", alphabet.symbol(t.user)));
        }
        out
    }

    pub fn parse_str(text: &str, alphabet: &Alphabet, path: &Path) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, column: 1, msg };
        let mut seed = None;
        let mut temperature = None;
        let mut model_hash = None;
        let mut initial = None;
        let mut turns: Vec<Turn> = Vec::new();
        let mut pending: Option<(usize, TokenId, BotMode)> = None;
        for (i, raw) in text.lines().enumerate() {
            let ln = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            match parts[0] {
                "seed" => seed = Some(parts.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| perr(ln, "bad seed".into()))?),
                "temperature" => temperature = Some(parts.get(1).ok_or_else(|| perr(ln, "missing temperature".into()))?.parse()?),
                "model" => model_hash = Some(parts.get(1).ok_or_else(|| perr(ln, "missing model hash".into()))?.to_string()),
                "init" => {
                    let w = parts[1..].iter().map(|s| alphabet.id(s)).collect::<Result<Vec<_>>>()?;
                    let c = w.len();
                    initial = Some(Context::new(w, alphabet, c)?);
                }
                _ => {
                    let k: usize = parts[0].parse().map_err(|_| perr(ln, format!("unexpected line {line:?}")))?;
                    let who = parts.get(1).copied().unwrap_or("");
                    let tok = alphabet.id(parts.get(2).ok_or_else(|| perr(ln, "missing token".into()))?)?;
                    match who {
                        "bot" => {
                            let mode = match parts.get(3).copied() {
                                None => BotMode::Sampled,
                                Some("silent") => BotMode::Silent,
                                Some("steered") => {
                                    let v = parts.get(4).map_or(Ok(vec![]), |s| s.split(',').map(|x| alphabet.id(x)).collect())?;
                                    BotMode::Steered(v)
                                }
                                Some(m) => return Err(perr(ln, format!("unknown bot mode {m:?}"))),
                            };
                            pending = Some((k, tok, mode));
                        }
                        "user" => {
                            let (pk, bot, mode) = pending.take().ok_or_else(|| perr(ln, "user turn without a bot turn".into()))?;
                            if pk != k || k != turns.len() {
                                return Err(perr(ln, format!("turn index {k} out of order")));
                            }
                            turns.push(Turn { bot, mode, user: tok });
                        }
                        other => return Err(perr(ln, format!("unknown speaker {other:?}"))),
                    }
                }
            }
        }
        if pending.is_some() {
            return Err(perr(0, "dangling bot turn".into()));
        }
        Ok(Transcript {
            seed: seed.ok_or_else(|| perr(0, "missing seed".into()))?,
            temperature: temperature.ok_or_else(|| perr(0, "missing temperature".into()))?,
            model_hash: model_hash.ok_or_else(|| perr(0, "missing model hash".into()))?,
            initial: initial.ok_or_else(|| perr(0, "missing init".into()))?,
            turns,
        })
    }

    pub fn load(path: &Path, alphabet: &Alphabet) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text, alphabet, path)
    }

    pub fn save(&self, path: &Path, alphabet: &Alphabet) -> Result<()> {
        std::fs::write(path, self.to_file_string(alphabet)).map_err(|e| Error::io(path, e))
    }
}

/// A live compressed-step conversation that owns its generator and transcript.
#[derive(Debug, Clone)]
pub struct Conversation {
    ctx: Context,
    rng: ChaCha8Rng,
    transcript: Transcript,
}

impl Conversation {
    pub fn new(initial: Context, cfg: SamplerConfig, model_hash: String) -> Self {
        Conversation {
            ctx: initial.clone(),
            rng: cfg.rng(),
            transcript: Transcript {
                seed: cfg.seed,
                temperature: cfg.temperature,
                model_hash,
                initial,
                turns: Vec::new(),
            },
        }
    }

    pub fn context(&self) -> &Context {
        &self.ctx
    }
    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }
    pub fn temperature(&self) -> Temperature {
        self.transcript.temperature
    }

    /// Plays one compressed step and returns the bot token.
    pub fn turn<M: Discriminant + ?Sized>(&mut self, model: &M, mode: &BotMode, user: TokenId) -> Result<TokenId> {
        model.alphabet().check(user)?;
        let t = self.transcript.temperature;
        let bot = match mode {
            BotMode::Silent => model.alphabet().pad(),
            BotMode::Sampled => sample_index(&next_token_distribution(model, self.ctx.window(), t)?, &mut self.rng),
            BotMode::Steered(v) => {
                let view = intervention_view(self.ctx.window(), v);
                sample_index(&next_token_distribution(model, &view, t)?, &mut self.rng)
            }
        };
        self.ctx.push_pair(bot, user);
        self.transcript.turns.push(Turn { bot, mode: mode.clone(), user });
        Ok(bot)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::TabularModel;
    use approx::assert_abs_diff_eq;

    fn uniform(k: usize, c: usize) -> TabularModel {
        TabularModel::constant_logits(Alphabet::toy(k), c, vec![0.0; k])
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&[0.0; 4], Temperature::Finite(1.0)).unwrap();
        assert!(p.iter().all(|&x| (x - 0.25).abs() < 1e-15));
        assert_eq!(softmax(&[1.0, 0.0, 0.0, 0.0], Temperature::Zero).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
        // e^2, e^1, 1, 1 over their sum, evaluated independently
        let p = softmax(&[2.0, 1.0, 0.0, 0.0], Temperature::Finite(1.0)).unwrap();
        for (x, want) in p.iter().zip([0.610_295_69, 0.224_515_24, 0.082_594_54, 0.082_594_54]) {
            assert_abs_diff_eq!(*x, want, epsilon = 1e-8);
        }
        assert_eq!(softmax(&[0.0, 3.0, 3.0], Temperature::Zero).unwrap(), vec![0.0, 1.0, 0.0]);
        assert_eq!(softmax(&[5.0, -1.0], Temperature::Inf).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn softmax_rejects_bad_logits() {
        for bad in [vec![f64::NAN, 0.0], vec![f64::INFINITY, 0.0], vec![f64::NEG_INFINITY; 3]] {
            let e = softmax(&bad, Temperature::Finite(1.0)).unwrap_err();
            assert!(e.to_string().starts_with("invalid discriminant output"));
        }
        let p = softmax(&[f64::NEG_INFINITY, 0.0], Temperature::Finite(2.0)).unwrap();
        assert_eq!(p, vec![0.0, 1.0]);
        assert!(Temperature::finite(0.0).is_err());
        assert!(Temperature::finite(-1.0).is_err());
    }

    #[test]
    fn temperature_round_trips_through_text() {
        for t in [Temperature::Zero, Temperature::Inf, Temperature::Finite(0.37), Temperature::Finite(1.0)] {
            assert_eq!(t.to_string().parse::<Temperature>().unwrap(), t);
        }
    }

    #[test]
    fn step_shifts_window() {
        let a = Alphabet::toy(4); // a b EOS PAD
        let pad = a.pad();
        let m = TabularModel::deterministic(a.clone(), 3, |_| 1).unwrap();
        let ctx = Context::from_prompt(&[0], &a, 3).unwrap();
        assert_eq!(ctx.window(), &[pad, pad, 0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..5 {
            let (next, tok) = step(&m, &ctx, Temperature::Zero, &mut rng).unwrap();
            assert_eq!(tok, 1);
            assert_eq!(next.window(), &[pad, 0, 1]);
        }
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let m = uniform(5, 3);
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            rollout(&m, &[0], Temperature::Finite(1.0), 50, &mut rng).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rollout_halting_cases() {
        let a = Alphabet::toy(4);
        let eos = a.eos();
        let always_eos = TabularModel::deterministic(a.clone(), 3, move |_| eos).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = rollout(&always_eos, &[0], Temperature::Finite(1.0), 10, &mut rng).unwrap();
        assert!(r.halted);
        assert_eq!(r.window.window(), &[a.pad(), 0, eos]);

        let never = TabularModel::deterministic(a.clone(), 3, |_| 1).unwrap();
        let r = rollout(&never, &[0], Temperature::Finite(1.0), 10, &mut rng).unwrap();
        assert!(!r.halted);
        assert_eq!(r.steps(), 10);
        assert!(rollout(&never, &[], Temperature::Zero, 3, &mut rng).is_err());
    }

    #[test]
    fn uniform_halting_probability_matches_geometric_law() {
        let m = uniform(4, 4);
        let n = 100_000u64;
        let halted = crate::par::map_range(n as usize, |i| {
            let mut rng = rng_stream(7, i as u64);
            rollout(&m, &[0], Temperature::Finite(1.0), 10, &mut rng).unwrap().halted as u64
        })
        .into_iter()
        .sum::<u64>();
        let exact = 1.0 - 0.75f64.powi(10);
        let (lo, hi) = crate::stats::wilson(halted, n, crate::stats::Z99);
        assert!(lo <= exact && exact <= hi, "{exact} not in [{lo}, {hi}]");
    }

    #[test]
    fn sentence_probability_examples() {
        let a = Alphabet::toy(4);
        let m = uniform(4, 4);
        let s = Sentence::parse("a EOS", &a).unwrap();
        let p = sentence_probability(&m, &s, Temperature::Finite(1.0), &Prior::Uniform).unwrap();
        assert_abs_diff_eq!(p, 0.0625, epsilon = 1e-15);

        let det = TabularModel::deterministic(a.clone(), 4, |_| 1).unwrap();
        let s = Sentence::parse("a a EOS", &a).unwrap();
        assert_eq!(sentence_probability(&det, &s, Temperature::Finite(1.0), &Prior::Content).unwrap(), 0.0);

        let inc = Sentence::parse("a b", &a).unwrap();
        assert!(sentence_probability(&m, &inc, Temperature::Finite(1.0), &Prior::Content).is_err());
    }

    #[test]
    fn conversation_step_examples() {
        // C = 4, window (a,b,c,d); greedy bot emits e; user types f
        let a = Alphabet::toy(8); // a..f EOS PAD
        let m = TabularModel::deterministic(a.clone(), 4, |_| 4).unwrap();
        let ctx = Context::new(vec![0, 1, 2, 3], &a, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (next, bot) = conversation_step(&m, &ctx, 5, Temperature::Zero, &mut rng).unwrap();
        assert_eq!(bot, 4);
        assert_eq!(next.window(), &[2, 3, 4, 5]);
        let (next, _) = conversation_step(&m, &next, a.pad(), Temperature::Zero, &mut rng).unwrap();
        assert_eq!(next.window(), &[4, 5, 4, a.pad()]);
        assert!(conversation_step(&m, &next, 99, Temperature::Zero, &mut rng).is_err());
    }

    #[test]
    fn transcript_replays_and_round_trips() {
        let a = Alphabet::toy(5);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = TabularModel::random(a.clone(), 3, 2.0, &mut rng);
        let hash = m.model_hash();
        let mut conv = Conversation::new(Context::empty(&a, 3), SamplerConfig::new(Temperature::Finite(0.8), 99), hash);
        let modes = [BotMode::Sampled, BotMode::Silent, BotMode::Steered(vec![1]), BotMode::Sampled];
        for (i, mode) in modes.iter().cycle().take(12).enumerate() {
            conv.turn(&m, mode, i % 5).unwrap();
        }
        let tr = conv.transcript().clone();
        let contexts = tr.replay(&m).unwrap();
        assert_eq!(contexts.last().unwrap().window(), conv.context().window());

        let text = tr.to_file_string(&a);
        let back = Transcript::parse_str(&text, &a, Path::new("t")).unwrap();
        assert_eq!(back, tr);

        let mut forged = tr.clone();
        forged.turns[0].bot = (forged.turns[0].bot + 1) % 5;
        assert!(matches!(forged.replay(&m), Err(Error::ReplayDiverged { turn: 0, .. })));
    }

    #[test]
    fn attention_examples() {
        let a = Alphabet::toy(4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let base = TabularModel::random(a.clone(), 3, 2.0, &mut rng);
        // ignores position 1 by reading logits with that slot overwritten
        let ignoring = TabularModel::from_fn(a.clone(), 3, |w| base.logits(&[0, w[1], w[2]])).unwrap();
        let w = [1, 2, 0];
        assert_eq!(attention_sensitivity(&ignoring, &w, 1, Temperature::Finite(1.0)).unwrap(), 0.0);
        assert!(attention_sensitivity(&ignoring, &w, 0, Temperature::Finite(1.0)).is_err());
        assert!(!is_attentive(0.3, 0.5));
        assert!(is_attentive(0.6, 0.5));
    }

    #[test]
    fn intervention_view_keeps_recent_tokens() {
        assert_eq!(intervention_view(&[1, 2, 3, 4], &[9]), vec![9, 2, 3, 4]);
        assert_eq!(intervention_view(&[1, 2, 3, 4], &[]), vec![1, 2, 3, 4]);
        assert_eq!(intervention_view(&[1, 2], &[7, 8, 9]), vec![8, 9]);
    }
}
