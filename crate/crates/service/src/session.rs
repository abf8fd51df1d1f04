//! Live conversations. Each session sits behind its own mutex, so turns on one
//! session are strictly ordered while different sessions proceed independently.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use botdyn::dynamics::{BotMode, Conversation, Transcript};
use botdyn::meaning::MeaningClassifier;
use botdyn::models::AnyModel;
use botdyn::safeguard::{absorption_probability, defender_step, provisional_score, Adversary, DefenderConfig, ToxicSpec, Verdict};
use botdyn::{Context, Discriminant, SamplerConfig, Sentence, TokenId};
use serde::{Deserialize, Serialize};

use crate::analysis::{parse_spec, parse_symbols, parse_temperature, render};
use crate::error::{ApiError, ApiResult};
use crate::store::ModelStore;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    /// Toxic spec in the game file format.
    pub spec: String,
    /// Horizon of the snapshot's absorption estimate (default 6).
    pub horizon: Option<usize>,
    /// Simulations behind the absorption estimate (default 2000).
    pub samples: Option<u64>,
    pub lambda: Option<f64>,
    pub depth: Option<usize>,
    pub completions: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub model: String,
    pub seed: Option<u64>,
    pub temperature: Option<String>,
    pub prompt: Option<Vec<String>>,
    pub game: Option<GameConfig>,
    /// Label tokens for the meaning classifier; a meaning head's own labels by default.
    pub labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Absorption {
    pub estimate: f64,
    pub hits: u64,
    pub n: u64,
    pub ci: (f64, f64),
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Snapshot {
    pub session: u64,
    pub model_hash: String,
    pub turns: usize,
    pub context: Vec<String>,
    /// Meaning class of the window when it ends a sentence and a classifier is set.
    pub meaning_class: Option<String>,
    pub toxic_score: Option<f64>,
    pub absorption: Option<Absorption>,
    /// Intervention applied in the last turn, if any.
    pub intervention: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct TurnReply {
    /// Bot token written alongside the final input token.
    pub reply: String,
    pub snapshot: Snapshot,
}

struct Game {
    spec: ToxicSpec,
    horizon: usize,
    samples: u64,
    defender: DefenderConfig,
}

pub struct Session {
    id: u64,
    seed: u64,
    model: Arc<AnyModel>,
    conversation: Conversation,
    game: Option<Game>,
    labels: Option<Vec<TokenId>>,
    last_intervention: Option<Vec<TokenId>>,
}

impl Session {
    pub fn create(id: u64, store: &ModelStore, cfg: &SessionConfig, default_seed: u64) -> ApiResult<Self> {
        let model = store.get(&cfg.model)?;
        let a = model.alphabet().clone();
        let c = model.context_len();
        let seed = cfg.seed.unwrap_or(default_seed);
        let t = parse_temperature(cfg.temperature.as_deref())?;
        let initial = match &cfg.prompt {
            Some(p) => Context::from_prompt(&parse_symbols(&a, p)?, &a, c)?,
            None => Context::empty(&a, c),
        };
        let game = match &cfg.game {
            Some(g) => {
                let spec = parse_spec(&model, &g.spec)?;
                let d = DefenderConfig::default();
                Some(Game {
                    spec,
                    horizon: g.horizon.unwrap_or(6),
                    samples: g.samples.unwrap_or(2000),
                    defender: DefenderConfig {
                        lambda: g.lambda.unwrap_or(d.lambda),
                        depth: g.depth.unwrap_or(d.depth),
                        completions: g.completions.unwrap_or(d.completions),
                        seed,
                        temperature: t,
                    },
                })
            }
            None => None,
        };
        let labels = match (&cfg.labels, model.as_ref()) {
            (Some(l), _) => Some(parse_symbols(&a, l)?),
            (None, AnyModel::Head(h)) => Some(h.labels().to_vec()),
            (None, _) => None,
        };
        if let Some(l) = &labels {
            MeaningClassifier::labels(model.as_ref(), l.clone())?;
        }
        let conversation = Conversation::new(initial, SamplerConfig::new(t, seed), model.model_hash());
        Ok(Session { id, seed, model, conversation, game, labels, last_intervention: None })
    }

    pub fn id(&self) -> u64 {
        self.id
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn model(&self) -> &Arc<AnyModel> {
        &self.model
    }
    pub fn context(&self) -> &Context {
        self.conversation.context()
    }
    pub fn transcript(&self) -> &Transcript {
        self.conversation.transcript()
    }

    /// Plays `tokens` as consecutive compressed steps, the bot silent until the last
    /// one. With a game active the defender picks the last step's intervention, and
    /// a user token that completes a phrase the input censor denies rejects the whole
    /// turn with the session left untouched.
    pub fn user_turn(&mut self, symbols: &[String]) -> ApiResult<TurnReply> {
        if symbols.is_empty() {
            return Err(ApiError::bad_request("a turn needs at least one token"));
        }
        let model = self.model.clone();
        let a = model.alphabet();
        let tokens = parse_symbols(a, symbols)?;
        // play on a copy and commit only if nothing is denied
        let mut conv = self.conversation.clone();
        let mut intervention = None;
        for (i, &u) in tokens.iter().enumerate() {
            let mode = if i + 1 < tokens.len() {
                BotMode::Silent
            } else {
                match &self.game {
                    Some(g) => {
                        let d = defender_step(model.as_ref(), &g.spec, conv.context().window(), u, &g.defender)?;
                        if d.index == 0 {
                            BotMode::Sampled
                        } else {
                            intervention = Some(d.intervention.clone());
                            BotMode::Steered(d.intervention)
                        }
                    }
                    None => BotMode::Sampled,
                }
            };
            conv.turn(model.as_ref(), &mode, u)?;
            if let Some(g) = &self.game {
                if let Some(reason) = input_denial(&g.spec, conv.context().window()) {
                    return Err(ApiError::censored(format!("input token {} (#{}) denied: {reason}", symbols[i], i + 1)));
                }
            }
        }
        let bot = conv.transcript().turns.last().expect("at least one turn").bot;
        self.conversation = conv;
        self.last_intervention = intervention;
        Ok(TurnReply { reply: a.symbol(bot).to_string(), snapshot: self.snapshot()? })
    }

    pub fn snapshot(&self) -> ApiResult<Snapshot> {
        let model = self.model.as_ref();
        let a = model.alphabet();
        let window = self.context().window();
        let meaning_class = match &self.labels {
            Some(labels) => {
                let content: Vec<TokenId> = window.iter().copied().skip_while(|&t| t == a.pad()).collect();
                if content.last() == Some(&a.eos()) && content.len() >= 2 {
                    let mc = MeaningClassifier::labels(model, labels.clone())?;
                    let s = Sentence::new(content, a)?;
                    Some(mc.class_name(mc.classify(&s)?))
                } else {
                    None
                }
            }
            None => None,
        };
        let (toxic_score, absorption) = match &self.game {
            Some(g) => {
                let phi = provisional_score(model, &g.spec, window, &g.defender)?;
                let est = absorption_probability(
                    model,
                    &g.spec,
                    window,
                    g.horizon,
                    Adversary::Random,
                    self.conversation.temperature(),
                    g.samples,
                    self.seed,
                )?;
                (Some(phi), Some(Absorption { estimate: est.estimate, hits: est.hits, n: est.n, ci: est.ci }))
            }
            None => (None, None),
        };
        Ok(Snapshot {
            session: self.id,
            model_hash: self.transcript().model_hash.clone(),
            turns: self.transcript().turns.len(),
            context: render(a, window),
            meaning_class,
            toxic_score,
            absorption,
            intervention: self.last_intervention.as_ref().map(|v| render(a, v)),
        })
    }
}

/// Reason the input censor rejects the user token that ends `window`: some phrase
/// it completes scores at or above the threshold.
fn input_denial(spec: &ToxicSpec, window: &[TokenId]) -> Option<String> {
    if !spec.censor_input {
        return None;
    }
    spec.phrases().iter().filter(|p| window.ends_with(p)).find_map(|p| match spec.censor(p) {
        Verdict::Deny(reason) => Some(reason),
        Verdict::Allow => None,
    })
}

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct SessionInfo {
    pub id: u64,
    pub model_hash: String,
    pub seed: u64,
    pub turns: usize,
}

/// Session ids count up from 1, so identical request sequences see identical ids.
pub struct SessionStore {
    sessions: RwLock<BTreeMap<u64, Arc<Mutex<Session>>>>,
    next: AtomicU64,
    default_seed: u64,
}

impl SessionStore {
    pub fn new(default_seed: u64) -> Self {
        SessionStore { sessions: RwLock::new(BTreeMap::new()), next: AtomicU64::new(1), default_seed }
    }

    pub fn create(&self, models: &ModelStore, cfg: &SessionConfig) -> ApiResult<u64> {
        let mut s = Session::create(0, models, cfg, self.default_seed)?;
        // ids are handed out only to sessions that were actually created
        let mut all = self.sessions.write().expect("session store poisoned");
        let id = self.next.fetch_add(1, Ordering::SeqCst);
        s.id = id;
        all.insert(id, Arc::new(Mutex::new(s)));
        Ok(id)
    }

    pub fn get(&self, id: u64) -> ApiResult<Arc<Mutex<Session>>> {
        self.sessions
            .read()
            .expect("session store poisoned")
            .get(&id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no session {id}")))
    }

    pub fn remove(&self, id: u64) -> ApiResult<()> {
        self.sessions
            .write()
            .expect("session store poisoned")
            .remove(&id)
            .map(|_| ())
            .ok_or_else(|| ApiError::not_found(format!("no session {id}")))
    }

    pub fn list(&self) -> Vec<SessionInfo> {
        let all: Vec<_> = self.sessions.read().expect("session store poisoned").values().cloned().collect();
        all.iter()
            .map(|s| {
                let s = s.lock().expect("session poisoned");
                SessionInfo { id: s.id, model_hash: s.transcript().model_hash.clone(), seed: s.seed, turns: s.transcript().turns.len() }
            })
            .collect()
    }

    /// Runs `f` with the session locked.
    pub fn with<R>(&self, id: u64, f: impl FnOnce(&mut Session) -> ApiResult<R>) -> ApiResult<R> {
        let s = self.get(id)?;
        let mut guard = s.lock().map_err(|_| ApiError::new(500, "internal", "session poisoned"))?;
        f(&mut guard)
    }
}
