//! Thin adapters from JSON requests to the lab's analyses. The HTTP layer and the
//! CLI both go through here, so a request gives the same answer either way.

use botdyn::controllability::{
    bfs_oracle, check_thm1, check_thm2, synthesize_phi_u, Certificate, ControlPlan, Fixings, PlanMethod, SynthOptions, Witness,
};
use botdyn::dynamics::Prior;
use botdyn::models::{all_windows_vec, AnyModel};
use botdyn::reachability::{reach_exact, reach_mc, Origin, ReachReport};
use botdyn::safeguard::{adversary_value_iteration, compare_scenarios, Scenario, ToxicSpec};
use botdyn::{Alphabet, Budget, Discriminant, Temperature, TokenId};
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, ApiResult};

pub fn parse_symbols(alphabet: &Alphabet, symbols: &[String]) -> ApiResult<Vec<TokenId>> {
    Ok(symbols.iter().map(|s| alphabet.id(s)).collect::<botdyn::Result<Vec<_>>>()?)
}

pub fn render(alphabet: &Alphabet, tokens: &[TokenId]) -> Vec<String> {
    tokens.iter().map(|&t| alphabet.symbol(t).to_string()).collect()
}

pub fn parse_temperature(t: Option<&str>) -> ApiResult<Temperature> {
    Ok(t.map(str::parse).transpose()?.unwrap_or_default())
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum OriginSpec {
    Token(String),
    Prompt(Vec<String>),
    /// `content` or `uniform`.
    Prior(String),
}

impl OriginSpec {
    pub fn resolve(&self, alphabet: &Alphabet) -> ApiResult<Origin> {
        Ok(match self {
            OriginSpec::Token(s) => Origin::Token(alphabet.id(s)?),
            OriginSpec::Prompt(p) => Origin::Prompt(parse_symbols(alphabet, p)?),
            OriginSpec::Prior(p) => match p.as_str() {
                "content" => Origin::Prior(Prior::Content),
                "uniform" => Origin::Prior(Prior::Uniform),
                other => return Err(ApiError::bad_request(format!("unknown prior {other:?}"))),
            },
        })
    }
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize, PartialEq, Eq)]
pub struct McSpec {
    pub n: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReachRequest {
    pub model: Option<String>,
    pub session: Option<u64>,
    pub origin: Option<OriginSpec>,
    pub horizon: usize,
    pub theta: f64,
    pub temperature: Option<String>,
    pub monte_carlo: Option<McSpec>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ReachedRow {
    pub sentence: Vec<String>,
    pub prob: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ReachResult {
    pub model_hash: String,
    pub method: &'static str,
    pub horizon: usize,
    pub theta: f64,
    pub temperature: String,
    pub reached: Vec<ReachedRow>,
    pub below_theta_mass: f64,
    pub continuation_mass: f64,
    pub pruned_mass: f64,
}

impl ReachResult {
    pub fn from_report(r: &ReachReport, alphabet: &Alphabet) -> Self {
        ReachResult {
            model_hash: r.model_hash.clone(),
            method: match r.method {
                botdyn::reachability::Method::Exact => "exact",
                botdyn::reachability::Method::MonteCarlo { .. } => "monte_carlo",
            },
            horizon: r.horizon,
            theta: r.theta,
            temperature: r.temperature.to_string(),
            reached: r
                .reached
                .iter()
                .map(|s| ReachedRow { sentence: render(alphabet, &s.tokens), prob: s.prob, count: s.count, ci: s.ci })
                .collect(),
            below_theta_mass: r.below_theta_mass,
            continuation_mass: r.continuation_mass,
            pruned_mass: r.pruned_mass,
        }
    }
}

pub fn reach(model: &AnyModel, origin: &Origin, horizon: usize, theta: f64, t: Temperature, mc: Option<McSpec>) -> ApiResult<ReachResult> {
    let report = match mc {
        None => reach_exact(model, origin, horizon, theta, t, Budget::default())?,
        Some(McSpec { n, seed }) => reach_mc(model, origin, horizon, theta, t, n, seed)?,
    };
    Ok(ReachResult::from_report(&report, model.alphabet()))
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum FixingsSpec {
    Exhaustive,
    Sample { n: usize, seed: u64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyRequest {
    pub model: String,
    pub ell: usize,
    /// `surjective` or `bijective` (default).
    pub property: Option<String>,
    pub fixings: Option<FixingsSpec>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WitnessRow {
    Missing { fixed: Vec<String>, token: String },
    Collision { window: Vec<String>, a: String, b: String, output: String },
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CertifyResult {
    pub model_hash: String,
    pub property: &'static str,
    pub ell: usize,
    pub verdict: bool,
    pub failures: usize,
    pub fixings_tested: usize,
    pub coverage: String,
    pub witnesses: Vec<WitnessRow>,
}

impl CertifyResult {
    pub fn from_certificate(c: &Certificate, alphabet: &Alphabet) -> Self {
        let sym = |t: TokenId| alphabet.symbol(t).to_string();
        CertifyResult {
            model_hash: c.model_hash.clone(),
            property: match c.property {
                botdyn::controllability::Property::Surjective => "surjective",
                botdyn::controllability::Property::Bijective => "bijective",
            },
            ell: c.ell,
            verdict: c.verdict,
            failures: c.failures,
            fixings_tested: c.fixings_tested,
            coverage: match c.coverage {
                Fixings::Exhaustive => "exhaustive".into(),
                Fixings::Sample { n, seed } => format!("sampled n={n} seed={seed}"),
            },
            witnesses: c
                .witnesses
                .iter()
                .map(|w| match w {
                    Witness::Missing { fixed, token } => WitnessRow::Missing { fixed: render(alphabet, fixed), token: sym(*token) },
                    Witness::Collision { window, a, b, output } => {
                        WitnessRow::Collision { window: render(alphabet, window), a: sym(*a), b: sym(*b), output: sym(*output) }
                    }
                })
                .collect(),
        }
    }
}

pub fn certify(model: &AnyModel, ell: usize, property: Option<&str>, fixings: Option<&FixingsSpec>) -> ApiResult<CertifyResult> {
    let fixings = match fixings {
        None => Fixings::auto(model.alphabet().k(), model.context_len()),
        Some(FixingsSpec::Exhaustive) => Fixings::Exhaustive,
        Some(FixingsSpec::Sample { n, seed }) => Fixings::Sample { n: *n, seed: *seed },
    };
    let cert = match property.unwrap_or("bijective") {
        "surjective" => check_thm1(model, ell, fixings, Budget::default())?,
        "bijective" => check_thm2(model, ell, fixings, Budget::default())?,
        other => return Err(ApiError::bad_request(format!("unknown property {other:?}"))),
    };
    Ok(CertifyResult::from_certificate(&cert, model.alphabet()))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesizeRequest {
    pub model: String,
    pub start: Vec<String>,
    pub target: Vec<String>,
    pub max_settle: Option<usize>,
    /// `phi_u` (default) or `bfs`.
    pub method: Option<String>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct PlanResult {
    pub model_hash: String,
    pub method: &'static str,
    pub start: Vec<String>,
    pub target: Vec<String>,
    pub inputs: Vec<String>,
    pub trajectory: Vec<Vec<String>>,
    pub settle: usize,
    pub length: usize,
}

impl PlanResult {
    pub fn from_plan(p: &ControlPlan, model: &AnyModel) -> Self {
        let a = model.alphabet();
        PlanResult {
            model_hash: model.model_hash(),
            method: match p.method {
                PlanMethod::PhiU => "phi_u",
                PlanMethod::Bfs => "bfs",
            },
            start: render(a, &p.start),
            target: render(a, &p.target),
            inputs: render(a, &p.inputs),
            trajectory: p.trajectory.iter().map(|x| render(a, x)).collect(),
            settle: p.settle,
            length: p.len(),
        }
    }
}

pub fn synthesize(model: &AnyModel, req: &SynthesizeRequest) -> ApiResult<PlanResult> {
    let a = model.alphabet();
    let start = parse_symbols(a, &req.start)?;
    let target = parse_symbols(a, &req.target)?;
    let plan = match req.method.as_deref().unwrap_or("phi_u") {
        "phi_u" => {
            let mut opts = SynthOptions::default();
            if let Some(s) = req.max_settle {
                opts.max_settle = s;
            }
            synthesize_phi_u(model, &start, &target, opts)?
        }
        "bfs" => bfs_oracle(model, &start, &target, None, Budget::default())?.ok_or(botdyn::Error::PlanNotFound(0))?,
        other => return Err(ApiError::bad_request(format!("unknown method {other:?}"))),
    };
    Ok(PlanResult::from_plan(&plan, model))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameRequest {
    pub model: String,
    /// Toxic spec in the game file format.
    pub spec: String,
    pub horizon: usize,
    pub temperature: Option<String>,
    /// Windows to report; every state when omitted.
    pub starts: Option<Vec<Vec<String>>>,
    /// Also solve the `1-ε` scoring regime and compare per start.
    pub compare_epsilon: Option<f64>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct StateValue {
    pub state: Vec<String>,
    /// Expected arrival time; `null` when absorption cannot be forced.
    pub tau: f64,
    pub policy: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_phi2: Option<f64>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct GameResult {
    pub model_hash: String,
    pub horizon: usize,
    pub sweeps: usize,
    pub converged: bool,
    pub values: Vec<StateValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ordering_violations: Option<usize>,
}

pub fn parse_spec(model: &AnyModel, text: &str) -> ApiResult<ToxicSpec> {
    Ok(ToxicSpec::parse_str(text, model.alphabet(), std::path::Path::new("<request>"))?)
}

pub fn game(model: &AnyModel, req: &GameRequest) -> ApiResult<GameResult> {
    let a = model.alphabet();
    let t = parse_temperature(req.temperature.as_deref())?;
    let spec = parse_spec(model, &req.spec)?;
    let g = adversary_value_iteration(model, &spec, req.horizon, t, Budget::default())?;
    let starts: Vec<Vec<TokenId>> = match &req.starts {
        Some(s) => s.iter().map(|w| parse_symbols(a, w)).collect::<ApiResult<_>>()?,
        None => all_windows_vec(a.k(), model.context_len()),
    };
    for s in &starts {
        if s.len() != model.context_len() {
            return Err(botdyn::Error::ContextLength { got: s.len(), expected: model.context_len() }.into());
        }
    }
    let comparison = match req.compare_epsilon {
        Some(eps) => {
            let s1 = spec.clone().with_scenario(Scenario::Phi1);
            let s2 = spec.clone().with_scenario(Scenario::Phi2 { epsilon: eps });
            Some(compare_scenarios(model, &s1, &s2, &starts, req.horizon, t, Budget::default())?)
        }
        None => None,
    };
    let values = starts
        .iter()
        .enumerate()
        .map(|(i, s)| StateValue {
            state: render(a, s),
            tau: g.value(s),
            policy: a.symbol(g.policy_at(s)).to_string(),
            tau_phi2: comparison.as_ref().map(|c| c.per_start[i].2),
        })
        .collect();
    Ok(GameResult {
        model_hash: model.model_hash(),
        horizon: g.horizon,
        sweeps: g.sweeps,
        converged: g.converged,
        values,
        ordering_violations: comparison.map(|c| c.violations.len()),
    })
}
