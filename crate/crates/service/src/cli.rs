//! Command-line front end. Every subcommand takes `--seed`, `--model` and `--out`;
//! output goes to `--out` when given and to stdout otherwise.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context as _, Result};
use botdyn::controllability::{bfs_oracle, check_thm1, check_thm2, synthesize_phi_u, Fixings, SynthOptions};
use botdyn::dynamics::{rollout, Prior};
use botdyn::meaning::{annotation_entropy, parse_labeled};
use botdyn::models::{make_modk, train_meaning_head, train_ngram, AnyModel, TabularModel};
use botdyn::reachability::{reach_exact, reach_mc, Origin};
use botdyn::safeguard::{adversary_value_iteration, compare_scenarios, Scenario, ToxicSpec};
use botdyn::token::build_sigma;
use botdyn::{Alphabet, Budget, Corpus, Discriminant, SamplerConfig, Sentence, Temperature};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analysis;
use crate::http::{envelope, router, AppState};
use crate::store::ModelStore;

#[derive(Debug, Parser)]
#[command(name = "botdyn", version, about = "Token-level dynamical systems lab")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Seed for every random choice the command makes.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Model file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Output file (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Where the alphabet comes from when there is no model to take it from.
#[derive(Debug, Clone, Args)]
pub struct AlphabetArgs {
    /// Alphabet file.
    #[arg(long)]
    pub alphabet: Option<PathBuf>,
    /// Toy alphabet with K tokens (content letters, EOS, PAD).
    #[arg(long)]
    pub toy: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train or construct a model and write its model file.
    Train(TrainArgs),
    /// Closure of a base corpus: the meaningful set.
    Sigma(SigmaArgs),
    /// Sample one continuation of a prompt.
    Rollout(RolloutArgs),
    /// Sentences reachable with probability ≥ θ.
    Reach(ReachArgs),
    /// Surjectivity or pivot-bijectivity certificate.
    Certify(CertifyArgs),
    /// Input sequence steering a window to a target last-ℓ block.
    Synthesize(SynthArgs),
    /// Adversary value iteration on a toxic spec.
    Game(GameArgs),
    /// Entropy of annotator votes.
    Entropy(EntropyArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Run acceptance criteria and print one line each.
    Accept(AcceptArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKindArg {
    Ngram,
    Modk,
    Random,
    Head,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub alphabet: AlphabetArgs,
    #[arg(long, value_enum)]
    pub kind: ModelKindArg,
    /// Training corpus (ngram).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Labeled examples `tokens | label:count …` (head; majority label is used).
    #[arg(long)]
    pub labeled: Option<PathBuf>,
    /// Label symbols (head), comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub labels: Vec<String>,
    #[arg(long, default_value_t = 4)]
    pub context: usize,
    #[arg(long, default_value_t = 2)]
    pub order: usize,
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    /// ℓ for the mod-K pivot.
    #[arg(long, default_value_t = 4)]
    pub ell: usize,
    /// Mod-K weights, comma-separated, one per position.
    #[arg(long, value_delimiter = ',')]
    pub weights: Vec<u64>,
    /// Logit scale of a random tabular model.
    #[arg(long, default_value_t = 2.0)]
    pub scale: f64,
}

#[derive(Debug, Args)]
pub struct SigmaArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub alphabet: AlphabetArgs,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub max_len: usize,
}

#[derive(Debug, Args)]
pub struct RolloutArgs {
    #[command(flatten)]
    pub common: Common,
    /// Space-separated prompt symbols.
    #[arg(long)]
    pub prompt: String,
    #[arg(long, default_value = "1")]
    pub temperature: String,
    #[arg(long, default_value_t = 16)]
    pub steps: usize,
}

#[derive(Debug, Args)]
pub struct ReachArgs {
    #[command(flatten)]
    pub common: Common,
    /// `token:SYM`, `prompt:SYM SYM …`, `prior:content` or `prior:uniform`.
    #[arg(long, default_value = "prior:content")]
    pub origin: String,
    #[arg(long)]
    pub horizon: usize,
    #[arg(long, default_value_t = 0.0)]
    pub theta: f64,
    #[arg(long, default_value = "1")]
    pub temperature: String,
    /// Monte Carlo with this many rollouts (seeded by `--seed`) instead of enumeration.
    #[arg(long)]
    pub mc: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub ell: usize,
    #[arg(long, default_value = "bijective")]
    pub property: String,
    /// Check this many sampled fixings (seeded by `--seed`) instead of all of them.
    #[arg(long)]
    pub sample: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub start: String,
    #[arg(long)]
    pub target: String,
    #[arg(long, default_value_t = 2)]
    pub max_settle: usize,
    /// Search breadth-first instead of through the pivot construction.
    #[arg(long)]
    pub bfs: bool,
    /// Also write the plan as a replayable transcript.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct GameArgs {
    #[command(flatten)]
    pub common: Common,
    /// Toxic spec file.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, default_value_t = 6)]
    pub horizon: usize,
    #[arg(long, default_value = "1")]
    pub temperature: String,
    /// Also solve the 1-ε scoring regime and report ordering violations.
    #[arg(long)]
    pub compare_epsilon: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct EntropyArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub alphabet: AlphabetArgs,
    #[arg(long)]
    pub labeled: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Default session seed; also the model loaded with `--model` is served as its file stem.
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    /// Directory of `*.model` files to serve.
    #[arg(long)]
    pub models: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub workers: usize,
    /// Maximum queued plus running jobs.
    #[arg(long, default_value_t = 64)]
    pub queue: usize,
}

#[derive(Debug, Args)]
pub struct AcceptArgs {
    #[command(flatten)]
    pub common: Common,
    /// Criteria to run (all when omitted).
    #[arg(long = "criterion")]
    pub criteria: Vec<u8>,
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_json(out: Option<&Path>, v: impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(&envelope(v))?;
    text.push('\n');
    emit(out, &text)
}

fn load_model(common: &Common) -> Result<AnyModel> {
    let p = common.model.as_ref().ok_or_else(|| anyhow!("--model is required"))?;
    AnyModel::load(p).with_context(|| format!("loading {}", p.display()))
}

fn alphabet(common: &Common, a: &AlphabetArgs) -> Result<Alphabet> {
    if let Some(p) = &a.alphabet {
        return Ok(Alphabet::load(p)?);
    }
    if let Some(k) = a.toy {
        return Ok(Alphabet::toy(k));
    }
    if common.model.is_some() {
        return Ok(load_model(common)?.alphabet().clone());
    }
    bail!("need --alphabet, --toy or --model for the alphabet")
}

fn temperature(s: &str) -> Result<Temperature> {
    Ok(s.parse()?)
}

pub fn parse_origin(s: &str, a: &Alphabet) -> Result<Origin> {
    let (kind, rest) = s.split_once(':').ok_or_else(|| anyhow!("origin {s:?}: expected kind:value"))?;
    Ok(match kind {
        "token" => Origin::Token(a.id(rest.trim())?),
        "prompt" => Origin::Prompt(a.parse_tokens(rest)?),
        "prior" => match rest.trim() {
            "content" => Origin::Prior(Prior::Content),
            "uniform" => Origin::Prior(Prior::Uniform),
            other => bail!("unknown prior {other:?}"),
        },
        other => bail!("unknown origin kind {other:?}"),
    })
}

/// Runs the command line. Library failures print `error[code]: message`; every failure exits 1.
pub fn main() -> std::process::ExitCode {
    match run(Cli::parse()) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            match e.downcast_ref::<botdyn::Error>() {
                Some(b) => eprintln!("error[{}]: {e:#}", b.code()),
                None => eprintln!("error: {e:#}"),
            }
            std::process::ExitCode::FAILURE
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => train(a),
        Command::Sigma(a) => {
            let alpha = alphabet(&a.common, &a.alphabet)?;
            let corpus = Corpus::load(&a.corpus, &alpha)?;
            let ms = build_sigma(&corpus, a.max_len, &alpha)?;
            emit(a.common.out.as_deref(), &ms.as_corpus(&alpha).to_file_string(&alpha))
        }
        Command::Rollout(a) => {
            let m = load_model(&a.common)?;
            let alpha = m.alphabet();
            let prompt = alpha.parse_tokens(&a.prompt)?;
            let t = temperature(&a.temperature)?;
            let mut rng = SamplerConfig::new(t, a.common.seed).rng();
            let r = rollout(&m, &prompt, t, a.steps, &mut rng)?;
            let mut all = prompt.clone();
            all.extend(&r.generated);
            let status = if r.halted { "halted" } else { "open" };
            emit(a.common.out.as_deref(), &format!("{}\t{status}\n", alpha.render(&all)))
        }
        Command::Reach(a) => {
            let m = load_model(&a.common)?;
            let origin = parse_origin(&a.origin, m.alphabet())?;
            let t = temperature(&a.temperature)?;
            let report = match a.mc {
                Some(n) => reach_mc(&m, &origin, a.horizon, a.theta, t, n, a.common.seed)?,
                None => reach_exact(&m, &origin, a.horizon, a.theta, t, Budget::default())?,
            };
            match a.format {
                Format::Text => emit(a.common.out.as_deref(), &report.to_text(m.alphabet())),
                Format::Json => emit_json(a.common.out.as_deref(), analysis::ReachResult::from_report(&report, m.alphabet())),
            }
        }
        Command::Certify(a) => {
            let m = load_model(&a.common)?;
            let fixings = match a.sample {
                Some(n) => Fixings::Sample { n, seed: a.common.seed },
                None => Fixings::auto(m.alphabet().k(), m.context_len()),
            };
            let cert = match a.property.as_str() {
                "surjective" => check_thm1(&m, a.ell, fixings, Budget::default())?,
                "bijective" => check_thm2(&m, a.ell, fixings, Budget::default())?,
                other => bail!("unknown property {other:?} (surjective or bijective)"),
            };
            match a.format {
                Format::Text => emit(a.common.out.as_deref(), &cert.to_text(m.alphabet())),
                Format::Json => emit_json(a.common.out.as_deref(), analysis::CertifyResult::from_certificate(&cert, m.alphabet())),
            }
        }
        Command::Synthesize(a) => {
            let m = load_model(&a.common)?;
            let alpha = m.alphabet();
            let start = alpha.parse_tokens(&a.start)?;
            let target = alpha.parse_tokens(&a.target)?;
            let plan = if a.bfs {
                bfs_oracle(&m, &start, &target, None, Budget::default())?.ok_or(botdyn::Error::PlanNotFound(0))?
            } else {
                synthesize_phi_u(&m, &start, &target, SynthOptions { max_settle: a.max_settle })?
            };
            if let Some(p) = &a.transcript {
                plan.to_transcript(&m)?.save(p, alpha)?;
            }
            match a.format {
                Format::Text => emit(a.common.out.as_deref(), &plan.to_text(alpha, &m.model_hash())),
                Format::Json => emit_json(a.common.out.as_deref(), analysis::PlanResult::from_plan(&plan, &m)),
            }
        }
        Command::Game(a) => {
            let m = load_model(&a.common)?;
            let spec = ToxicSpec::load(&a.spec, m.alphabet())?;
            let t = temperature(&a.temperature)?;
            if a.format == Format::Json {
                let req = analysis::GameRequest {
                    model: String::new(),
                    spec: spec.to_file_string(m.alphabet()),
                    horizon: a.horizon,
                    temperature: Some(a.temperature.clone()),
                    starts: None,
                    compare_epsilon: a.compare_epsilon,
                };
                return emit_json(a.common.out.as_deref(), analysis::game(&m, &req)?);
            }
            let g = adversary_value_iteration(&m, &spec, a.horizon, t, Budget::default())?;
            let mut text = g.to_text(m.alphabet());
            if let Some(eps) = a.compare_epsilon {
                let starts = botdyn::models::all_windows_vec(m.alphabet().k(), m.context_len());
                let s1 = spec.clone().with_scenario(Scenario::Phi1);
                let s2 = spec.with_scenario(Scenario::Phi2 { epsilon: eps });
                let cmp = compare_scenarios(&m, &s1, &s2, &starts, a.horizon, t, Budget::default())?;
                text.push_str(&format!("# ordering violations {} of {}\n", cmp.violations.len(), cmp.per_start.len()));
            }
            emit(a.common.out.as_deref(), &text)
        }
        Command::Entropy(a) => {
            let alpha = alphabet(&a.common, &a.alphabet)?;
            let text = std::fs::read_to_string(&a.labeled).with_context(|| format!("reading {}", a.labeled.display()))?;
            let examples = parse_labeled(&text, &alpha, &a.labeled)?;
            let votes: Vec<Vec<u64>> = examples.iter().map(|e| e.votes.iter().map(|v| v.1).collect()).collect();
            let r = annotation_entropy(&votes)?;
            let mut out = String::new();
            for (e, h) in examples.iter().zip(&r.per_example) {
                out.push_str(&format!("{}\t{h:.6}\n", e.sentence.render(&alpha)));
            }
            out.push_str(&format!("# mean {:.6}\n# sd {:.6}\n", r.mean, r.sd));
            emit(a.common.out.as_deref(), &out)
        }
        Command::Serve(a) => serve(a),
        Command::Accept(a) => accept(a),
    }
}

fn train(a: TrainArgs) -> Result<()> {
    let model = match a.kind {
        ModelKindArg::Ngram => {
            let alpha = alphabet(&a.common, &a.alphabet)?;
            let path = a.corpus.as_ref().ok_or_else(|| anyhow!("--corpus is required for ngram"))?;
            let corpus = Corpus::load(path, &alpha)?;
            AnyModel::NGram(train_ngram(&corpus, &alpha, a.context, a.order, a.alpha)?)
        }
        ModelKindArg::Modk => {
            let k = a.alphabet.toy.ok_or_else(|| anyhow!("--toy K is required for modk"))?;
            let weights = if a.weights.is_empty() { vec![1; a.context] } else { a.weights.clone() };
            AnyModel::ModK(make_modk(k, a.context, a.ell, &weights)?)
        }
        ModelKindArg::Random => {
            let alpha = alphabet(&a.common, &a.alphabet)?;
            let mut rng = botdyn::dynamics::rng_stream(a.common.seed, 0);
            AnyModel::Tabular(TabularModel::random(alpha, a.context, a.scale, &mut rng))
        }
        ModelKindArg::Head => {
            let base = match load_model(&a.common)? {
                AnyModel::NGram(m) => m,
                other => bail!("a meaning head needs an ngram base model, got {}", other.kind().as_str()),
            };
            let alpha = base.alphabet().clone();
            let path = a.labeled.as_ref().ok_or_else(|| anyhow!("--labeled is required for head"))?;
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let labels = a.labels.iter().map(|l| alpha.id(l)).collect::<botdyn::Result<Vec<_>>>()?;
            let labeled = parse_labeled(&text, &alpha, path)?
                .into_iter()
                .map(|e| {
                    let label = e.majority().ok_or_else(|| anyhow!("example without votes"))?;
                    Ok((e.sentence.clone(), alpha.id(label)?))
                })
                .collect::<Result<Vec<(Sentence, _)>>>()?;
            AnyModel::Head(train_meaning_head(base, &labels, &labeled)?)
        }
    };
    emit(a.common.out.as_deref(), &model.to_file_string())
}

fn serve(a: ServeArgs) -> Result<()> {
    let store = ModelStore::new();
    if let Some(dir) = &a.models {
        store.load_dir(dir)?;
    }
    if let Some(p) = &a.common.model {
        store.load_file(p)?;
    }
    let state = AppState::new(store, a.common.seed, a.workers, a.queue)?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&a.addr).await.with_context(|| format!("binding {}", a.addr))?;
        let addr = listener.local_addr()?;
        eprintln!("listening on http://{addr}");
        if let Some(p) = &a.common.out {
            std::fs::write(p, addr.to_string())?;
        }
        axum::serve(listener, router(state)).await?;
        Ok(())
    })
}

fn accept(a: AcceptArgs) -> Result<()> {
    let ids: Vec<u8> = if a.criteria.is_empty() { (1..=9).collect() } else { a.criteria.clone() };
    let mut text = String::new();
    let mut failed = 0;
    for id in ids {
        let o = botdyn::experiments::run(id)?;
        if !o.pass {
            failed += 1;
        }
        println!("{}", o.line());
        text.push_str(&o.line());
        text.push('\n');
    }
    if let Some(p) = &a.common.out {
        std::fs::write(p, &text)?;
    }
    if failed > 0 {
        bail!("{failed} criteria failed");
    }
    Ok(())
}
