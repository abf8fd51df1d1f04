use botdyn::dynamics::rng_stream;
use botdyn::models::{AnyModel, TabularModel};
use botdyn::safeguard::{absorption_probability, Adversary, ToxicSpec};
use botdyn::dynamics::Transcript;
use botdyn::{Alphabet, Discriminant, Temperature};
use botdyn_service::session::{GameConfig, SessionConfig, SessionStore};
use botdyn_service::store::ModelStore;

const GAME: &str = "scenario phi1\ntoxic a b\nintervention b\n";

fn store() -> ModelStore {
    let s = ModelStore::new();
    s.insert("rand", AnyModel::Tabular(TabularModel::random(Alphabet::toy(4), 4, 2.0, &mut rng_stream(7, 0))));
    s.insert("says-a", AnyModel::Tabular(TabularModel::constant(Alphabet::toy(4), 4, 0)));
    s
}

fn cfg(model: &str, seed: u64) -> SessionConfig {
    SessionConfig { model: model.into(), seed: Some(seed), ..Default::default() }
}

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

#[test]
fn unknown_model_and_distinct_ids() {
    let models = store();
    let sessions = SessionStore::new(0);
    assert_eq!(sessions.create(&models, &cfg("nope", 1)).unwrap_err().code, "not_found");
    assert_eq!(sessions.create(&ModelStore::new(), &cfg("rand", 1)).unwrap_err().code, "not_found");
    let a = sessions.create(&models, &cfg("rand", 1)).unwrap();
    let b = sessions.create(&models, &cfg("rand", 1)).unwrap();
    assert_ne!(a, b);
    assert_eq!(sessions.list().len(), 2);
    sessions.remove(a).unwrap();
    assert_eq!(sessions.remove(a).unwrap_err().code, "not_found");
}

#[test]
fn same_seed_same_conversation_and_replay() {
    let models = store();
    let run = || {
        let sessions = SessionStore::new(0);
        let id = sessions.create(&models, &cfg("rand", 42)).unwrap();
        let mut snaps = Vec::new();
        for t in ["a", "b a", "EOS", "a a b"] {
            snaps.push(sessions.with(id, |s| s.user_turn(&toks(t))).unwrap());
        }
        let text = sessions.with(id, |s| Ok(s.transcript().to_file_string(s.model().alphabet()))).unwrap();
        (snaps, text)
    };
    let (a, text) = run();
    assert_eq!(a, run().0);
    let m = models.get("rand").unwrap();
    let tr = Transcript::parse_str(&text, m.alphabet(), std::path::Path::new("t")).unwrap();
    let replayed = tr.replay(m.as_ref()).unwrap();
    assert_eq!(botdyn_service::analysis::render(m.alphabet(), replayed.last().unwrap().window()), a.last().unwrap().snapshot.context);
}

#[test]
fn multi_token_input_keeps_bot_silent_until_last() {
    let models = store();
    let sessions = SessionStore::new(0);
    let id = sessions.create(&models, &cfg("says-a", 1)).unwrap();
    let r = sessions.with(id, |s| s.user_turn(&toks("b b a"))).unwrap();
    assert_eq!(r.reply, "a");
    assert_eq!(r.snapshot.context, toks("PAD b a a"));
    assert_eq!(r.snapshot.turns, 3);
    let tr = sessions.with(id, |s| Ok(s.transcript().clone())).unwrap();
    assert_eq!(tr.turns.iter().map(|t| t.bot).collect::<Vec<_>>(), vec![3, 3, 0]);
}

#[test]
fn interleaved_sessions_are_isolated() {
    let models = store();
    let solo = |seed| {
        let sessions = SessionStore::new(0);
        let id = sessions.create(&models, &cfg("rand", seed)).unwrap();
        for t in ["a", "b", "a b"] {
            sessions.with(id, |s| s.user_turn(&toks(t))).unwrap();
        }
        sessions.with(id, |s| Ok(s.transcript().clone())).unwrap()
    };
    let sessions = SessionStore::new(0);
    let x = sessions.create(&models, &cfg("rand", 1)).unwrap();
    let y = sessions.create(&models, &cfg("rand", 2)).unwrap();
    for t in ["a", "b", "a b"] {
        sessions.with(x, |s| s.user_turn(&toks(t))).unwrap();
        sessions.with(y, |s| s.user_turn(&toks("EOS"))).unwrap();
    }
    assert_eq!(sessions.with(x, |s| Ok(s.transcript().clone())).unwrap(), solo(1));
}

#[test]
fn censored_input_is_denied_without_advancing() {
    let models = store();
    let sessions = SessionStore::new(0);
    let mut c = cfg("says-a", 3);
    c.game = Some(GameConfig { spec: GAME.into(), samples: Some(200), ..Default::default() });
    let id = sessions.create(&models, &c).unwrap();
    let before = sessions.with(id, |s| s.snapshot()).unwrap();
    // the bot always says «a», so a user «b» completes «a b»
    let e = sessions.with(id, |s| s.user_turn(&toks("b"))).unwrap_err();
    assert_eq!((e.status, e.code.as_str()), (403, "censored"));
    // and so does the last token of a multi-token input
    assert!(sessions.with(id, |s| s.user_turn(&toks("a a b"))).is_err());
    assert_eq!(sessions.with(id, |s| s.snapshot()).unwrap(), before);
    let ok = sessions.with(id, |s| s.user_turn(&toks("a"))).unwrap();
    assert_eq!(ok.snapshot.turns, 1);
    assert!(ok.snapshot.toxic_score.is_some());
    assert!(sessions.with(id, |s| s.user_turn(&toks("zz"))).unwrap_err().code == "validation");
}

#[test]
fn snapshot_absorption_matches_direct_call() {
    let models = store();
    let sessions = SessionStore::new(0);
    let mut c = cfg("rand", 11);
    c.game = Some(GameConfig { spec: GAME.into(), samples: Some(500), horizon: Some(5), ..Default::default() });
    let id = sessions.create(&models, &c).unwrap();
    let snap = sessions.with(id, |s| s.user_turn(&toks("a"))).unwrap().snapshot;
    let m = models.get("rand").unwrap();
    let spec = ToxicSpec::parse_str(GAME, m.alphabet(), std::path::Path::new("g")).unwrap();
    let window: Vec<usize> = snap.context.iter().map(|s| m.alphabet().id(s).unwrap()).collect();
    let direct = absorption_probability(m.as_ref(), &spec, &window, 5, Adversary::Random, Temperature::Finite(1.0), 500, 11).unwrap();
    let got = snap.absorption.unwrap();
    assert_eq!((got.estimate, got.hits, got.ci), (direct.estimate, direct.hits, direct.ci));
}

#[test]
fn meaning_class_from_labels() {
    let models = store();
    let sessions = SessionStore::new(0);
    let mut c = cfg("says-a", 0);
    c.labels = Some(toks("a b"));
    let id = sessions.create(&models, &c).unwrap();
    assert_eq!(sessions.with(id, |s| s.snapshot()).unwrap().meaning_class, None);
    // window «a b a EOS» ends a sentence; the constant model always scores «a» highest
    let snap = sessions.with(id, |s| s.user_turn(&toks("b EOS"))).unwrap().snapshot;
    assert_eq!(snap.context, toks("PAD b a EOS"));
    assert!(snap.meaning_class.is_some());
}
