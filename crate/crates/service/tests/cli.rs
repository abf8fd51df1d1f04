use std::path::{Path, PathBuf};

use botdyn::dynamics::Transcript;
use botdyn::models::AnyModel;
use botdyn::Discriminant;
use botdyn_service::cli::{run, Cli};
use clap::Parser;

fn botdyn(args: &[&str]) -> anyhow::Result<()> {
    run(Cli::try_parse_from(std::iter::once("botdyn").chain(args.iter().copied()))?)
}

fn p(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn modk_certify_and_synthesize() {
    let dir = tempfile::tempdir().unwrap();
    let (m, cert, plan, tr) = (p(dir.path(), "m.model"), p(dir.path(), "cert.txt"), p(dir.path(), "plan.txt"), p(dir.path(), "tr.txt"));
    botdyn(&["train", "--kind", "modk", "--toy", "5", "--context", "6", "--ell", "4", "--weights", "1,2,3,1,1,1", "--out", s(&m)]).unwrap();
    botdyn(&["certify", "--model", s(&m), "--ell", "4", "--out", s(&cert)]).unwrap();
    assert!(read(&cert).contains("verdict\ttrue"));
    botdyn(&["certify", "--model", s(&m), "--ell", "4", "--property", "surjective", "--sample", "50", "--seed", "3", "--out", s(&cert)]).unwrap();
    assert!(read(&cert).contains("# coverage sampled n=50 seed=3"));
    botdyn(&[
        "synthesize", "--model", s(&m), "--start", "a b c a b c", "--target", "c EOS a b", "--transcript", s(&tr), "--out", s(&plan),
    ])
    .unwrap();
    let model = AnyModel::load(&m).unwrap();
    let a = model.alphabet();
    let replayed = Transcript::load(&tr, a).unwrap().replay(&model).unwrap();
    assert_eq!(a.render(&replayed.last().unwrap().window()[2..]), "c EOS a b");
    assert!(botdyn(&["synthesize", "--model", s(&m), "--start", "a b", "--target", "a b"]).is_err());
    assert!(botdyn(&["train", "--kind", "modk", "--toy", "4", "--context", "6", "--weights", "2,2,2,2,2,2"]).is_err());
}

#[test]
fn corpus_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(p(d, "alpha.txt"), "a\nb\nEOS\nPAD\neven\nodd\n#eos EOS\n#pad PAD\n").unwrap();
    std::fs::write(p(d, "base.txt"), "a b EOS\nb a a EOS\na a EOS\nb b a EOS\n").unwrap();
    std::fs::write(p(d, "lab.txt"), "a b EOS | odd:3 even:1\na a EOS | even:4\nb b EOS | even:2 odd:2\nb a a EOS | even:3\n").unwrap();
    let (alpha, base, lab) = (p(d, "alpha.txt"), p(d, "base.txt"), p(d, "lab.txt"));
    let (ng, head, sigma, reach) = (p(d, "ng.model"), p(d, "head.model"), p(d, "sigma.txt"), p(d, "reach.json"));

    botdyn(&["train", "--kind", "ngram", "--alphabet", s(&alpha), "--corpus", s(&base), "--context", "4", "--out", s(&ng)]).unwrap();
    botdyn(&["sigma", "--model", s(&ng), "--corpus", s(&base), "--max-len", "4", "--out", s(&sigma)]).unwrap();
    assert!(read(&sigma).lines().any(|l| l == "a b EOS"));

    botdyn(&["reach", "--model", s(&ng), "--origin", "token:a", "--horizon", "4", "--theta", "0.001", "--format", "json", "--out", s(&reach)]).unwrap();
    let v: serde_json::Value = serde_json::from_str(&read(&reach)).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert!(!v["reached"].as_array().unwrap().is_empty());
    botdyn(&["reach", "--model", s(&ng), "--origin", "prior:content", "--horizon", "4", "--mc", "200", "--seed", "2", "--out", s(&reach)]).unwrap();
    assert!(read(&reach).starts_with("# method monte_carlo n=200\n# seed 2\n"));
    assert!(botdyn(&["reach", "--model", s(&ng), "--origin", "word:a", "--horizon", "2"]).is_err());

    let (r1, r2) = (p(d, "r1.txt"), p(d, "r2.txt"));
    for out in [&r1, &r2] {
        botdyn(&["rollout", "--model", s(&ng), "--prompt", "a", "--seed", "9", "--out", s(out)]).unwrap();
    }
    assert_eq!(read(&r1), read(&r2));

    botdyn(&["train", "--kind", "head", "--model", s(&ng), "--labeled", s(&lab), "--labels", "even,odd", "--out", s(&head)]).unwrap();
    assert!(matches!(AnyModel::load(&head).unwrap(), AnyModel::Head(_)));

    let ent = p(d, "ent.txt");
    botdyn(&["entropy", "--alphabet", s(&alpha), "--labeled", s(&lab), "--out", s(&ent)]).unwrap();
    let text = read(&ent);
    // votes 3:1, 4, 2:2, 3 → entropies 0.811278, 0, 1, 0
    assert!(text.contains("a b EOS\t0.811278"));
    assert!(text.contains("b b EOS\t1.000000"));
    assert!(text.contains("# mean 0.452820"));
}

#[test]
fn game_and_acceptance_line() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (m, spec, out) = (p(d, "r.model"), p(d, "g.txt"), p(d, "v.txt"));
    botdyn(&["train", "--kind", "random", "--toy", "3", "--context", "4", "--seed", "5", "--out", s(&m)]).unwrap();
    std::fs::write(&spec, "scenario phi1\ntoxic a EOS\n").unwrap();
    botdyn(&["game", "--model", s(&m), "--spec", s(&spec), "--horizon", "5", "--compare-epsilon", "0.2", "--out", s(&out)]).unwrap();
    let text = read(&out);
    assert!(text.contains("# ordering violations 0 of 81"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 82);

    let acc = p(d, "acc.txt");
    botdyn(&["accept", "--criterion", "7", "--out", s(&acc)]).unwrap();
    assert!(read(&acc).starts_with("criterion 7 [PASS]"));
}
