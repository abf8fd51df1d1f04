//! Model file format.
//!
//! ```text
//! botdyn-model 1
//! kind ngram
//! symbols a b c EOS PAD
//! eos EOS
//! pad PAD
//! context 4
//! order 2
//! alpha 0.1
//! n PAD,PAD a 3
//! ```
//!
//! Header lines are `key value...`; body rows are `tag context-key token value`
//! with the key written as comma-joined symbols. Rows are sorted so the text (and
//! therefore the hash) is canonical.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use super::{Discriminant, MeaningHead, ModKModel, NGramModel, TabularModel};
use crate::error::{Error, Result};
use crate::token::{Alphabet, TokenId};

const MAGIC: &str = "botdyn-model";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Tabular,
    NGram,
    ModK,
    Head,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Tabular => "tabular",
            ModelKind::NGram => "ngram",
            ModelKind::ModK => "modk",
            ModelKind::Head => "head",
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tabular" => Ok(ModelKind::Tabular),
            "ngram" => Ok(ModelKind::NGram),
            "modk" => Ok(ModelKind::ModK),
            "head" => Ok(ModelKind::Head),
            other => Err(Error::InvalidArgument(format!("unknown model kind {other:?}"))),
        }
    }
}

pub(crate) fn hash_text(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// `{:?}` keeps full precision and spells infinities as `inf` / `-inf`.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub(crate) fn header(kind: ModelKind, alphabet: &Alphabet, c: usize) -> String {
    let mut out = format!("{MAGIC} {VERSION}\nkind {}\nsymbols {}\n", kind.as_str(), alphabet.symbols().join(" "));
    let _ = writeln!(out, "eos {}", alphabet.symbol(alphabet.eos()));
    let _ = writeln!(out, "pad {}", alphabet.symbol(alphabet.pad()));
    let _ = writeln!(out, "context {c}");
    out
}

pub(crate) fn key_str(alphabet: &Alphabet, key: &[TokenId]) -> String {
    key.iter().map(|&t| alphabet.symbol(t)).collect::<Vec<_>>().join(",")
}

#[derive(Debug)]
pub(crate) struct Row {
    pub line: usize,
    pub tag: String,
    pub key: Vec<TokenId>,
    pub token: TokenId,
    pub value: String,
}

#[derive(Debug)]
pub(crate) struct Parsed {
    pub path: PathBuf,
    pub kind: ModelKind,
    pub alphabet: Alphabet,
    pub c: usize,
    pub fields: HashMap<String, (usize, Vec<String>)>,
    pub rows: Vec<Row>,
}

impl Parsed {
    pub fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse { path: self.path.clone(), line, column: 1, msg: msg.into() }
    }

    pub fn field(&self, name: &str) -> Result<&[String]> {
        self.fields
            .get(name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| self.err(0, format!("missing header field {name:?}")))
    }

    pub fn scalar<T: FromStr>(&self, name: &str) -> Result<T> {
        let v = self.field(name)?;
        let line = self.fields[name].0;
        match v {
            [one] => one.parse().map_err(|_| self.err(line, format!("bad value for {name}: {one:?}"))),
            _ => Err(self.err(line, format!("{name} takes exactly one value"))),
        }
    }

    pub fn floats(&self, name: &str) -> Result<Vec<f64>> {
        let line = self.fields.get(name).map_or(0, |f| f.0);
        self.field(name)?
            .iter()
            .map(|v| v.parse::<f64>().map_err(|_| self.err(line, format!("bad decimal {v:?}"))))
            .collect()
    }

    pub fn row_value<T: FromStr>(&self, row: &Row) -> Result<T> {
        row.value.parse().map_err(|_| self.err(row.line, format!("bad row value {:?}", row.value)))
    }
}

const ROW_TAGS: [&str; 3] = ["t", "n", "h"];

pub(crate) fn parse_common(text: &str, path: &Path) -> Result<Parsed> {
    let perr = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, column: 1, msg };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let (_, first) = lines.next().ok_or_else(|| perr(1, "empty model file".into()))?;
    let mut magic = first.split_whitespace();
    if magic.next() != Some(MAGIC) {
        return Err(perr(1, format!("not a model file (expected {MAGIC:?})")));
    }
    match magic.next().and_then(|v| v.parse::<u32>().ok()) {
        Some(VERSION) => {}
        other => return Err(perr(1, format!("unsupported model file version {other:?}"))),
    }
    let mut fields: HashMap<String, (usize, Vec<String>)> = HashMap::new();
    let mut raw_rows = Vec::new();
    for (i, line) in lines {
        let ln = i + 1;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if ROW_TAGS.contains(&parts[0]) {
            if parts.len() != 4 {
                return Err(perr(ln, "rows are `tag key token value`".into()));
            }
            raw_rows.push((ln, parts[0].to_string(), parts[1].to_string(), parts[2].to_string(), parts[3].to_string()));
        } else if fields.insert(parts[0].to_string(), (ln, parts[1..].iter().map(|s| s.to_string()).collect())).is_some() {
            return Err(perr(ln, format!("duplicate header field {:?}", parts[0])));
        }
    }
    let get1 = |name: &str| -> Result<String> {
        match fields.get(name) {
            Some((_, v)) if v.len() == 1 => Ok(v[0].clone()),
            Some((ln, _)) => Err(perr(*ln, format!("{name} takes exactly one value"))),
            None => Err(perr(0, format!("missing header field {name:?}"))),
        }
    };
    let kind: ModelKind = get1("kind")?.parse()?;
    let symbols = fields.get("symbols").map(|f| f.1.clone()).ok_or_else(|| perr(0, "missing symbols".into()))?;
    let alphabet = Alphabet::new(&symbols, &get1("eos")?, &get1("pad")?)?;
    let c: usize = get1("context")?.parse().map_err(|_| perr(0, "bad context length".into()))?;
    if c == 0 {
        return Err(perr(0, "context length must be positive".into()));
    }
    let mut rows = Vec::with_capacity(raw_rows.len());
    for (ln, tag, key, tok, value) in raw_rows {
        let key = key
            .split(',')
            .map(|s| alphabet.id(s).map_err(|_| perr(ln, format!("unknown token {s:?} in key"))))
            .collect::<Result<Vec<_>>>()?;
        let token = alphabet.id(&tok).map_err(|_| perr(ln, format!("unknown token {tok:?}")))?;
        rows.push(Row { line: ln, tag, key, token, value });
    }
    Ok(Parsed { path: path.to_path_buf(), kind, alphabet, c, fields, rows })
}

/// Any model that can live in a model file.
#[derive(Debug, Clone)]
pub enum AnyModel {
    Tabular(TabularModel),
    NGram(NGramModel),
    ModK(ModKModel),
    Head(MeaningHead),
}

impl AnyModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            AnyModel::Tabular(_) => ModelKind::Tabular,
            AnyModel::NGram(_) => ModelKind::NGram,
            AnyModel::ModK(_) => ModelKind::ModK,
            AnyModel::Head(_) => ModelKind::Head,
        }
    }

    fn inner(&self) -> &dyn Discriminant {
        match self {
            AnyModel::Tabular(m) => m,
            AnyModel::NGram(m) => m,
            AnyModel::ModK(m) => m,
            AnyModel::Head(m) => m,
        }
    }

    pub fn to_file_string(&self) -> String {
        match self {
            AnyModel::Tabular(m) => m.to_file_string(),
            AnyModel::NGram(m) => m.to_file_string(),
            AnyModel::ModK(m) => m.to_file_string(),
            AnyModel::Head(m) => m.to_file_string(),
        }
    }

    pub fn parse_str(text: &str, path: &Path) -> Result<Self> {
        let p = parse_common(text, path)?;
        Ok(match p.kind {
            ModelKind::Tabular => AnyModel::Tabular(TabularModel::from_parsed(&p)?),
            ModelKind::NGram => AnyModel::NGram(NGramModel::from_parsed(&p)?),
            ModelKind::ModK => AnyModel::ModK(ModKModel::from_parsed(&p)?),
            ModelKind::Head => AnyModel::Head(MeaningHead::from_parsed(&p)?),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }
}

impl Discriminant for AnyModel {
    fn alphabet(&self) -> &Alphabet {
        self.inner().alphabet()
    }
    fn context_len(&self) -> usize {
        self.inner().context_len()
    }
    fn logits(&self, window: &[TokenId]) -> Vec<f64> {
        self.inner().logits(window)
    }
    fn deterministic_token(&self, window: &[TokenId]) -> TokenId {
        self.inner().deterministic_token(window)
    }
    fn model_hash(&self) -> String {
        hash_text(&self.to_file_string())
    }
}

impl From<TabularModel> for AnyModel {
    fn from(m: TabularModel) -> Self {
        AnyModel::Tabular(m)
    }
}
impl From<NGramModel> for AnyModel {
    fn from(m: NGramModel) -> Self {
        AnyModel::NGram(m)
    }
}
impl From<ModKModel> for AnyModel {
    fn from(m: ModKModel) -> Self {
        AnyModel::ModK(m)
    }
}
impl From<MeaningHead> for AnyModel {
    fn from(m: MeaningHead) -> Self {
        AnyModel::Head(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{make_modk, train_meaning_head, train_ngram};
    use crate::token::{Corpus, Sentence};
    use rand::SeedableRng;

    fn round_trip(m: AnyModel) {
        let text = m.to_file_string();
        let back = AnyModel::parse_str(&text, Path::new("m")).unwrap();
        assert_eq!(back.to_file_string(), text);
        assert_eq!(back.model_hash(), m.model_hash());
        let k = m.alphabet().k();
        let c = m.context_len();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            use rand::Rng;
            let w: Vec<TokenId> = (0..c).map(|_| rng.random_range(0..k)).collect();
            let (x, y) = (m.logits(&w), back.logits(&w));
            assert_eq!(x.len(), y.len());
            for (a, b) in x.iter().zip(&y) {
                assert!(a == b, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn every_kind_round_trips() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let a = Alphabet::toy(4);
        round_trip(TabularModel::random(a.clone(), 3, 2.0, &mut rng).into());
        round_trip(TabularModel::random_deterministic(a.clone(), 3, &[0, 1], &mut rng).into());
        round_trip(make_modk(5, 6, 4, &[1, 2, 3, 1, 1, 1]).unwrap().into());

        let b = Alphabet::toy_with_labels(3, &["even", "odd"]);
        let corpus = Corpus::new(
            "c",
            ["a b EOS", "b c a EOS", "a a EOS"].iter().map(|s| Sentence::parse(s, &b).unwrap()).collect(),
        )
        .unwrap();
        let ng = train_ngram(&corpus, &b, 4, 2, 0.0).unwrap();
        round_trip(ng.clone().into());
        let even = b.id("even").unwrap();
        let odd = b.id("odd").unwrap();
        let labeled: Vec<(Sentence, TokenId)> = corpus
            .sentences()
            .iter()
            .map(|s| (s.clone(), if s.tokens().iter().filter(|&&t| t == 0).count() % 2 == 0 { even } else { odd }))
            .collect();
        round_trip(train_meaning_head(ng, &[even, odd], &labeled).unwrap().into());
    }

    #[test]
    fn bad_files_are_rejected() {
        assert!(AnyModel::parse_str("", Path::new("m")).is_err());
        assert!(AnyModel::parse_str("botdyn-model 2\n", Path::new("m")).is_err());
        let text = make_modk(5, 6, 4, &[1, 1, 1, 1, 1, 1]).unwrap().to_file_string();
        let broken = text.replace("weights 1 1 1 1 1 1", "weights 1 1 1 5 1 1");
        let err = AnyModel::parse_str(&broken, Path::new("m")).unwrap_err();
        assert_eq!(err.code(), "pivot_not_bijective");
    }
}
