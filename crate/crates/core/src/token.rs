//! Alphabets, sentences, corpora and the meaningful set.
//!
//! Token ids are dense indices into an [`Alphabet`]; symbols are arbitrary
//! whitespace-free strings. Every file format in the crate goes through the
//! alphabet for symbol resolution.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub type TokenId = usize;

/// Finite token dictionary with distinguished end-of-sentence and pad tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct Alphabet {
    symbols: Vec<String>,
    index: HashMap<String, TokenId>,
    eos: TokenId,
    pad: TokenId,
    encodings: Option<Vec<Vec<f64>>>,
}

impl Alphabet {
    pub fn new<S: AsRef<str>>(symbols: &[S], eos: &str, pad: &str) -> Result<Self> {
        let mut index = HashMap::with_capacity(symbols.len());
        let mut owned = Vec::with_capacity(symbols.len());
        for s in symbols {
            let s = s.as_ref();
            if s.is_empty() || s.chars().any(char::is_whitespace) || s.starts_with('#') {
                return Err(Error::InvalidAlphabet(format!("bad symbol {s:?}")));
            }
            if index.insert(s.to_string(), owned.len()).is_some() {
                return Err(Error::InvalidAlphabet(format!("duplicate symbol {s:?}")));
            }
            owned.push(s.to_string());
        }
        let eos_id = *index.get(eos).ok_or_else(|| Error::InvalidAlphabet(format!("eos symbol {eos:?} not in alphabet")))?;
        let pad_id = *index.get(pad).ok_or_else(|| Error::InvalidAlphabet(format!("pad symbol {pad:?} not in alphabet")))?;
        if eos_id == pad_id {
            return Err(Error::InvalidAlphabet("eos and pad must differ".into()));
        }
        Ok(Alphabet { symbols: owned, index, eos: eos_id, pad: pad_id, encodings: None })
    }

    /// `K` tokens: content symbols `a`, `b`, … followed by `EOS` and `PAD`.
    /// Content symbols past `z` are `t26`, `t27`, ….
    pub fn toy(k: usize) -> Self {
        assert!(k >= 2, "toy alphabet needs at least EOS and PAD");
        let mut symbols: Vec<String> = (0..k - 2).map(content_symbol).collect();
        symbols.push("EOS".into());
        symbols.push("PAD".into());
        Alphabet::new(&symbols, "EOS", "PAD").expect("toy alphabet is well formed")
    }

    /// Toy alphabet with extra symbols (e.g. meaning labels) appended after `PAD`.
    pub fn toy_with_labels(content: usize, labels: &[&str]) -> Self {
        let mut symbols: Vec<String> = (0..content).map(content_symbol).collect();
        symbols.push("EOS".into());
        symbols.push("PAD".into());
        symbols.extend(labels.iter().map(|s| s.to_string()));
        Alphabet::new(&symbols, "EOS", "PAD").expect("toy alphabet is well formed")
    }

    pub fn with_encodings(mut self, encodings: Vec<Vec<f64>>) -> Result<Self> {
        if encodings.len() != self.k() {
            return Err(Error::InvalidAlphabet(format!("{} encodings for {} tokens", encodings.len(), self.k())));
        }
        let m = encodings.first().map_or(0, Vec::len);
        if encodings.iter().any(|row| row.len() != m) {
            return Err(Error::InvalidAlphabet("encoding rows differ in length".into()));
        }
        for i in 0..encodings.len() {
            for j in 0..i {
                if encodings[i] == encodings[j] {
                    return Err(Error::InvalidAlphabet(format!(
                        "tokens {:?} and {:?} share an encoding",
                        self.symbols[j], self.symbols[i]
                    )));
                }
            }
        }
        self.encodings = Some(encodings);
        Ok(self)
    }

    pub fn k(&self) -> usize {
        self.symbols.len()
    }
    pub fn eos(&self) -> TokenId {
        self.eos
    }
    pub fn pad(&self) -> TokenId {
        self.pad
    }
    pub fn encoding_dim(&self) -> usize {
        self.encodings.as_ref().and_then(|e| e.first()).map_or(0, Vec::len)
    }
    pub fn encodings(&self) -> Option<&[Vec<f64>]> {
        self.encodings.as_deref()
    }
    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }
    pub fn symbol(&self, id: TokenId) -> &str {
        &self.symbols[id]
    }
    pub fn id(&self, symbol: &str) -> Result<TokenId> {
        self.index.get(symbol).copied().ok_or_else(|| Error::UnknownSymbol(symbol.to_string()))
    }
    pub fn contains(&self, id: TokenId) -> bool {
        id < self.k()
    }
    pub fn check(&self, id: TokenId) -> Result<TokenId> {
        if self.contains(id) {
            Ok(id)
        } else {
            Err(Error::TokenOutOfRange { token: id, k: self.k() })
        }
    }

    /// Tokens that are neither EOS nor pad.
    pub fn content_tokens(&self) -> Vec<TokenId> {
        (0..self.k()).filter(|&t| t != self.eos && t != self.pad).collect()
    }

    /// Parses whitespace-separated symbols.
    pub fn parse_tokens(&self, text: &str) -> Result<Vec<TokenId>> {
        text.split_whitespace().map(|s| self.id(s)).collect()
    }

    /// Space-joined symbols.
    pub fn render(&self, tokens: &[TokenId]) -> String {
        let mut out = String::new();
        for (i, &t) in tokens.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(self.symbols.get(t).map_or("?", String::as_str));
        }
        out
    }

    /// Line-oriented alphabet file: one symbol per line, then `#eos`, `#pad` and an
    /// optional `#dim M` block with one vector per token.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for s in &self.symbols {
            out.push_str(s);
            out.push('\n');
        }
        let _ = writeln!(out, "#eos {}", self.symbols[self.eos]);
        let _ = writeln!(out, "#pad {}", self.symbols[self.pad]);
        if let Some(enc) = &self.encodings {
            let _ = writeln!(out, "#dim {}", self.encoding_dim());
            for row in enc {
                let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
        }
        out
    }

    pub fn parse_file_str(text: &str, path: &Path) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, column: 1, msg };
        let mut symbols = Vec::new();
        let mut eos = None;
        let mut pad = None;
        let mut dim: Option<usize> = None;
        let mut vectors = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let lineno = lineno + 1;
            let line = raw.trim();
            if line.is_empty() || line == "#" || line.starts_with("# ") {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let mut parts = rest.split_whitespace();
                let directive = parts.next().unwrap_or("");
                let arg = parts.next().ok_or_else(|| perr(lineno, format!("directive #{directive} needs an argument")))?;
                match directive {
                    "eos" => eos = Some(arg.to_string()),
                    "pad" => pad = Some(arg.to_string()),
                    "dim" => dim = Some(arg.parse().map_err(|_| perr(lineno, format!("bad dimension {arg:?}")))?),
                    other => return Err(perr(lineno, format!("unknown directive #{other}"))),
                }
                continue;
            }
            if let Some(m) = dim {
                let row: Vec<f64> = line
                    .split_whitespace()
                    .map(|v| v.parse::<f64>().map_err(|_| perr(lineno, format!("bad decimal {v:?}"))))
                    .collect::<Result<_>>()?;
                if row.len() != m {
                    return Err(perr(lineno, format!("expected {m} values, found {}", row.len())));
                }
                vectors.push(row);
            } else {
                if line.split_whitespace().count() != 1 {
                    return Err(perr(lineno, format!("expected a single symbol, found {line:?}")));
                }
                symbols.push(line.to_string());
            }
        }
        let eos = eos.ok_or_else(|| perr(0, "missing #eos directive".into()))?;
        let pad = pad.ok_or_else(|| perr(0, "missing #pad directive".into()))?;
        let alphabet = Alphabet::new(&symbols, &eos, &pad)?;
        match dim {
            Some(_) => alphabet.with_encodings(vectors),
            None => Ok(alphabet),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_file_str(&text, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }
}

fn content_symbol(i: usize) -> String {
    if i < 26 {
        ((b'a' + i as u8) as char).to_string()
    } else {
        format!("t{i}")
    }
}

/// An ordered list of tokens. Complete iff it ends in EOS and EOS occurs exactly once.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sentence {
    tokens: Vec<TokenId>,
    complete: bool,
}

impl Sentence {
    pub fn new(tokens: Vec<TokenId>, alphabet: &Alphabet) -> Result<Self> {
        for &t in &tokens {
            alphabet.check(t)?;
        }
        let eos = alphabet.eos();
        let complete = tokens.last() == Some(&eos) && tokens.iter().filter(|&&t| t == eos).count() == 1;
        Ok(Sentence { tokens, complete })
    }

    pub fn parse(text: &str, alphabet: &Alphabet) -> Result<Self> {
        Sentence::new(alphabet.parse_tokens(text)?, alphabet)
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }
    pub fn len(&self) -> usize {
        self.tokens.len()
    }
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
    pub fn is_complete(&self) -> bool {
        self.complete
    }

    /// Errors unless the sentence is complete.
    pub fn require_complete(&self) -> Result<&Self> {
        if self.complete {
            Ok(self)
        } else {
            Err(Error::IncompleteSentence)
        }
    }

    /// Tokens with the leading pad prefix removed.
    pub fn strip_pad_prefix(&self, pad: TokenId) -> &[TokenId] {
        let start = self.tokens.iter().position(|&t| t != pad).unwrap_or(self.tokens.len());
        &self.tokens[start..]
    }

    pub fn render(&self, alphabet: &Alphabet) -> String {
        alphabet.render(&self.tokens)
    }
}

/// A named list of complete sentences. Duplicates are kept.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub name: String,
    sentences: Vec<Sentence>,
}

impl Corpus {
    pub fn new(name: impl Into<String>, sentences: Vec<Sentence>) -> Result<Self> {
        if sentences.iter().any(|s| !s.is_complete()) {
            return Err(Error::IncompleteSentence);
        }
        Ok(Corpus { name: name.into(), sentences })
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }
    pub fn len(&self) -> usize {
        self.sentences.len()
    }
    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn parse_str(text: &str, name: &str, alphabet: &Alphabet, path: &Path) -> Result<Self> {
        let mut sentences = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let lineno = lineno + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut tokens = Vec::new();
            for (col, sym) in line.split_whitespace().enumerate() {
                let id = alphabet.id(sym).map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno,
                    column: col + 1,
                    msg: format!("unknown token {sym:?}"),
                })?;
                tokens.push(id);
            }
            let s = Sentence::new(tokens, alphabet)?;
            if !s.is_complete() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno,
                    column: s.len(),
                    msg: format!("sentence must end with a single {}", alphabet.symbol(alphabet.eos())),
                });
            }
            sentences.push(s);
        }
        Corpus::new(name, sentences)
    }

    pub fn load(path: &Path, alphabet: &Alphabet) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("corpus");
        Corpus::parse_str(&text, name, alphabet, path)
    }

    pub fn to_file_string(&self, alphabet: &Alphabet) -> String {
        let mut out = String::new();
        for s in &self.sentences {
            out.push_str(&s.render(alphabet));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path, alphabet: &Alphabet) -> Result<()> {
        std::fs::write(path, self.to_file_string(alphabet)).map_err(|e| Error::io(path, e))
    }
}

/// Desk-scale meaningful set: the closure of a base corpus under segmentation and
/// composition, truncated at `max_len` tokens (EOS included).
#[derive(Debug, Clone)]
pub struct MeaningfulSet {
    base: Corpus,
    max_len: usize,
    eos: TokenId,
    members: HashSet<Vec<TokenId>>,
}

/// Shortest segment that still counts as a piece of a sentence.
pub const MIN_SEGMENT: usize = 2;

/// Closes `base` under segmentation (contiguous runs of at least two tokens) and
/// composition (concatenation of two segments), completing every result with EOS.
///
/// Segments are tracked without their EOS; a segment may be as long as `max_len`
/// while only segments of at most `max_len - 1` tokens become members, so a
/// composition that is too long to complete can still be segmented.
pub fn build_sigma(base: &Corpus, max_len: usize, alphabet: &Alphabet) -> Result<MeaningfulSet> {
    if base.is_empty() {
        return Err(Error::EmptyBase);
    }
    if max_len < 2 {
        return Err(Error::DegenerateLength(max_len));
    }
    let eos = alphabet.eos();
    let mut seeds = Vec::with_capacity(base.len());
    for (i, s) in base.sentences().iter().enumerate() {
        if s.len() > max_len {
            return Err(Error::BaseTooLong { index: i, len: s.len(), max_len });
        }
        let content = &s.tokens()[..s.len() - 1];
        if content.len() < MIN_SEGMENT {
            return Err(Error::SegmentTooShort(i));
        }
        seeds.push(content.to_vec());
    }

    let mut seen: HashSet<Vec<TokenId>> = HashSet::new();
    let mut order: Vec<Vec<TokenId>> = Vec::new();
    let push = |g: Vec<TokenId>, seen: &mut HashSet<Vec<TokenId>>, order: &mut Vec<Vec<TokenId>>| {
        if g.len() >= MIN_SEGMENT && g.len() <= max_len && seen.insert(g.clone()) {
            order.push(g);
        }
    };
    for s in seeds {
        push(s, &mut seen, &mut order);
    }
    let mut cursor = 0;
    while cursor < order.len() {
        let g = order[cursor].clone();
        for len in MIN_SEGMENT..g.len() {
            for start in 0..=g.len() - len {
                push(g[start..start + len].to_vec(), &mut seen, &mut order);
            }
        }
        // compose with everything discovered so far, including itself; later
        // discoveries compose with `g` when their turn comes
        let upto = cursor + 1;
        for j in 0..upto {
            if g.len() + order[j].len() > max_len {
                continue;
            }
            let h = order[j].clone();
            let mut gh = g.clone();
            gh.extend_from_slice(&h);
            push(gh, &mut seen, &mut order);
            let mut hg = h;
            hg.extend_from_slice(&g);
            push(hg, &mut seen, &mut order);
        }
        cursor += 1;
    }

    let members = order
        .into_iter()
        .filter(|g| g.len() < max_len)
        .map(|mut g| {
            g.push(eos);
            g
        })
        .collect();
    Ok(MeaningfulSet { base: base.clone(), max_len, eos, members })
}

impl MeaningfulSet {
    pub fn base(&self) -> &Corpus {
        &self.base
    }
    pub fn max_len(&self) -> usize {
        self.max_len
    }
    pub fn len(&self) -> usize {
        self.members.len()
    }
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn is_member(&self, s: &Sentence) -> Result<bool> {
        s.require_complete()?;
        Ok(self.members.contains(s.tokens()))
    }

    /// Membership on raw tokens; incomplete token lists are never members.
    pub fn contains_tokens(&self, tokens: &[TokenId]) -> bool {
        self.members.contains(tokens)
    }

    /// Members in lexicographic token order.
    pub fn sorted_members(&self) -> Vec<Vec<TokenId>> {
        let mut v: Vec<_> = self.members.iter().cloned().collect();
        v.sort();
        v
    }

    /// Members as a corpus, in lexicographic order.
    pub fn as_corpus(&self, alphabet: &Alphabet) -> Corpus {
        debug_assert_eq!(alphabet.eos(), self.eos);
        let sentences = self
            .sorted_members()
            .into_iter()
            .map(|t| Sentence::new(t, alphabet).expect("members use alphabet ids"))
            .collect();
        Corpus::new(format!("sigma({})", self.base.name), sentences).expect("members are complete")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ab() -> Alphabet {
        Alphabet::toy(6) // a b c d EOS PAD
    }

    fn corpus(alpha: &Alphabet, lines: &[&str]) -> Corpus {
        let s = lines.iter().map(|l| Sentence::parse(l, alpha).unwrap()).collect();
        Corpus::new("t", s).unwrap()
    }

    /// Independent generator: repeatedly apply both rules to every pair until
    /// nothing changes, working directly on complete sentences plus an
    /// overflow pool of uncompletable compositions.
    fn closure_oracle(base: &[Vec<TokenId>], max_len: usize) -> HashSet<Vec<TokenId>> {
        let mut pool: HashSet<Vec<TokenId>> = base.iter().cloned().collect();
        loop {
            let items: Vec<_> = pool.iter().cloned().collect();
            let mut next = pool.clone();
            for a in &items {
                for i in 0..a.len() {
                    for j in i + 2..=a.len() {
                        next.insert(a[i..j].to_vec());
                    }
                }
                for b in &items {
                    let c: Vec<_> = a.iter().chain(b).copied().collect();
                    if c.len() <= max_len {
                        next.insert(c);
                    }
                }
            }
            if next.len() == pool.len() {
                return pool.into_iter().filter(|g| g.len() < max_len).collect();
            }
            pool = next;
        }
    }

    #[test]
    fn single_sentence_closure() {
        let a = ab();
        let ms = build_sigma(&corpus(&a, &["a b EOS"]), 4, &a).unwrap();
        let yes = |t: &str| ms.is_member(&Sentence::parse(t, &a).unwrap()).unwrap();
        assert!(yes("a b EOS"));
        assert!(yes("b a EOS"));
        assert!(!yes("a b a b EOS"));
        // «a b» ∘ «b a» = «a b b a» has segment «b b», and «b b» ∘ «b b» has «b b b»
        assert!(yes("b b b EOS"));
        assert!(!yes("a c EOS"));
        let oracle = closure_oracle(&[vec![0, 1]], 4);
        let expect: HashSet<Vec<TokenId>> = oracle
            .into_iter()
            .map(|mut g| {
                g.push(a.eos());
                g
            })
            .collect();
        assert_eq!(ms.members, expect);
    }

    #[test]
    fn composition_of_two_sentences() {
        let a = ab();
        let ms = build_sigma(&corpus(&a, &["a b EOS", "c d EOS"]), 5, &a).unwrap();
        assert!(ms.is_member(&Sentence::parse("a b c d EOS", &a).unwrap()).unwrap());
        let oracle = closure_oracle(&[vec![0, 1], vec![2, 3]], 5);
        assert_eq!(ms.len(), oracle.len());
    }

    #[test]
    fn single_token_base_rejected() {
        let a = ab();
        let err = build_sigma(&corpus(&a, &["a EOS"]), 4, &a).unwrap_err();
        assert!(matches!(err, Error::SegmentTooShort(0)));
    }

    #[test]
    fn precondition_errors() {
        let a = ab();
        let empty = Corpus::new("e", vec![]).unwrap();
        assert_eq!(build_sigma(&empty, 4, &a).unwrap_err().to_string(), "empty base");
        assert!(matches!(build_sigma(&corpus(&a, &["a b EOS"]), 1, &a), Err(Error::DegenerateLength(1))));
    }

    #[test]
    fn incomplete_membership_is_an_error() {
        let a = ab();
        let ms = build_sigma(&corpus(&a, &["a b EOS"]), 4, &a).unwrap();
        let err = ms.is_member(&Sentence::parse("a b", &a).unwrap()).unwrap_err();
        assert_eq!(err.to_string(), "meaning undefined for incomplete sentences");
    }

    #[test]
    fn closure_is_idempotent() {
        let a = ab();
        let ms = build_sigma(&corpus(&a, &["a b EOS", "b c d EOS"]), 4, &a).unwrap();
        let again = build_sigma(&ms.as_corpus(&a), 4, &a).unwrap();
        assert_eq!(ms.members, again.members);
    }

    #[test]
    fn sentence_completeness() {
        let a = ab();
        assert!(Sentence::parse("a b EOS", &a).unwrap().is_complete());
        assert!(!Sentence::parse("a EOS b", &a).unwrap().is_complete());
        assert!(!Sentence::parse("a EOS EOS", &a).unwrap().is_complete());
        assert!(!Sentence::parse("", &a).unwrap().is_complete());
    }

    #[test]
    fn alphabet_invariants() {
        assert!(Alphabet::new(&["a", "E"], "E", "E").is_err());
        assert!(Alphabet::new(&["a", "a", "E", "P"], "E", "P").is_err());
        let a = Alphabet::new(&["a", "E", "P"], "E", "P").unwrap();
        assert!(a.clone().with_encodings(vec![vec![0.0], vec![0.0], vec![1.0]]).is_err());
        assert!(a.clone().with_encodings(vec![vec![0.0], vec![1.0]]).is_err());
        let enc = a.with_encodings(vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        assert_eq!(enc.encoding_dim(), 2);
    }

    #[test]
    fn corpus_file_errors_name_position() {
        let a = Alphabet::toy(4); // a b EOS PAD
        let p = Path::new("c.txt");
        let err = Corpus::parse_str("a b EOS\na q EOS\n", "c", &a, p).unwrap_err();
        match err {
            Error::Parse { line, column, .. } => assert_eq!((line, column), (2, 2)),
            e => panic!("unexpected {e}"),
        }
        let err = Corpus::parse_str("a b\n", "c", &a, p).unwrap_err();
        assert!(err.to_string().contains("must end with"));
        let c = Corpus::parse_str("a b EOS\n", "c", &a, p).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.sentences()[0].len(), 3);
    }

    #[test]
    fn alphabet_file_round_trip() {
        let a = Alphabet::new(&["x", "y", "END", "_"], "END", "_")
            .unwrap()
            .with_encodings(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, -0.25], vec![0.0, 0.0]])
            .unwrap();
        let text = a.to_file_string();
        let back = Alphabet::parse_file_str(&text, Path::new("a.txt")).unwrap();
        assert_eq!(a, back);
    }
}
