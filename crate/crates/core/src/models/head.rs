use std::collections::HashMap;

use super::file::{hash_text, header, key_str, ModelKind, Parsed};
use super::{Discriminant, NGramModel};
use crate::dynamics::padded_window;
use crate::error::{Error, Result};
use crate::token::{Alphabet, Sentence, TokenId};

/// An n-gram model whose post-EOS prediction is a meaning label.
///
/// Windows whose last non-pad token is EOS read a separate label table keyed by the
/// whole window (falling back to the label marginal); every other window is answered
/// by the underlying n-gram model untouched. The two key sets are disjoint, so head
/// training cannot move any generation conditional.
#[derive(Debug, Clone, PartialEq)]
pub struct MeaningHead {
    base: NGramModel,
    labels: Vec<TokenId>,
    table: HashMap<Vec<TokenId>, Vec<u64>>,
    marginal: Vec<u64>,
}

pub fn train_meaning_head(base: NGramModel, labels: &[TokenId], labeled: &[(Sentence, TokenId)]) -> Result<MeaningHead> {
    if labels.is_empty() {
        return Err(Error::EmptyLabels);
    }
    let a = base.alphabet();
    for &l in labels {
        a.check(l)?;
        if l == a.eos() || l == a.pad() {
            return Err(Error::InvalidArgument("EOS and pad cannot be meaning labels".into()));
        }
    }
    let mut head = MeaningHead { labels: labels.to_vec(), table: HashMap::new(), marginal: vec![0; labels.len()], base };
    for (s, label) in labeled {
        s.require_complete()?;
        let idx = head
            .label_index(*label)
            .ok_or_else(|| Error::InvalidArgument(format!("label {label} is not in the label set")))?;
        let key = head.key_for(s.tokens());
        head.table.entry(key).or_insert_with(|| vec![0; labels.len()])[idx] += 1;
        head.marginal[idx] += 1;
    }
    Ok(head)
}

impl MeaningHead {
    pub fn base(&self) -> &NGramModel {
        &self.base
    }
    pub fn labels(&self) -> &[TokenId] {
        &self.labels
    }

    fn label_index(&self, t: TokenId) -> Option<usize> {
        self.labels.iter().position(|&l| l == t)
    }

    fn key_for(&self, tokens: &[TokenId]) -> Vec<TokenId> {
        padded_window(tokens, self.base.context_len(), self.base.alphabet().pad())
    }

    /// True when the last non-pad token is EOS.
    pub fn is_eos_terminal(&self, window: &[TokenId]) -> bool {
        let a = self.base.alphabet();
        window.iter().rev().find(|&&t| t != a.pad()) == Some(&a.eos())
    }

    pub fn to_file_string(&self) -> String {
        let a = self.base.alphabet();
        let mut out = header(ModelKind::Head, a, self.base.context_len());
        let labels: Vec<&str> = self.labels.iter().map(|&l| a.symbol(l)).collect();
        out.push_str(&format!("labels {}\n", labels.join(" ")));
        self.base.write_body(&mut out);
        let mut keys: Vec<&Vec<TokenId>> = self.table.keys().collect();
        keys.sort();
        for key in keys {
            let ks = key_str(a, key);
            for (i, &c) in self.table[key].iter().enumerate() {
                if c > 0 {
                    out.push_str(&format!("h {ks} {} {c}\n", a.symbol(self.labels[i])));
                }
            }
        }
        out
    }

    pub(crate) fn from_parsed(p: &Parsed) -> Result<Self> {
        let base = NGramModel::from_parsed(p)?;
        let labels = p.field("labels")?.iter().map(|s| p.alphabet.id(s)).collect::<Result<Vec<_>>>()?;
        let mut head = train_meaning_head(base, &labels, &[])?;
        for r in p.rows.iter().filter(|r| r.tag == "h") {
            if r.key.len() != p.c {
                return Err(p.err(r.line, "head keys are full windows"));
            }
            let idx = head.label_index(r.token).ok_or_else(|| p.err(r.line, "head row names a non-label token"))?;
            let v: u64 = p.row_value(r)?;
            head.table.entry(r.key.clone()).or_insert_with(|| vec![0; labels.len()])[idx] = v;
            head.marginal[idx] += v;
        }
        Ok(head)
    }
}

impl Discriminant for MeaningHead {
    fn alphabet(&self) -> &Alphabet {
        self.base.alphabet()
    }
    fn context_len(&self) -> usize {
        self.base.context_len()
    }
    fn logits(&self, window: &[TokenId]) -> Vec<f64> {
        if !self.is_eos_terminal(window) {
            return self.base.logits(window);
        }
        let counts = self.table.get(window).unwrap_or(&self.marginal);
        let total: u64 = counts.iter().sum();
        let mut out = vec![f64::NEG_INFINITY; self.alphabet().k()];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l] = if total == 0 { 0.0 } else { (counts[i] as f64 / total as f64).ln() };
        }
        out
    }
    fn model_hash(&self) -> String {
        hash_text(&self.to_file_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::tabular::all_windows;
    use crate::models::train_ngram;
    use crate::token::Corpus;

    fn setup() -> (Alphabet, NGramModel, TokenId, TokenId) {
        let a = Alphabet::toy_with_labels(3, &["even", "odd"]);
        let corpus = Corpus::new(
            "c",
            ["a b EOS", "b c a EOS", "c c EOS", "a a b EOS"].iter().map(|s| Sentence::parse(s, &a).unwrap()).collect(),
        )
        .unwrap();
        let ng = train_ngram(&corpus, &a, 4, 2, 0.1).unwrap();
        let (even, odd) = (a.id("even").unwrap(), a.id("odd").unwrap());
        (a, ng, even, odd)
    }

    #[test]
    fn empty_label_set_is_rejected() {
        let (_, ng, _, _) = setup();
        assert!(matches!(train_meaning_head(ng, &[], &[]), Err(Error::EmptyLabels)));
    }

    #[test]
    fn incomplete_training_sentence_is_rejected() {
        let (a, ng, even, odd) = setup();
        let s = Sentence::parse("a b", &a).unwrap();
        assert!(matches!(train_meaning_head(ng, &[even, odd], &[(s, even)]), Err(Error::IncompleteSentence)));
    }

    #[test]
    fn generation_conditionals_are_bitwise_preserved() {
        let (a, ng, even, odd) = setup();
        let labeled = vec![
            (Sentence::parse("a b EOS", &a).unwrap(), odd),
            (Sentence::parse("a a EOS", &a).unwrap(), even),
        ];
        let head = train_meaning_head(ng.clone(), &[even, odd], &labeled).unwrap();
        for w in all_windows(a.k(), 4) {
            if head.is_eos_terminal(&w) {
                let l = head.logits(&w);
                let best = crate::dynamics::argmax(&l);
                assert!(best == even || best == odd);
            } else {
                let (x, y) = (ng.logits(&w), head.logits(&w));
                assert!(x.iter().zip(&y).all(|(p, q)| p.to_bits() == q.to_bits()));
            }
        }
        let w = padded_window(&[0, 1, a.eos()], 4, a.pad());
        assert_eq!(head.deterministic_token(&w), odd);
    }
}
