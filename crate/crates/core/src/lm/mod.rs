//! Back-off n-gram language models over integer symbols.
//!
//! Probabilities are kept in log10, as ARPA files store them; everything that leaves
//! this module (sentence scores, FST weights) is natural log.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use crate::fst::Label;
use crate::math::{log10_to_ln, NEG_INF};
use crate::{Error, Result};

mod graph;

pub use graph::{build_denominator, lm_to_fst, DenominatorGraph};

/// ARPA's conventional log10 probability for `<s>`, which is never predicted.
pub const BOS_LOG10_PROB: f64 = -99.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Token {
    Bos,
    Eos,
    Sym(Label),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub log10_prob: f64,
    /// Zero when the n-gram is never used as a back-off context.
    pub log10_backoff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NGramLm {
    order: usize,
    entries: BTreeMap<Vec<Token>, Entry>,
}

impl NGramLm {
    /// Validates the order and the prefix closure of the entry set.
    pub fn new(order: usize, entries: BTreeMap<Vec<Token>, Entry>) -> Result<Self> {
        if !(1..=4).contains(&order) {
            return Err(Error::UnsupportedOrder(order));
        }
        for gram in entries.keys() {
            if gram.is_empty() || gram.len() > order {
                return Err(Error::Config(format!(
                    "{}-gram in an order-{order} model",
                    gram.len()
                )));
            }
            if gram.len() > 1 && !entries.contains_key(&gram[..gram.len() - 1]) {
                return Err(Error::Config(format!("n-gram {gram:?} has no prefix entry")));
            }
        }
        if !entries.contains_key([Token::Eos].as_slice()) {
            return Err(Error::Config("model has no </s> unigram".to_string()));
        }
        Ok(Self { order, entries })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn entries(&self) -> &BTreeMap<Vec<Token>, Entry> {
        &self.entries
    }

    pub fn entry(&self, gram: &[Token]) -> Option<&Entry> {
        self.entries.get(gram)
    }

    /// Symbols with a unigram entry.
    pub fn vocabulary(&self) -> BTreeSet<Label> {
        self.entries
            .keys()
            .filter_map(|g| match g.as_slice() {
                [Token::Sym(l)] => Some(*l),
                _ => None,
            })
            .collect()
    }

    /// Number of entries per order, index 0 holding the unigram count.
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.order];
        for g in self.entries.keys() {
            c[g.len() - 1] += 1;
        }
        c
    }

    /// Back-off log10 probability of `w` after `history`; `-inf` for unknown `w`.
    pub fn log10_conditional(&self, history: &[Token], w: Token) -> f64 {
        let keep = history.len().min(self.order - 1);
        let history = &history[history.len() - keep..];
        let mut acc = 0.0;
        let mut gram = Vec::with_capacity(keep + 1);
        for start in 0..=history.len() {
            let h = &history[start..];
            gram.clear();
            gram.extend_from_slice(h);
            gram.push(w);
            if let Some(e) = self.entries.get(&gram) {
                return acc + e.log10_prob;
            }
            if let Some(e) = self.entries.get(h) {
                acc += e.log10_backoff;
            }
        }
        NEG_INF
    }

    /// Natural-log probability of `labels` framed by `<s>` and `</s>`.
    pub fn sentence_logprob(&self, labels: &[Label]) -> Result<f64> {
        let mut history = vec![Token::Bos];
        let mut total = 0.0;
        for &l in labels {
            let w = Token::Sym(l);
            if !self.entries.contains_key([w].as_slice()) {
                return Err(Error::OutOfVocabulary(format!("{l}")));
            }
            total += self.log10_conditional(&history, w);
            history.push(w);
        }
        total += self.log10_conditional(&history, Token::Eos);
        Ok(log10_to_ln(total))
    }
}

/// Witten-Bell back-off estimate over `vocab`. Unigrams interpolate with a uniform
/// distribution over `vocab` and `</s>` so unseen symbols keep mass; higher orders
/// discount seen events by `c(h) / (c(h) + N1+(h.))` and back off.
pub fn estimate_ngram<S: AsRef<[Label]>>(
    transcripts: &[S],
    vocab: &[Label],
    order: usize,
) -> Result<NGramLm> {
    if !(1..=4).contains(&order) {
        return Err(Error::UnsupportedOrder(order));
    }
    if transcripts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let vocab: BTreeSet<Label> = vocab.iter().copied().collect();
    let mut counts: BTreeMap<Vec<Token>, f64> = BTreeMap::new();
    for t in transcripts {
        let mut tokens = vec![Token::Bos];
        for &l in t.as_ref() {
            if !vocab.contains(&l) {
                return Err(Error::OutOfVocabulary(format!("{l}")));
            }
            tokens.push(Token::Sym(l));
        }
        tokens.push(Token::Eos);
        for i in 1..tokens.len() {
            for m in 1..=order.min(i + 1) {
                *counts.entry(tokens[i + 1 - m..=i].to_vec()).or_insert(0.0) += 1.0;
            }
        }
    }

    let predictable: Vec<Token> = vocab
        .iter()
        .map(|&l| Token::Sym(l))
        .chain(core::iter::once(Token::Eos))
        .collect();
    let universe = predictable.len() as f64;

    let mut entries: BTreeMap<Vec<Token>, Entry> = BTreeMap::new();
    let unigram_total: f64 = counts.iter().filter(|(g, _)| g.len() == 1).map(|(_, c)| c).sum();
    let unigram_types = counts.keys().filter(|g| g.len() == 1).count() as f64;
    for &w in &predictable {
        let c = counts.get([w].as_slice()).copied().unwrap_or(0.0);
        let p = (c + unigram_types / universe) / (unigram_total + unigram_types);
        entries.insert(vec![w], entry(libm::log10(p)));
    }
    entries.insert(vec![Token::Bos], entry(BOS_LOG10_PROB));

    for m in 2..=order {
        let mut by_context: BTreeMap<Vec<Token>, Vec<(Token, f64)>> = BTreeMap::new();
        for (g, &c) in counts.iter().filter(|(g, _)| g.len() == m) {
            by_context
                .entry(g[..m - 1].to_vec())
                .or_default()
                .push((g[m - 1], c));
        }
        let partial = NGramLm {
            order: m - 1,
            entries: entries.clone(),
        };
        for (context, followers) in by_context {
            let total: f64 = followers.iter().map(|(_, c)| c).sum();
            let distinct = followers.len() as f64;
            let saturated = followers.len() == predictable.len();
            let denom = if saturated { total } else { total + distinct };
            let mut seen_mass = 0.0;
            let mut lower_mass = 0.0;
            for &(w, c) in &followers {
                let p = c / denom;
                seen_mass += p;
                lower_mass += libm::pow(10.0, partial.log10_conditional(&context[1..], w));
                let mut gram = context.clone();
                gram.push(w);
                entries.insert(gram, entry(libm::log10(p)));
            }
            let backoff = if saturated {
                0.0
            } else {
                libm::log10((1.0 - seen_mass) / (1.0 - lower_mass))
            };
            entries
                .get_mut(&context)
                .expect("context of a counted n-gram is itself counted")
                .log10_backoff = backoff;
        }
    }
    NGramLm::new(order, entries)
}

fn entry(log10_prob: f64) -> Entry {
    Entry {
        log10_prob,
        log10_backoff: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: Label = 2;
    const B: Label = 3;

    #[test]
    fn unigram_witten_bell_table() {
        // tokens a a b </s> </s> </s>: N = 6, three seen types, universe {a, b, </s>}
        let lm = estimate_ngram(&[vec![A], vec![A], vec![B]], &[A, B], 1).unwrap();
        let p = |w| libm::pow(10.0, lm.log10_conditional(&[], w));
        assert!((p(Token::Sym(A)) - 3.0 / 9.0).abs() < 1e-12);
        assert!((p(Token::Sym(B)) - 2.0 / 9.0).abs() < 1e-12);
        assert!((p(Token::Eos) - 4.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn unseen_symbol_keeps_less_mass() {
        let lm = estimate_ngram(&[vec![A]], &[A, B], 1).unwrap();
        assert!(
            lm.log10_conditional(&[], Token::Sym(A)) > lm.log10_conditional(&[], Token::Sym(B))
        );
        assert!(lm.log10_conditional(&[], Token::Sym(B)).is_finite());
    }

    #[test]
    fn bigram_prefers_observed_successor() {
        let lm = estimate_ngram(&[vec![A, B]], &[A, B], 2).unwrap();
        let h = [Token::Bos, Token::Sym(A)];
        assert!(lm.log10_conditional(&h, Token::Sym(B)) > lm.log10_conditional(&h, Token::Sym(A)));
    }

    #[test]
    fn empty_corpus_and_bad_order_are_errors() {
        let none: [Vec<Label>; 0] = [];
        assert_eq!(estimate_ngram(&none, &[A], 2), Err(Error::EmptyCorpus));
        assert_eq!(
            estimate_ngram(&[vec![A]], &[A], 5),
            Err(Error::UnsupportedOrder(5))
        );
    }

    #[test]
    fn oov_is_named() {
        let lm = estimate_ngram(&[vec![A]], &[A], 2).unwrap();
        assert_eq!(
            lm.sentence_logprob(&[9]),
            Err(Error::OutOfVocabulary("9".into()))
        );
    }

    #[test]
    fn empty_sentence_scores_end_of_sentence() {
        let lm = estimate_ngram(&[vec![A], vec![B, A]], &[A, B], 2).unwrap();
        let direct = log10_to_ln(lm.log10_conditional(&[Token::Bos], Token::Eos));
        assert_eq!(lm.sentence_logprob(&[]).unwrap(), direct);
    }

    #[test]
    fn distributions_are_normalised() {
        let corpus = [vec![A, B, A], vec![B, B], vec![A], vec![A, A, B, A]];
        for order in 1..=4 {
            let lm = estimate_ngram(&corpus, &[A, B, 4], order).unwrap();
            let mut contexts: Vec<Vec<Token>> = vec![vec![]];
            contexts.extend(
                lm.entries()
                    .keys()
                    .filter(|g| g.len() < order && g.last() != Some(&Token::Eos))
                    .cloned(),
            );
            for h in contexts {
                let mass: f64 = [Token::Sym(A), Token::Sym(B), Token::Sym(4), Token::Eos]
                    .iter()
                    .map(|&w| libm::pow(10.0, lm.log10_conditional(&h, w)))
                    .sum();
                assert!((mass - 1.0).abs() < 1e-9, "order {order} ctx {h:?}: {mass}");
            }
        }
    }
}
