//! Brute-force reference computations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use catdesk_core::fst::Label;
use catdesk_core::lm::{estimate_ngram, NGramLm, Token};
use catdesk_core::math::{log10_to_ln, log_add, log_sum_exp};
use catdesk_core::topology::{ctc_collapse, enumerate_alignments, Alphabet, LabelSeq};
use catdesk_core::Matrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const NEG_INF: f64 = f64::NEG_INFINITY;

/// Every string of length `len` over `symbols`, first position slowest.
pub fn all_strings(symbols: &[Label], len: usize) -> Vec<Vec<Label>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                symbols.iter().map(move |&s| {
                    let mut v = prefix.clone();
                    v.push(s);
                    v
                })
            })
            .collect();
    }
    out
}

pub fn alignment_score(emissions: &Matrix, alignment: &[Label]) -> f64 {
    alignment
        .iter()
        .enumerate()
        .map(|(t, &s)| emissions.get(t, s as usize - 1))
        .sum()
}

/// Log-sum over every alignment of `labels`, by enumeration.
pub fn numerator_log_z(labels: &LabelSeq, alphabet: Alphabet, emissions: &Matrix) -> f64 {
    let scores: Vec<f64> = enumerate_alignments(labels, emissions.rows(), alphabet)
        .unwrap()
        .iter()
        .map(|a| alignment_score(emissions, a))
        .collect();
    log_sum_exp(&scores)
}

/// Total weight of all paths spelling `labels` through a back-off model whose
/// back-off transitions are free to fire even where an explicit n-gram exists.
pub fn backoff_path_sum(lm: &NGramLm, labels: &[Label]) -> f64 {
    let is_history = |h: &[Token]| {
        h.is_empty()
            || (h.len() < lm.order() && h.last() != Some(&Token::Eos) && lm.entry(h).is_some())
    };
    let reduce = |g: &[Token]| -> Vec<Token> {
        (0..=g.len()).map(|i| g[i..].to_vec()).find(|s| is_history(s)).unwrap()
    };
    let mut frontier: BTreeMap<Vec<Token>, f64> = BTreeMap::new();
    let start = if lm.order() >= 2 { vec![Token::Bos] } else { vec![] };
    frontier.insert(start, 0.0);
    let mut finished = NEG_INF;
    let words = labels.iter().map(|&l| Token::Sym(l)).chain([Token::Eos]);
    for w in words {
        let mut next: BTreeMap<Vec<Token>, f64> = BTreeMap::new();
        for (h, &score) in &frontier {
            let mut cur = h.clone();
            let mut acc = score;
            loop {
                let mut gram = cur.clone();
                gram.push(w);
                if let Some(e) = lm.entry(&gram) {
                    let s = acc + log10_to_ln(e.log10_prob);
                    if w == Token::Eos {
                        finished = log_add(finished, s);
                    } else {
                        let slot = next.entry(reduce(&gram)).or_insert(NEG_INF);
                        *slot = log_add(*slot, s);
                    }
                }
                if cur.is_empty() {
                    break;
                }
                acc += log10_to_ln(lm.entry(&cur).map_or(0.0, |e| e.log10_backoff));
                cur = reduce(&cur[1..]);
            }
        }
        frontier = next;
    }
    finished
}

/// Denominator log-partition by enumerating every emission string.
pub fn denominator_log_z(lm: &NGramLm, alphabet: Alphabet, emissions: &Matrix) -> f64 {
    let symbols: Vec<Label> = alphabet.emissions().collect();
    let mut cache: BTreeMap<LabelSeq, f64> = BTreeMap::new();
    let scores: Vec<f64> = all_strings(&symbols, emissions.rows())
        .iter()
        .map(|pi| {
            let collapsed = ctc_collapse(pi);
            let lm_score = *cache
                .entry(collapsed.clone())
                .or_insert_with(|| backoff_path_sum(lm, &collapsed));
            alignment_score(emissions, pi) + lm_score
        })
        .collect();
    log_sum_exp(&scores)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    Matrix::from_vec(rows, cols, data)
}

pub fn random_labels(rng: &mut ChaCha8Rng, alphabet: Alphabet, len: usize) -> LabelSeq {
    let labels: Vec<Label> = alphabet.labels().collect();
    LabelSeq::new((0..len).map(|_| labels[rng.random_range(0..labels.len())]).collect()).unwrap()
}

/// Random labels that fit in `frames`.
pub fn random_feasible_labels(rng: &mut ChaCha8Rng, alphabet: Alphabet, frames: usize) -> LabelSeq {
    loop {
        let len = rng.random_range(0..=frames.min(6));
        let l = random_labels(rng, alphabet, len);
        if l.min_frames() <= frames {
            return l;
        }
    }
}

/// Witten-Bell model trained on a small random corpus over the whole alphabet.
pub fn random_lm(rng: &mut ChaCha8Rng, alphabet: Alphabet, order: usize) -> NGramLm {
    let sentences = rng.random_range(1..=6);
    let corpus: Vec<Vec<Label>> = (0..sentences)
        .map(|_| {
            let len = rng.random_range(0..=5);
            random_labels(rng, alphabet, len).into_vec()
        })
        .collect();
    let vocab: Vec<Label> = alphabet.labels().collect();
    estimate_ngram(&corpus, &vocab, order).unwrap()
}

/// Largest `|a - n| / max(|a|, |n|, floor)` over paired entries.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Central differences of `f` around `x`.
pub fn numeric_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Plain full-table Levenshtein distance.
pub fn levenshtein(a: &[Label], b: &[Label]) -> usize {
    let mut table = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in table.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in table[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = table[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            table[i][j] = sub.min(table[i - 1][j] + 1).min(table[i][j - 1] + 1);
        }
    }
    table[a.len()][b.len()]
}
