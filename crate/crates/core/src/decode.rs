//! Decoding graphs, beam and greedy decoding, and error-rate scoring.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use crate::fst::{compose, compose_partial, viterbi, Arc, Label, Pruning, Wfst, EPSILON};
use crate::lm::{lm_to_fst, NGramLm};
use crate::loss::log_softmax_rows;
use crate::topology::{ctc_collapse, Alphabet, LabelSeq};
use crate::{Error, FrameLogits, Result};

pub const DEFAULT_BEAM: f64 = 16.0;
pub const DEFAULT_MAX_ACTIVE: usize = 2000;
pub const DEFAULT_LM_SCALE: f64 = 1.0;

/// Pronunciations per word. Words are ids in the word LM's namespace.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    entries: BTreeMap<Label, Vec<LabelSeq>>,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, word: Label, pronunciation: LabelSeq) -> Result<()> {
        if pronunciation.is_empty() {
            return Err(Error::InvalidLabels(alloc::format!(
                "word {word} has an empty pronunciation"
            )));
        }
        if word < crate::fst::FIRST_SYMBOL {
            return Err(Error::InvalidLabels(alloc::format!(
                "word id {word} collides with a reserved label"
            )));
        }
        let prons = self.entries.entry(word).or_default();
        if !prons.contains(&pronunciation) {
            prons.push(pronunciation);
        }
        Ok(())
    }

    /// Every label spells itself; decodes label sequences through a label LM.
    pub fn identity(alphabet: Alphabet) -> Self {
        let mut lex = Self::new();
        for l in alphabet.labels() {
            lex.entries.insert(l, vec![LabelSeq::new(vec![l]).expect("alphabet label")]);
        }
        lex
    }

    pub fn words(&self) -> impl Iterator<Item = Label> + '_ {
        self.entries.keys().copied()
    }

    pub fn pronunciations(&self, word: Label) -> &[LabelSeq] {
        self.entries.get(&word).map_or(&[], Vec::as_slice)
    }

    pub fn labels(&self) -> BTreeSet<Label> {
        self.entries.values().flatten().flat_map(|p| p.iter().copied()).collect()
    }

    /// Transducer from label sequences to words. The word is emitted on the
    /// first arc of each pronunciation; an epsilon arc returns to the start
    /// after every word.
    pub fn to_fst(&self) -> Wfst {
        let mut f = Wfst::new();
        let start = f.add_state();
        let end = f.add_state();
        f.set_start(start);
        f.set_final(start, 0.0);
        f.add_arc(end, Arc::new(EPSILON, EPSILON, 0.0, start));
        for (&word, prons) in &self.entries {
            for pron in prons {
                let mut src = start;
                for (i, &l) in pron.iter().enumerate() {
                    let dst = if i + 1 == pron.len() { end } else { f.add_state() };
                    let out = if i == 0 { word } else { EPSILON };
                    f.add_arc(src, Arc::new(l, out, 0.0, dst));
                    src = dst;
                }
            }
        }
        f
    }
}

/// Topology, lexicon and word LM composed into one frame-to-word graph.
pub fn build_decode_graph(topology: &Wfst, lexicon: &Lexicon, word_lm: &NGramLm) -> Result<Wfst> {
    let outputs = topology.output_alphabet();
    let missing: Vec<Label> = lexicon.labels().into_iter().filter(|l| !outputs.contains(l)).collect();
    if !missing.is_empty() {
        return Err(Error::AlphabetMismatch { missing });
    }
    let vocab = word_lm.vocabulary();
    let missing_in_lm: Vec<Label> = lexicon.words().filter(|w| !vocab.contains(w)).collect();
    if !missing_in_lm.is_empty() {
        return Err(Error::VocabularyMismatch {
            missing_in_lm,
            missing_in_graph: Vec::new(),
        });
    }
    let tl = compose_partial(topology, &lexicon.to_fst()).trim();
    Ok(compose(&tl, &lm_to_fst(word_lm))?.trim())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeOptions {
    pub beam: f64,
    pub max_active: usize,
    pub lm_scale: f64,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        Self {
            beam: DEFAULT_BEAM,
            max_active: DEFAULT_MAX_ACTIVE,
            lm_scale: DEFAULT_LM_SCALE,
        }
    }
}

impl DecodeOptions {
    pub const EXACT: DecodeOptions = DecodeOptions {
        beam: f64::INFINITY,
        max_active: usize::MAX,
        lm_scale: 1.0,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<Label>,
    /// Acoustic log-probability plus scaled graph weight.
    pub score: f64,
    /// Emission symbol per frame.
    pub alignment: Option<Vec<Label>>,
}

/// Viterbi beam search over `graph` with per-frame log-softmax scores.
pub fn beam_decode(graph: &Wfst, logits: &FrameLogits, opts: DecodeOptions) -> Result<Hypothesis> {
    if opts.beam.is_nan() || opts.beam <= 0.0 {
        return Err(Error::Config("beam must be positive".into()));
    }
    let scores = log_softmax_rows(logits);
    let best = viterbi(
        graph,
        &scores,
        Pruning {
            beam: opts.beam,
            max_active: opts.max_active,
            graph_scale: opts.lm_scale,
        },
    )?;
    Ok(Hypothesis {
        tokens: best.olabels,
        score: best.total,
        alignment: Some(best.ilabels),
    })
}

/// Per-frame argmax (ties to the lower label), then CTC collapse.
pub fn greedy_decode(logits: &FrameLogits) -> LabelSeq {
    let alignment: Vec<Label> = logits
        .iter_rows()
        .filter(|row| !row.is_empty())
        .map(|row| {
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best as Label + 1
        })
        .collect();
    ctc_collapse(&alignment)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EditCounts {
    pub distance: usize,
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
}

impl core::ops::AddAssign for EditCounts {
    fn add_assign(&mut self, o: Self) {
        self.distance += o.distance;
        self.substitutions += o.substitutions;
        self.insertions += o.insertions;
        self.deletions += o.deletions;
    }
}

/// Unit-cost Levenshtein alignment of `hyp` against `reference`. The backtrace
/// prefers substitution (or match), then insertion, then deletion.
pub fn edit_distance<T: PartialEq>(reference: &[T], hyp: &[T]) -> EditCounts {
    let (n, m) = (reference.len(), hyp.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        d[i * w] = i;
    }
    for (j, cell) in d.iter_mut().take(w).enumerate() {
        *cell = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hyp[j - 1]);
            let ins = d[i * w + j - 1] + 1;
            let del = d[(i - 1) * w + j] + 1;
            d[i * w + j] = sub.min(ins).min(del);
        }
    }
    let mut counts = EditCounts {
        distance: d[n * w + m],
        ..EditCounts::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hyp[j - 1];
            if d[(i - 1) * w + j - 1] + usize::from(!same) == here {
                counts.substitutions += usize::from(!same);
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if j > 0 && d[i * w + j - 1] + 1 == here {
            counts.insertions += 1;
            j -= 1;
        } else {
            counts.deletions += 1;
            i -= 1;
        }
    }
    counts
}

/// Error counts accumulated over a test set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ErrorTally {
    pub counts: EditCounts,
    pub reference_tokens: usize,
}

impl ErrorTally {
    pub fn add<T: PartialEq>(&mut self, reference: &[T], hyp: &[T]) {
        self.counts += edit_distance(reference, hyp);
        self.reference_tokens += reference.len();
    }

    /// Errors per reference token; zero for an empty reference set with no errors.
    pub fn rate(&self) -> f64 {
        match (self.reference_tokens, self.counts.distance) {
            (0, 0) => 0.0,
            (0, _) => f64::INFINITY,
            (r, e) => e as f64 / r as f64,
        }
    }
}
