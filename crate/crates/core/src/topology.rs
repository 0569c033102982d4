//! CTC topology: the collapsing map, the topology transducer, numerator graphs and
//! a brute-force alignment enumerator.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Deref;

use crate::fst::{compose_partial, Arc, Label, Wfst, BLANK, EPSILON, FIRST_SYMBOL};
use crate::{Error, Result};

/// The label alphabet: ids `2 ..= size + 1`. The emission alphabet adds blank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Alphabet {
    size: usize,
}

impl Alphabet {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::Config("alphabet must not be empty".into()));
        }
        Ok(Self { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Labels plus blank.
    pub fn num_emissions(&self) -> usize {
        self.size + 1
    }

    pub fn labels(&self) -> impl Iterator<Item = Label> + Clone {
        FIRST_SYMBOL..FIRST_SYMBOL + self.size as Label
    }

    /// Blank followed by the labels.
    pub fn emissions(&self) -> impl Iterator<Item = Label> + Clone {
        BLANK..FIRST_SYMBOL + self.size as Label
    }

    pub fn contains(&self, l: Label) -> bool {
        (FIRST_SYMBOL..FIRST_SYMBOL + self.size as Label).contains(&l)
    }
}

/// Column of an emission symbol in a [`crate::FrameLogits`] matrix.
#[inline]
pub fn emission_column(l: Label) -> usize {
    debug_assert!(l != EPSILON);
    l as usize - 1
}

/// A transcript: labels only, never blank or epsilon.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LabelSeq(Vec<Label>);

impl LabelSeq {
    pub fn new(labels: Vec<Label>) -> Result<Self> {
        if let Some(bad) = labels.iter().find(|&&l| l < FIRST_SYMBOL) {
            return Err(Error::InvalidLabels(format!(
                "reserved id {bad} inside a transcript"
            )));
        }
        Ok(Self(labels))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn into_vec(self) -> Vec<Label> {
        self.0
    }

    /// Fewest frames any alignment of this sequence needs: one per label plus a
    /// separating blank between equal neighbours.
    pub fn min_frames(&self) -> usize {
        self.0.len() + self.0.windows(2).filter(|w| w[0] == w[1]).count()
    }
}

impl Deref for LabelSeq {
    type Target = [Label];

    fn deref(&self) -> &[Label] {
        &self.0
    }
}

impl TryFrom<Vec<Label>> for LabelSeq {
    type Error = Error;

    fn try_from(v: Vec<Label>) -> Result<Self> {
        Self::new(v)
    }
}

/// Merges adjacent repeats, then drops blanks.
pub fn ctc_collapse(alignment: &[Label]) -> LabelSeq {
    let mut out = Vec::new();
    let mut prev = None;
    for &s in alignment {
        if prev != Some(s) && s != BLANK && s != EPSILON {
            out.push(s);
        }
        prev = Some(s);
    }
    LabelSeq(out)
}

const MAX_ALIGNMENT_FRAMES: usize = 10;
const MAX_ALIGNMENT_CANDIDATES: usize = 10_000_000;

/// All length-`frames` alignments over `alphabet` that collapse to `labels`, in
/// lexicographic order. Brute force over every emission string.
pub fn enumerate_alignments(
    labels: &LabelSeq,
    frames: usize,
    alphabet: Alphabet,
) -> Result<Vec<Vec<Label>>> {
    let k = alphabet.num_emissions();
    let total = (0..frames).try_fold(1usize, |acc, _| {
        acc.checked_mul(k).filter(|&v| v <= MAX_ALIGNMENT_CANDIDATES)
    });
    if frames > MAX_ALIGNMENT_FRAMES || total.is_none() {
        return Err(Error::EnumerationOverflow {
            limit: MAX_ALIGNMENT_CANDIDATES,
        });
    }
    let symbols: Vec<Label> = alphabet.emissions().collect();
    let mut digits = vec![0usize; frames];
    let mut out = Vec::new();
    loop {
        let candidate: Vec<Label> = digits.iter().map(|&d| symbols[d]).collect();
        if ctc_collapse(&candidate) == *labels {
            out.push(candidate);
        }
        // odometer increment, last position fastest
        let mut i = frames;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            digits[i] += 1;
            if digits[i] < k {
                break;
            }
            digits[i] = 0;
        }
    }
}

/// Minimal CTC topology: a start state, a blank state and one state per label.
/// Input labels are emission symbols, output labels the collapsed sequence. Every
/// arc has weight zero and every state is final.
pub fn build_ctc_topology(alphabet: Alphabet) -> Wfst {
    let mut f = Wfst::new();
    let start = f.add_state();
    let blank = f.add_state();
    let first_label_state = f.num_states();
    f.add_states(alphabet.size());
    let state_of = |l: Label| first_label_state + (l - FIRST_SYMBOL) as usize;
    f.set_start(start);

    for src in f.states() {
        f.set_final(src, 0.0);
        f.add_arc(src, Arc::new(BLANK, EPSILON, 0.0, blank));
        for l in alphabet.labels() {
            let dst = state_of(l);
            if dst == src {
                f.add_arc(src, Arc::new(l, EPSILON, 0.0, dst));
            } else {
                f.add_arc(src, Arc::new(l, l, 0.0, dst));
            }
        }
    }
    f
}

/// Alignment lattice of one transcript: the topology composed with a linear
/// acceptor of `labels`, trimmed. An empty transcript accepts blank runs only.
pub fn numerator_graph(labels: &LabelSeq, topology: &Wfst) -> Result<Wfst> {
    let outputs = topology.output_alphabet();
    let missing: Vec<Label> = labels.iter().copied().filter(|l| !outputs.contains(l)).collect();
    if !missing.is_empty() {
        return Err(Error::AlphabetMismatch { missing });
    }
    Ok(compose_partial(topology, &Wfst::linear_acceptor(labels)).trim())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fst::enumerate_language;

    const A: Label = 2;
    const B: Label = 3;

    fn seq(v: &[Label]) -> LabelSeq {
        LabelSeq::new(v.to_vec()).unwrap()
    }

    #[test]
    fn collapse_examples() {
        assert_eq!(ctc_collapse(&[BLANK, A, A, BLANK, B]), seq(&[A, B]));
        assert_eq!(ctc_collapse(&[BLANK, BLANK, BLANK]), seq(&[]));
        assert_eq!(ctc_collapse(&[A, BLANK, A]), seq(&[A, A]));
    }

    #[test]
    fn alignment_counts() {
        let ab = Alphabet::new(2).unwrap();
        // brute force over all 27 strings of length 3 (frozen count)
        assert_eq!(enumerate_alignments(&seq(&[A, B]), 3, ab).unwrap().len(), 5);
        assert_eq!(
            enumerate_alignments(&seq(&[A]), 1, ab).unwrap(),
            vec![vec![A]]
        );
        assert!(enumerate_alignments(&seq(&[A, A]), 2, ab)
            .unwrap()
            .is_empty());
        assert!(enumerate_alignments(&seq(&[A]), 11, ab).is_err());
    }

    #[test]
    fn topology_accepts_and_rejects() {
        let topo = build_ctc_topology(Alphabet::new(1).unwrap());
        let num = numerator_graph(&seq(&[A]), &topo).unwrap();
        let lang = enumerate_language(&num, 3).unwrap();
        assert!(lang.iter().any(|(s, w)| s == &[BLANK, A, BLANK] && *w == 0.0));

        let topo2 = build_ctc_topology(Alphabet::new(2).unwrap());
        let aa = numerator_graph(&seq(&[A, A]), &topo2).unwrap();
        assert!(enumerate_language(&aa, 2)
            .unwrap()
            .iter()
            .all(|(s, _)| s.len() >= 3));
    }

    #[test]
    fn topology_has_one_emission_per_symbol_plus_blank() {
        for k in 1..6 {
            let topo = build_ctc_topology(Alphabet::new(k).unwrap());
            assert_eq!(topo.input_alphabet().len(), k + 1);
        }
    }

    #[test]
    fn numerator_of_ab_matches_enumerated_alignments() {
        let ab = Alphabet::new(2).unwrap();
        let topo = build_ctc_topology(ab);
        let num = numerator_graph(&seq(&[A, B]), &topo).unwrap();
        let at3: Vec<Vec<Label>> = enumerate_language(&num, 3)
            .unwrap()
            .into_iter()
            .filter(|(s, w)| {
                assert_eq!(*w, 0.0);
                s.len() == 3
            })
            .map(|(s, _)| s)
            .collect();
        assert_eq!(at3, enumerate_alignments(&seq(&[A, B]), 3, ab).unwrap());
    }

    #[test]
    fn empty_transcript_accepts_blank_runs() {
        let topo = build_ctc_topology(Alphabet::new(2).unwrap());
        let num = numerator_graph(&seq(&[]), &topo).unwrap();
        let lang = enumerate_language(&num, 4).unwrap();
        assert_eq!(lang.len(), 5);
        for (s, _) in lang {
            assert!(s.iter().all(|&l| l == BLANK));
        }
    }

    #[test]
    fn min_frames_counts_separating_blanks() {
        assert_eq!(seq(&[A, A, B]).min_frames(), 4);
        assert_eq!(seq(&[]).min_frames(), 0);
    }

    #[test]
    fn rejects_reserved_ids() {
        assert!(LabelSeq::new(vec![BLANK]).is_err());
        assert!(LabelSeq::new(vec![EPSILON, A]).is_err());
    }
}
