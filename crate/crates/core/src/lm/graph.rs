use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::{NGramLm, Token};
use crate::fst::{compose, Arc, Label, StateId, Wfst, EPSILON, FIRST_SYMBOL};
use crate::math::log10_to_ln;
use crate::topology::{build_ctc_topology, Alphabet};
use crate::{Error, Result};

/// Compiles a back-off model into an acceptor whose states are LM histories.
///
/// Explicit n-grams become symbol arcs, `</s>` probabilities become final weights and
/// back-off weights become epsilon arcs to the next shorter history. The back-off
/// arcs are plain epsilons, so a sequence's path sum also collects the back-off
/// routes that a failure arc would have blocked.
pub fn lm_to_fst(lm: &NGramLm) -> Wfst {
    let mut f = Wfst::new();
    let mut states: BTreeMap<Vec<Token>, StateId> = BTreeMap::new();
    states.insert(Vec::new(), f.add_state());
    for gram in lm.entries().keys() {
        if gram.len() < lm.order() && gram.last() != Some(&Token::Eos) {
            states.insert(gram.clone(), f.add_state());
        }
    }
    let state_for = |gram: &[Token]| -> StateId {
        (0..=gram.len())
            .find_map(|i| states.get(&gram[i..]))
            .copied()
            .expect("the empty history is always a state")
    };

    let start = if lm.order() == 1 {
        states[&Vec::new()]
    } else {
        states[[Token::Bos].as_slice()]
    };
    f.set_start(start);

    for (gram, e) in lm.entries() {
        let (history, w) = gram.split_at(gram.len() - 1);
        let Some(&src) = states.get(history) else {
            continue;
        };
        let weight = log10_to_ln(e.log10_prob);
        match w[0] {
            Token::Bos => {}
            Token::Eos => f.set_final(src, weight),
            Token::Sym(l) => {
                let dst = state_for(gram);
                f.add_arc(src, Arc::new(l, l, weight, dst));
            }
        }
    }
    for (gram, &src) in &states {
        if gram.is_empty() {
            continue;
        }
        let bow = lm.entry(gram).map_or(0.0, |e| e.log10_backoff);
        let dst = state_for(&gram[1..]);
        f.add_arc(src, Arc::new(EPSILON, EPSILON, log10_to_ln(bow), dst));
    }
    f
}

/// Denominator graph: the CTC topology composed with the label LM, trimmed.
#[derive(Debug, Clone, PartialEq)]
pub struct DenominatorGraph {
    graph: Wfst,
    topology: Wfst,
    alphabet: Alphabet,
}

impl DenominatorGraph {
    /// The bare topology as a denominator: every alignment weighs zero, so with
    /// normalised emissions the denominator sum is exactly one.
    pub fn uniform(alphabet: Alphabet) -> Self {
        let topology = build_ctc_topology(alphabet);
        Self {
            graph: topology.clone(),
            topology,
            alphabet,
        }
    }

    /// Wraps an already-compiled graph (for instance one read back from disk).
    pub fn from_parts(graph: Wfst, alphabet: Alphabet) -> Result<Self> {
        let inputs = graph.input_alphabet();
        if let Some(&label) = inputs.iter().find(|&&l| l as usize > alphabet.num_emissions()) {
            return Err(Error::MissingEmission {
                label,
                columns: alphabet.num_emissions(),
            });
        }
        graph.epsilon_order()?;
        Ok(Self {
            graph: graph.trim(),
            topology: build_ctc_topology(alphabet),
            alphabet,
        })
    }

    pub fn graph(&self) -> &Wfst {
        &self.graph
    }

    pub fn topology(&self) -> &Wfst {
        &self.topology
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }
}

/// Composes `topology` with the compiled LM. The LM vocabulary must equal the
/// topology's output alphabet.
pub fn build_denominator(topology: &Wfst, lm: &NGramLm) -> Result<DenominatorGraph> {
    let outputs = topology.output_alphabet();
    let vocab = lm.vocabulary();
    let missing_in_lm: Vec<Label> = outputs.difference(&vocab).copied().collect();
    let missing_in_graph: Vec<Label> = vocab.difference(&outputs).copied().collect();
    if !missing_in_lm.is_empty() || !missing_in_graph.is_empty() {
        return Err(Error::VocabularyMismatch {
            missing_in_lm,
            missing_in_graph,
        });
    }
    let contiguous = outputs
        .iter()
        .enumerate()
        .all(|(i, &l)| l == FIRST_SYMBOL + i as Label);
    if !contiguous {
        return Err(Error::Config(
            "topology labels must be the contiguous ids 2..=K+1".into(),
        ));
    }
    let alphabet = Alphabet::new(outputs.len())?;
    let graph = compose(topology, &lm_to_fst(lm))?.trim();
    graph.epsilon_order()?;
    Ok(DenominatorGraph {
        graph,
        topology: topology.clone(),
        alphabet,
    })
}
