use alloc::string::String;
use alloc::vec::Vec;

use crate::fst::Label;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("alphabet mismatch: labels {missing:?} have no counterpart on the other side")]
    AlphabetMismatch { missing: Vec<Label> },
    #[error("epsilon cycle through state {state}")]
    EpsilonCycle { state: usize },
    #[error("enumeration exceeds the {limit} item cutoff")]
    EnumerationOverflow { limit: usize },
    #[error("no accepting path")]
    NoPath,
    #[error("all paths pruned at frame {frame}; retry with a beam larger than {beam}")]
    AllPathsPruned { frame: usize, beam: f64 },
    #[error("path weight is unbounded (positive-weight cycle)")]
    UnboundedPath,
    #[error("label {label} has no emission column (logits have {columns} columns)")]
    MissingEmission { label: Label, columns: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid label sequence: {0}")]
    InvalidLabels(String),
    #[error("empty training corpus")]
    EmptyCorpus,
    #[error("unsupported n-gram order {0} (expected 1..=4)")]
    UnsupportedOrder(usize),
    #[error("out-of-vocabulary symbol {0}")]
    OutOfVocabulary(String),
    #[error("vocabulary mismatch: missing from lm {missing_in_lm:?}, missing from graph {missing_in_graph:?}")]
    VocabularyMismatch {
        missing_in_lm: Vec<Label>,
        missing_in_graph: Vec<Label>,
    },
    #[error("utterance infeasible: {labels} labels need at least {needed} frames, got {frames}")]
    Infeasible {
        labels: usize,
        needed: usize,
        frames: usize,
    },
    #[error("non-finite gradient in tensor {0}")]
    NonFiniteGradient(&'static str),
    #[error("forward cache does not belong to these parameters")]
    StaleCache,
    #[error("frame {got} arrived out of order (expected {expected})")]
    OutOfOrder { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
}
