//! Weighted finite-state transducers over integer labels.
//!
//! Arc and final weights are stored as costs (negative natural-log weights). Every
//! public constructor and accessor speaks log weights, so callers never see the sign
//! flip. Forward-backward sums paths in the log semiring; decoding maximises in the
//! tropical one.

use alloc::collections::{BTreeSet, VecDeque};
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

mod compose;
mod enumerate;
mod shortest;

pub use compose::{compose, compose_partial};
pub use enumerate::enumerate_language;
pub use shortest::{shortest_path, viterbi, PathWeight, Pruning};

pub type Label = u32;
pub type StateId = usize;

pub const EPSILON: Label = 0;
pub const BLANK: Label = 1;
/// First id usable for alphabet symbols.
pub const FIRST_SYMBOL: Label = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub ilabel: Label,
    pub olabel: Label,
    cost: f64,
    pub next: StateId,
}

impl Arc {
    pub fn new(ilabel: Label, olabel: Label, log_weight: f64, next: StateId) -> Self {
        debug_assert!(log_weight.is_finite(), "arc weight must be finite");
        Self {
            ilabel,
            olabel,
            cost: -log_weight,
            next,
        }
    }

    #[inline]
    pub fn log_weight(&self) -> f64 {
        -self.cost
    }

    #[inline]
    pub(crate) fn cost(&self) -> f64 {
        self.cost
    }

    pub(crate) fn from_cost(ilabel: Label, olabel: Label, cost: f64, next: StateId) -> Self {
        Self {
            ilabel,
            olabel,
            cost,
            next,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Wfst {
    start: Option<StateId>,
    arcs: Vec<Vec<Arc>>,
    finals: Vec<Option<f64>>,
}

impl Wfst {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_state(&mut self) -> StateId {
        self.arcs.push(Vec::new());
        self.finals.push(None);
        self.arcs.len() - 1
    }

    pub fn add_states(&mut self, n: usize) {
        for _ in 0..n {
            self.add_state();
        }
    }

    pub fn set_start(&mut self, s: StateId) {
        assert!(s < self.num_states(), "start state {s} does not exist");
        self.start = Some(s);
    }

    pub fn start(&self) -> Option<StateId> {
        self.start
    }

    pub fn num_states(&self) -> usize {
        self.arcs.len()
    }

    pub fn num_arcs(&self) -> usize {
        self.arcs.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.start.is_none()
    }

    /// Panics if either endpoint is not a state of this machine.
    pub fn add_arc(&mut self, src: StateId, arc: Arc) {
        assert!(src < self.num_states(), "arc source {src} does not exist");
        assert!(arc.next < self.num_states(), "arc target {} does not exist", arc.next);
        self.arcs[src].push(arc);
    }

    pub fn set_final(&mut self, s: StateId, log_weight: f64) {
        self.finals[s] = Some(-log_weight);
    }

    pub(crate) fn set_final_cost(&mut self, s: StateId, cost: Option<f64>) {
        self.finals[s] = cost;
    }

    pub fn final_log_weight(&self, s: StateId) -> Option<f64> {
        self.finals[s].map(|c| -c)
    }

    pub(crate) fn final_cost(&self, s: StateId) -> Option<f64> {
        self.finals[s]
    }

    pub fn is_final(&self, s: StateId) -> bool {
        self.finals[s].is_some()
    }

    pub fn arcs(&self, s: StateId) -> &[Arc] {
        &self.arcs[s]
    }

    pub fn states(&self) -> core::ops::Range<StateId> {
        0..self.num_states()
    }

    /// Non-epsilon input labels.
    pub fn input_alphabet(&self) -> BTreeSet<Label> {
        self.arcs
            .iter()
            .flatten()
            .map(|a| a.ilabel)
            .filter(|&l| l != EPSILON)
            .collect()
    }

    /// Non-epsilon output labels.
    pub fn output_alphabet(&self) -> BTreeSet<Label> {
        self.arcs
            .iter()
            .flatten()
            .map(|a| a.olabel)
            .filter(|&l| l != EPSILON)
            .collect()
    }

    /// Topological order of the subgraph of input-epsilon arcs. Every state appears
    /// exactly once; an epsilon cycle is an error.
    pub fn epsilon_order(&self) -> Result<Vec<StateId>> {
        let n = self.num_states();
        let mut indegree = vec![0usize; n];
        for arc in self.arcs.iter().flatten() {
            if arc.ilabel == EPSILON {
                indegree[arc.next] += 1;
            }
        }
        let mut queue: VecDeque<StateId> = (0..n).filter(|&s| indegree[s] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(s) = queue.pop_front() {
            order.push(s);
            for arc in &self.arcs[s] {
                if arc.ilabel == EPSILON {
                    indegree[arc.next] -= 1;
                    if indegree[arc.next] == 0 {
                        queue.push_back(arc.next);
                    }
                }
            }
        }
        if order.len() != n {
            let state = (0..n).find(|&s| indegree[s] > 0).unwrap_or(0);
            return Err(Error::EpsilonCycle { state });
        }
        Ok(order)
    }

    /// Removes every state that is not on a start-to-final path. States keep their
    /// relative order. A machine with no accepting path becomes the empty machine.
    pub fn trim(&self) -> Wfst {
        let Some(start) = self.start else {
            return Wfst::new();
        };
        let n = self.num_states();
        let mut access = vec![false; n];
        let mut stack = vec![start];
        access[start] = true;
        while let Some(s) = stack.pop() {
            for a in &self.arcs[s] {
                if !access[a.next] {
                    access[a.next] = true;
                    stack.push(a.next);
                }
            }
        }
        let mut reverse: Vec<Vec<StateId>> = vec![Vec::new(); n];
        for (s, arcs) in self.arcs.iter().enumerate() {
            for a in arcs {
                reverse[a.next].push(s);
            }
        }
        let mut coaccess = vec![false; n];
        let mut stack: Vec<StateId> = (0..n).filter(|&s| self.is_final(s)).collect();
        for &s in &stack {
            coaccess[s] = true;
        }
        while let Some(s) = stack.pop() {
            for &p in &reverse[s] {
                if !coaccess[p] {
                    coaccess[p] = true;
                    stack.push(p);
                }
            }
        }
        if !coaccess[start] {
            return Wfst::new();
        }
        let mut map = vec![usize::MAX; n];
        let mut out = Wfst::new();
        for s in 0..n {
            if access[s] && coaccess[s] {
                map[s] = out.add_state();
            }
        }
        for s in 0..n {
            if map[s] == usize::MAX {
                continue;
            }
            out.set_final_cost(map[s], self.finals[s]);
            for a in &self.arcs[s] {
                if map[a.next] != usize::MAX {
                    out.arcs[map[s]].push(Arc { next: map[a.next], ..*a });
                }
            }
        }
        out.start = Some(map[start]);
        out
    }

    /// Linear acceptor of `labels` with zero weights.
    pub fn linear_acceptor(labels: &[Label]) -> Wfst {
        let mut f = Wfst::new();
        let mut s = f.add_state();
        f.set_start(s);
        for &l in labels {
            let n = f.add_state();
            f.add_arc(s, Arc::new(l, l, 0.0, n));
            s = n;
        }
        f.set_final(s, 0.0);
        f
    }
}

/// Free-function form of [`Wfst::trim`].
pub fn trim(f: &Wfst) -> Wfst {
    f.trim()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn accept_a() -> Wfst {
        let mut f = Wfst::new();
        f.add_states(2);
        f.set_start(0);
        f.add_arc(0, Arc::new(2, 2, -1.0, 1));
        f.set_final(1, 0.0);
        f
    }

    #[test]
    fn trim_drops_unreachable_state() {
        let mut f = accept_a();
        let dead = f.add_state();
        f.add_arc(dead, Arc::new(3, 3, 0.0, 1));
        let t = f.trim();
        assert_eq!(t.num_states(), 2);
        assert_eq!(
            enumerate_language(&t, 4).unwrap(),
            enumerate_language(&f, 4).unwrap()
        );
    }

    #[test]
    fn trim_is_identity_on_trim_machine() {
        let f = accept_a();
        assert_eq!(f.trim(), f);
    }

    #[test]
    fn trim_with_unreachable_final_gives_empty_machine() {
        let mut f = Wfst::new();
        f.add_states(2);
        f.set_start(0);
        f.set_final(1, 0.0);
        let t = f.trim();
        assert!(t.is_empty());
        assert_eq!(t.num_states(), 0);
    }

    #[test]
    fn epsilon_cycle_is_reported() {
        let mut f = Wfst::new();
        f.add_states(2);
        f.set_start(0);
        f.add_arc(0, Arc::new(EPSILON, EPSILON, -0.5, 1));
        f.add_arc(1, Arc::new(EPSILON, EPSILON, -0.5, 0));
        assert!(matches!(f.epsilon_order(), Err(Error::EpsilonCycle { .. })));
    }

    #[test]
    fn weights_round_trip_through_cost_storage() {
        let a = Arc::new(2, 2, -1.25, 0);
        assert_eq!(a.log_weight(), -1.25);
        assert_eq!(a.cost(), 1.25);
    }
}
