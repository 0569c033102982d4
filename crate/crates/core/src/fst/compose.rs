use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec::Vec;

use super::{Arc, Label, StateId, Wfst, EPSILON};
use crate::{Error, Result};

/// Epsilon-filter state. `Free` allows every move; after `b` moved alone only `b`
/// may continue alone (`BOnly`), and symmetrically for `a`. A matched move resets to
/// `Free`. Simultaneous epsilon moves are only taken from `Free`, which makes the
/// decomposition of every path pair unique.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Filter {
    Free,
    BOnly,
    AOnly,
}

/// Composes `a` with `b`, requiring every output label of `a` to be an input label
/// of `b`.
pub fn compose(a: &Wfst, b: &Wfst) -> Result<Wfst> {
    let inputs = b.input_alphabet();
    let missing: Vec<Label> = a
        .output_alphabet()
        .into_iter()
        .filter(|l| !inputs.contains(l))
        .collect();
    if !missing.is_empty() {
        return Err(Error::AlphabetMismatch { missing });
    }
    Ok(compose_partial(a, b))
}

/// Composition without the alphabet check, for when `b` deliberately restricts `a`
/// (a numerator acceptor accepts only the labels of one transcript).
pub fn compose_partial(a: &Wfst, b: &Wfst) -> Wfst {
    let mut out = Wfst::new();
    let (Some(sa), Some(sb)) = (a.start(), b.start()) else {
        return out;
    };
    let mut ids: BTreeMap<(StateId, StateId, Filter), StateId> = BTreeMap::new();
    let mut queue = VecDeque::new();

    let start = intern(&mut ids, (sa, sb, Filter::Free), &mut out, &mut queue);
    out.set_start(start);

    while let Some(key @ (qa, qb, filter)) = queue.pop_front() {
        let src = ids[&key];
        if let (Some(fa), Some(fb)) = (a.final_cost(qa), b.final_cost(qb)) {
            out.set_final_cost(src, Some(fa + fb));
        }
        for ea in a.arcs(qa) {
            if ea.olabel != EPSILON {
                for eb in b.arcs(qb) {
                    if eb.ilabel == ea.olabel {
                        let dst = intern(&mut ids, (ea.next, eb.next, Filter::Free), &mut out, &mut queue);
                        out.add_arc(
                            src,
                            Arc::from_cost(ea.ilabel, eb.olabel, ea.cost() + eb.cost(), dst),
                        );
                    }
                }
            } else {
                if filter == Filter::Free {
                    for eb in b.arcs(qb).iter().filter(|e| e.ilabel == EPSILON) {
                        let dst = intern(&mut ids, (ea.next, eb.next, Filter::Free), &mut out, &mut queue);
                        out.add_arc(
                            src,
                            Arc::from_cost(ea.ilabel, eb.olabel, ea.cost() + eb.cost(), dst),
                        );
                    }
                }
                if filter != Filter::BOnly {
                    let dst = intern(&mut ids, (ea.next, qb, Filter::AOnly), &mut out, &mut queue);
                    out.add_arc(src, Arc::from_cost(ea.ilabel, EPSILON, ea.cost(), dst));
                }
            }
        }
        if filter != Filter::AOnly {
            for eb in b.arcs(qb).iter().filter(|e| e.ilabel == EPSILON) {
                let dst = intern(&mut ids, (qa, eb.next, Filter::BOnly), &mut out, &mut queue);
                out.add_arc(src, Arc::from_cost(EPSILON, eb.olabel, eb.cost(), dst));
            }
        }
    }
    out
}

type Key = (StateId, StateId, Filter);

fn intern(
    ids: &mut BTreeMap<Key, StateId>,
    key: Key,
    out: &mut Wfst,
    queue: &mut VecDeque<Key>,
) -> StateId {
    *ids.entry(key).or_insert_with(|| {
        queue.push_back(key);
        out.add_state()
    })
}
