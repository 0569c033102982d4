use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::{Label, Wfst, EPSILON};
use crate::math::{log_add, NEG_INF};
use crate::{Error, Result};

const MAX_LEN: usize = 12;
const MAX_PREFIXES: usize = 2_000_000;

/// Every accepted input sequence of length `<= max_len` with its log-semiring path
/// sum, sorted lexicographically. Epsilon inputs are not counted towards the length.
pub fn enumerate_language(f: &Wfst, max_len: usize) -> Result<Vec<(Vec<Label>, f64)>> {
    if max_len > MAX_LEN {
        return Err(Error::EnumerationOverflow { limit: MAX_LEN });
    }
    let Some(start) = f.start() else {
        return Ok(Vec::new());
    };
    let order = f.epsilon_order()?;
    let n = f.num_states();

    let mut initial = vec![NEG_INF; n];
    initial[start] = 0.0;
    close(f, &order, &mut initial);

    let mut out = Vec::new();
    let mut frontier: BTreeMap<Vec<Label>, Vec<f64>> = BTreeMap::new();
    frontier.insert(Vec::new(), initial);
    let mut seen = 1usize;
    for len in 0..=max_len {
        let mut next: BTreeMap<Vec<Label>, Vec<f64>> = BTreeMap::new();
        for (prefix, weights) in frontier {
            let accepted = (0..n)
                .filter_map(|s| f.final_log_weight(s).map(|w| weights[s] + w))
                .fold(NEG_INF, log_add);
            if accepted > NEG_INF {
                out.push((prefix.clone(), accepted));
            }
            if len == max_len {
                continue;
            }
            for s in 0..n {
                if weights[s] == NEG_INF {
                    continue;
                }
                for arc in f.arcs(s).iter().filter(|a| a.ilabel != EPSILON) {
                    let mut key = prefix.clone();
                    key.push(arc.ilabel);
                    let row = next.entry(key).or_insert_with(|| {
                        seen += 1;
                        vec![NEG_INF; n]
                    });
                    row[arc.next] = log_add(row[arc.next], weights[s] + arc.log_weight());
                }
            }
            if seen > MAX_PREFIXES {
                return Err(Error::EnumerationOverflow {
                    limit: MAX_PREFIXES,
                });
            }
        }
        for row in next.values_mut() {
            close(f, &order, row);
        }
        frontier = next;
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

fn close(f: &Wfst, order: &[usize], weights: &mut [f64]) {
    for &s in order {
        if weights[s] == NEG_INF {
            continue;
        }
        for arc in f.arcs(s).iter().filter(|a| a.ilabel == EPSILON) {
            weights[arc.next] = log_add(weights[arc.next], weights[s] + arc.log_weight());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fst::Arc;

    #[test]
    fn empty_machine_has_empty_language() {
        assert!(enumerate_language(&Wfst::new(), 3).unwrap().is_empty());
    }

    #[test]
    fn single_arc_acceptor() {
        let mut f = Wfst::new();
        f.add_states(2);
        f.set_start(0);
        f.add_arc(0, Arc::new(2, 2, -1.0, 1));
        f.set_final(1, 0.0);
        assert_eq!(enumerate_language(&f, 3).unwrap(), vec![(vec![2], -1.0)]);
    }

    #[test]
    fn parallel_paths_are_log_summed() {
        let mut f = Wfst::new();
        f.add_states(2);
        f.set_start(0);
        f.add_arc(0, Arc::new(2, 2, -1.0, 1));
        f.add_arc(0, Arc::new(2, 2, -2.0, 1));
        f.set_final(1, 0.0);
        let lang = enumerate_language(&f, 3).unwrap();
        let expect = ((-1.0f64).exp() + (-2.0f64).exp()).ln();
        assert_eq!(lang.len(), 1);
        assert!((lang[0].1 - expect).abs() < 1e-15);
    }

    #[test]
    fn length_guard_and_ordering() {
        let mut f = Wfst::new();
        f.add_state();
        f.set_start(0);
        f.set_final(0, 0.0);
        f.add_arc(0, Arc::new(3, 3, -0.1, 0));
        f.add_arc(0, Arc::new(2, 2, -0.1, 0));
        assert!(matches!(
            enumerate_language(&f, 13),
            Err(Error::EnumerationOverflow { .. })
        ));
        let lang = enumerate_language(&f, 2).unwrap();
        let seqs: Vec<_> = lang.iter().map(|(s, _)| s.clone()).collect();
        assert_eq!(
            seqs,
            vec![vec![], vec![2], vec![2, 2], vec![2, 3], vec![3], vec![3, 2], vec![3, 3]]
        );
    }
}
