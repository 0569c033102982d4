use alloc::vec;
use alloc::vec::Vec;

use super::{Label, StateId, Wfst, EPSILON};
use crate::{Error, Matrix, Result};

/// Best path through a machine: its total log weight and its non-epsilon labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PathWeight {
    pub total: f64,
    pub ilabels: Vec<Label>,
    pub olabels: Vec<Label>,
}

/// Pruning for the frame-synchronous Viterbi search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pruning {
    /// Score margin below the frame's best token.
    pub beam: f64,
    pub max_active: usize,
    /// Multiplier on graph (arc and final) weights.
    pub graph_scale: f64,
}

impl Pruning {
    pub const EXACT: Pruning = Pruning {
        beam: f64::INFINITY,
        max_active: usize::MAX,
        graph_scale: 1.0,
    };
}

/// Maximum-weight path. Without emissions every accepting path competes; with
/// emissions only paths consuming exactly one input label per frame, scored by
/// graph weight plus `emissions[t][ilabel - 1]`. Exact ties go to the
/// lexicographically smaller output sequence.
pub fn shortest_path(f: &Wfst, emissions: Option<&Matrix>) -> Result<PathWeight> {
    match emissions {
        Some(e) => viterbi(f, e, Pruning::EXACT),
        None => best_path_any_length(f),
    }
}

#[derive(Debug, Clone)]
struct Candidate {
    score: f64,
    ilabels: Vec<Label>,
    olabels: Vec<Label>,
}

fn prefer(new: &Candidate, old: &Option<Candidate>) -> bool {
    match old {
        None => true,
        Some(o) => new.score > o.score || (new.score == o.score && new.olabels < o.olabels),
    }
}

fn best_path_any_length(f: &Wfst) -> Result<PathWeight> {
    let Some(start) = f.start() else {
        return Err(Error::NoPath);
    };
    let n = f.num_states();
    let mut best: Vec<Option<Candidate>> = vec![None; n];
    best[start] = Some(Candidate {
        score: 0.0,
        ilabels: Vec::new(),
        olabels: Vec::new(),
    });
    for round in 0..=n {
        let mut changed = false;
        for s in 0..n {
            let Some(cur) = best[s].clone() else { continue };
            for arc in f.arcs(s) {
                let mut cand = Candidate {
                    score: cur.score + arc.log_weight(),
                    ilabels: cur.ilabels.clone(),
                    olabels: cur.olabels.clone(),
                };
                if arc.ilabel != EPSILON {
                    cand.ilabels.push(arc.ilabel);
                }
                if arc.olabel != EPSILON {
                    cand.olabels.push(arc.olabel);
                }
                if prefer(&cand, &best[arc.next]) {
                    best[arc.next] = Some(cand);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
        if round == n {
            return Err(Error::UnboundedPath);
        }
    }
    let mut result: Option<Candidate> = None;
    for s in 0..n {
        if let (Some(c), Some(w)) = (&best[s], f.final_log_weight(s)) {
            let cand = Candidate {
                score: c.score + w,
                ..c.clone()
            };
            if prefer(&cand, &result) {
                result = Some(cand);
            }
        }
    }
    let c = result.ok_or(Error::NoPath)?;
    Ok(PathWeight {
        total: c.score,
        ilabels: c.ilabels,
        olabels: c.olabels,
    })
}

#[derive(Debug, Clone, Copy)]
struct Token {
    score: f64,
    /// (frame, state, arc index) of the arc that reached this token.
    back: Option<(usize, StateId, usize)>,
}

struct Lattice<'a> {
    f: &'a Wfst,
    nodes: Vec<Vec<Option<Token>>>,
}

impl Lattice<'_> {
    fn labels(&self, mut t: usize, mut s: StateId) -> (Vec<Label>, Vec<Label>) {
        let mut ilabels = Vec::new();
        let mut olabels = Vec::new();
        while let Some((pt, ps, ai)) = self.nodes[t][s].and_then(|tok| tok.back) {
            let arc = &self.f.arcs(ps)[ai];
            if arc.ilabel != EPSILON {
                ilabels.push(arc.ilabel);
            }
            if arc.olabel != EPSILON {
                olabels.push(arc.olabel);
            }
            t = pt;
            s = ps;
        }
        ilabels.reverse();
        olabels.reverse();
        (ilabels, olabels)
    }

    fn relax(&mut self, t: usize, s: StateId, cand: Token) {
        let replace = match self.nodes[t][s] {
            None => true,
            Some(old) if cand.score > old.score => true,
            Some(old) if cand.score == old.score => {
                let (pt, ps, ai) = cand.back.expect("relaxed tokens carry a back pointer");
                let (_, mut new_out) = self.labels(pt, ps);
                let arc = &self.f.arcs(ps)[ai];
                if arc.olabel != EPSILON {
                    new_out.push(arc.olabel);
                }
                new_out < self.labels(t, s).1
            }
            Some(_) => false,
        };
        if replace {
            self.nodes[t][s] = Some(cand);
        }
    }
}

/// Frame-synchronous Viterbi search with beam and max-active pruning. With
/// [`Pruning::EXACT`] this is the exact best path over exactly `T` emitting arcs.
pub fn viterbi(f: &Wfst, emissions: &Matrix, pruning: Pruning) -> Result<PathWeight> {
    let Some(start) = f.start() else {
        return Err(Error::NoPath);
    };
    let columns = emissions.cols();
    if let Some(&label) = f
        .input_alphabet()
        .iter()
        .find(|&&l| (l as usize) > columns)
    {
        return Err(Error::MissingEmission { label, columns });
    }
    let order = f.epsilon_order()?;
    let n = f.num_states();
    let frames = emissions.rows();
    let scale = pruning.graph_scale;

    let mut lat = Lattice {
        f,
        nodes: vec![vec![None; n]; frames + 1],
    };
    lat.nodes[0][start] = Some(Token {
        score: 0.0,
        back: None,
    });
    let mut pruned_any = false;
    let mut active: Vec<StateId> = Vec::new();
    for t in 0..=frames {
        for &s in &order {
            let Some(tok) = lat.nodes[t][s] else { continue };
            for (ai, arc) in f.arcs(s).iter().enumerate() {
                if arc.ilabel == EPSILON {
                    let cand = Token {
                        score: tok.score + scale * arc.log_weight(),
                        back: Some((t, s, ai)),
                    };
                    lat.relax(t, arc.next, cand);
                }
            }
        }
        active.clear();
        active.extend((0..n).filter(|&s| lat.nodes[t][s].is_some()));
        if active.is_empty() {
            return Err(if pruned_any {
                Error::AllPathsPruned {
                    frame: t,
                    beam: pruning.beam,
                }
            } else {
                Error::NoPath
            });
        }
        let before = active.len();
        prune(&mut active, &lat.nodes[t], pruning);
        pruned_any |= active.len() < before;
        if t == frames {
            break;
        }
        let row = emissions.row(t);
        for &s in &active {
            let tok = lat.nodes[t][s].expect("active token");
            for (ai, arc) in f.arcs(s).iter().enumerate() {
                if arc.ilabel != EPSILON {
                    let cand = Token {
                        score: tok.score
                            + scale * arc.log_weight()
                            + row[arc.ilabel as usize - 1],
                        back: Some((t, s, ai)),
                    };
                    lat.relax(t + 1, arc.next, cand);
                }
            }
        }
    }

    let mut best: Option<(f64, StateId)> = None;
    for &s in &active {
        let Some(w) = f.final_log_weight(s) else { continue };
        let score = lat.nodes[frames][s].expect("active token").score + scale * w;
        let better = match best {
            None => true,
            Some((b, bs)) => {
                score > b || (score == b && lat.labels(frames, s).1 < lat.labels(frames, bs).1)
            }
        };
        if better {
            best = Some((score, s));
        }
    }
    let (total, s) = best.ok_or(if pruned_any {
        Error::AllPathsPruned {
            frame: frames,
            beam: pruning.beam,
        }
    } else {
        Error::NoPath
    })?;
    let (ilabels, olabels) = lat.labels(frames, s);
    Ok(PathWeight {
        total,
        ilabels,
        olabels,
    })
}

fn prune(active: &mut Vec<StateId>, row: &[Option<Token>], pruning: Pruning) {
    let score = |s: StateId| row[s].map_or(f64::NEG_INFINITY, |t| t.score);
    let best = active.iter().map(|&s| score(s)).fold(f64::NEG_INFINITY, f64::max);
    if pruning.beam.is_finite() {
        active.retain(|&s| score(s) >= best - pruning.beam);
    }
    if active.len() > pruning.max_active {
        active.sort_by(|&a, &b| score(b).total_cmp(&score(a)).then(a.cmp(&b)));
        active.truncate(pruning.max_active);
        active.sort_unstable();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fst::Arc;

    fn two_paths(w1: f64, w2: f64) -> Wfst {
        let mut f = Wfst::new();
        f.add_states(2);
        f.set_start(0);
        f.add_arc(0, Arc::new(2, 3, w1, 1));
        f.add_arc(0, Arc::new(2, 2, w2, 1));
        f.set_final(1, 0.0);
        f
    }

    #[test]
    fn picks_heavier_path() {
        let p = shortest_path(&two_paths(-1.0, -3.0), None).unwrap();
        assert_eq!(p.total, -1.0);
        assert_eq!(p.olabels, [3]);
    }

    #[test]
    fn tie_goes_to_smaller_output() {
        let p = shortest_path(&two_paths(-2.0, -2.0), None).unwrap();
        assert_eq!(p.olabels, [2]);
        let e = Matrix::from_rows(&[[0.0, -0.5]]);
        let p = shortest_path(&two_paths(-2.0, -2.0), Some(&e)).unwrap();
        assert_eq!(p.olabels, [2]);
        assert_eq!(p.total, -2.5);
    }

    #[test]
    fn no_path_is_an_error() {
        let mut f = Wfst::new();
        f.add_state();
        f.set_start(0);
        assert_eq!(shortest_path(&f, None), Err(Error::NoPath));
        let f = two_paths(-1.0, -1.0);
        let e = Matrix::zeros(2, 2);
        assert_eq!(shortest_path(&f, Some(&e)), Err(Error::NoPath));
    }

    #[test]
    fn missing_emission_column_is_reported() {
        let f = two_paths(-1.0, -1.0);
        let e = Matrix::zeros(1, 1);
        assert_eq!(
            shortest_path(&f, Some(&e)),
            Err(Error::MissingEmission {
                label: 2,
                columns: 1
            })
        );
    }
}
