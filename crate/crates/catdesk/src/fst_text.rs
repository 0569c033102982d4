//! Text transducer format: `src dst ilabel olabel weight` per arc and
//! `state [weight]` per final state. The first line's source is the start
//! state. Weights are written as costs (negated log weights).

use std::fmt::Write as _;
use std::io::BufRead;

use catdesk_core::fst::{Arc, Label, StateId, Wfst};

use crate::{parse_num, FormatError, FormatResult};

pub fn write_fst(f: &Wfst) -> String {
    let mut out = String::new();
    let Some(start) = f.start() else {
        return out;
    };
    let order = std::iter::once(start).chain(f.states().filter(|&s| s != start));
    for s in order.clone() {
        for a in f.arcs(s) {
            let _ = writeln!(out, "{s} {} {} {} {}", a.next, a.ilabel, a.olabel, -a.log_weight());
        }
    }
    // The start line must come first even when the start state has no arcs.
    let mut finals = String::new();
    for s in order {
        if let Some(w) = f.final_log_weight(s) {
            let _ = writeln!(finals, "{s} {}", -w);
        }
    }
    if f.arcs(start).is_empty() {
        finals.push_str(&out);
        finals
    } else {
        out.push_str(&finals);
        out
    }
}

pub fn read_fst(reader: impl BufRead, source_name: &str) -> FormatResult<Wfst> {
    let mut f = Wfst::new();
    let ensure = |f: &mut Wfst, s: StateId| {
        if s >= f.num_states() {
            f.add_states(s + 1 - f.num_states());
        }
    };
    let mut started = false;
    for (i, line) in reader.lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|e| FormatError::line(source_name, n, e.to_string()))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let src: StateId = parse_num(fields[0], source_name, n, "state")?;
        ensure(&mut f, src);
        if !started {
            f.set_start(src);
            started = true;
        }
        match fields.len() {
            1 | 2 => {
                let cost: f64 = match fields.get(1) {
                    Some(w) => parse_num(w, source_name, n, "weight")?,
                    None => 0.0,
                };
                check_weight(cost, source_name, n)?;
                f.set_final(src, -cost);
            }
            4 | 5 => {
                let dst: StateId = parse_num(fields[1], source_name, n, "state")?;
                let ilabel: Label = parse_num(fields[2], source_name, n, "label")?;
                let olabel: Label = parse_num(fields[3], source_name, n, "label")?;
                let cost: f64 = match fields.get(4) {
                    Some(w) => parse_num(w, source_name, n, "weight")?,
                    None => 0.0,
                };
                check_weight(cost, source_name, n)?;
                ensure(&mut f, dst);
                f.add_arc(src, Arc::new(ilabel, olabel, -cost, dst));
            }
            k => {
                return Err(FormatError::line(
                    source_name,
                    n,
                    format!("expected 1, 2, 4 or 5 fields, found {k}"),
                ))
            }
        }
    }
    Ok(f)
}

fn check_weight(cost: f64, source_name: &str, line: usize) -> FormatResult<()> {
    if cost.is_finite() {
        Ok(())
    } else {
        Err(FormatError::line(source_name, line, "weights must be finite"))
    }
}
