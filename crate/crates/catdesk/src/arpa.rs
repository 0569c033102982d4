//! ARPA back-off files. Probabilities stay log10 on disk.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::BufRead;

use catdesk_core::lm::{Entry, NGramLm, Token};

use crate::symbols::SymbolTable;
use crate::{parse_num, FormatError, FormatResult};

const BOS: &str = "<s>";
const EOS: &str = "</s>";

fn token_name(t: Token, symbols: &SymbolTable) -> String {
    match t {
        Token::Bos => BOS.into(),
        Token::Eos => EOS.into(),
        Token::Sym(l) => symbols.name(l).map_or_else(|| format!("#{l}"), str::to_owned),
    }
}

pub fn write_arpa(lm: &NGramLm, symbols: &SymbolTable) -> String {
    let mut by_order: Vec<Vec<(&Vec<Token>, &Entry)>> = vec![Vec::new(); lm.order()];
    for (gram, e) in lm.entries() {
        by_order[gram.len() - 1].push((gram, e));
    }
    let mut out = String::from("\n\\data\\\n");
    for (i, grams) in by_order.iter().enumerate() {
        let _ = writeln!(out, "ngram {}={}", i + 1, grams.len());
    }
    for (i, grams) in by_order.iter().enumerate() {
        let _ = write!(out, "\n\\{}-grams:\n", i + 1);
        for (gram, e) in grams {
            let words: Vec<String> = gram.iter().map(|&t| token_name(t, symbols)).collect();
            let _ = write!(out, "{}\t{}", e.log10_prob, words.join(" "));
            if i + 1 < lm.order() && gram.last() != Some(&Token::Eos) {
                let _ = write!(out, "\t{}", e.log10_backoff);
            }
            out.push('\n');
        }
    }
    out.push_str("\n\\end\\\n");
    out
}

/// Parses an ARPA file. Symbols missing from `symbols` are interned.
pub fn read_arpa(
    reader: impl BufRead,
    source_name: &str,
    symbols: &mut SymbolTable,
) -> FormatResult<NGramLm> {
    enum Section {
        Preamble,
        Data,
        Grams(usize),
        End,
    }
    let err = |n: usize, msg: String| FormatError::line(source_name, n, msg);
    let mut section = Section::Preamble;
    let mut declared: BTreeMap<usize, usize> = BTreeMap::new();
    let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
    let mut entries = BTreeMap::new();
    let mut last_line = 0;
    for (i, line) in reader.lines().enumerate() {
        let n = i + 1;
        last_line = n;
        let line = line.map_err(|e| err(n, e.to_string()))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line == "\\data\\" {
            section = Section::Data;
            continue;
        }
        if line == "\\end\\" {
            section = Section::End;
            continue;
        }
        if let Some(k) = line.strip_prefix('\\').and_then(|r| r.strip_suffix("-grams:")) {
            let k: usize = parse_num(k, source_name, n, "order")?;
            if !declared.contains_key(&k) {
                return Err(err(n, format!("section for undeclared order {k}")));
            }
            section = Section::Grams(k);
            continue;
        }
        match section {
            Section::Preamble => {}
            Section::End => return Err(err(n, "content after \\end\\".into())),
            Section::Data => {
                let rest = line
                    .strip_prefix("ngram ")
                    .ok_or_else(|| err(n, format!("expected `ngram k=count`, found `{line}`")))?;
                let (k, c) = rest
                    .split_once('=')
                    .ok_or_else(|| err(n, "expected `ngram k=count`".into()))?;
                declared.insert(
                    parse_num(k.trim(), source_name, n, "order")?,
                    parse_num(c.trim(), source_name, n, "count")?,
                );
            }
            Section::Grams(k) => {
                let fields: Vec<&str> = line.split_whitespace().collect();
                if fields.len() != k + 1 && fields.len() != k + 2 {
                    return Err(err(n, format!("a {k}-gram line needs {} or {} fields", k + 1, k + 2)));
                }
                let log10_prob: f64 = parse_num(fields[0], source_name, n, "log10 probability")?;
                let log10_backoff: f64 = match fields.get(k + 1) {
                    Some(b) => parse_num(b, source_name, n, "back-off weight")?,
                    None => 0.0,
                };
                let mut gram = Vec::with_capacity(k);
                for &w in &fields[1..=k] {
                    gram.push(match w {
                        BOS => Token::Bos,
                        EOS => Token::Eos,
                        name => Token::Sym(symbols.intern(name).map_err(|e| err(n, e))?),
                    });
                }
                if entries.insert(gram, Entry { log10_prob, log10_backoff }).is_some() {
                    return Err(err(n, "duplicate n-gram".into()));
                }
                *seen.entry(k).or_default() += 1;
            }
        }
    }
    if !matches!(section, Section::End) {
        return Err(err(last_line, "missing \\end\\ marker".into()));
    }
    for (&k, &count) in &declared {
        let got = seen.get(&k).copied().unwrap_or(0);
        if got != count {
            return Err(err(last_line, format!("header declares {count} {k}-grams, found {got}")));
        }
    }
    let order = declared.keys().next_back().copied().unwrap_or(0);
    Ok(NGramLm::new(order, entries)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use catdesk_core::lm::estimate_ngram;
    use catdesk_core::topology::Alphabet;

    #[test]
    fn estimated_model_round_trips_exactly() {
        let mut units = SymbolTable::for_units(Alphabet::new(3).unwrap());
        let lm = estimate_ngram(&[vec![2, 3, 4], vec![3, 4], vec![2, 2]], &[2, 3, 4], 3).unwrap();
        let text = write_arpa(&lm, &units);
        let back = read_arpa(text.as_bytes(), "lm.arpa", &mut units).unwrap();
        assert_eq!(back, lm);
    }

    #[test]
    fn count_mismatch_and_truncation_are_errors() {
        let text = "\\data\\\nngram 1=3\n\n\\1-grams:\n-99\t<s>\t0\n-0.3\t</s>\n\\end\\\n";
        let e = read_arpa(text.as_bytes(), "x", &mut SymbolTable::new()).unwrap_err();
        assert!(e.to_string().contains("declares 3"), "{e}");
        let text = "\\data\\\nngram 1=2\n\n\\1-grams:\n-99\t<s>\t0\n-0.3\t</s>\n";
        assert!(read_arpa(text.as_bytes(), "x", &mut SymbolTable::new()).is_err());
        let text = "\\data\\\nngram 1=1\n\n\\1-grams:\nabc\t</s>\n\\end\\\n";
        let e = read_arpa(text.as_bytes(), "x", &mut SymbolTable::new()).unwrap_err();
        assert!(e.to_string().starts_with("x:5:"), "{e}");
    }
}
