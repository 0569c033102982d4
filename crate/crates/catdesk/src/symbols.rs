use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::BufRead;

use catdesk_core::fst::{Label, BLANK, EPSILON, FIRST_SYMBOL};
use catdesk_core::topology::Alphabet;

use crate::{parse_num, FormatError, FormatResult};

pub const EPSILON_SYMBOL: &str = "<eps>";
pub const BLANK_SYMBOL: &str = "<blk>";

/// Bidirectional `symbol id` map.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SymbolTable {
    ids: BTreeMap<String, Label>,
    names: BTreeMap<Label, String>,
}

impl SymbolTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// `<eps>`, `<blk>`, then `a`, `b`, ... (or `u2`, `u3`, ... beyond 26 labels).
    pub fn for_units(alphabet: Alphabet) -> Self {
        let mut t = Self::new();
        t.insert(EPSILON_SYMBOL, EPSILON).unwrap();
        t.insert(BLANK_SYMBOL, BLANK).unwrap();
        for l in alphabet.labels() {
            let i = l - FIRST_SYMBOL;
            let name = if alphabet.size() <= 26 {
                char::from(b'a' + i as u8).to_string()
            } else {
                format!("u{l}")
            };
            t.insert(&name, l).unwrap();
        }
        t
    }

    pub fn insert(&mut self, name: &str, id: Label) -> Result<(), String> {
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(format!("symbol `{name}` is empty or contains whitespace"));
        }
        if self.ids.contains_key(name) || self.names.contains_key(&id) {
            return Err(format!("duplicate symbol `{name}` or id {id}"));
        }
        self.ids.insert(name.to_owned(), id);
        self.names.insert(id, name.to_owned());
        Ok(())
    }

    /// Adds `name` with the next free id at or above the first symbol id.
    pub fn intern(&mut self, name: &str) -> Result<Label, String> {
        if let Some(&id) = self.ids.get(name) {
            return Ok(id);
        }
        let next = self
            .names
            .keys()
            .next_back()
            .map_or(FIRST_SYMBOL, |&m| (m + 1).max(FIRST_SYMBOL));
        self.insert(name, next)?;
        Ok(next)
    }

    pub fn id(&self, name: &str) -> Option<Label> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: Label) -> Option<&str> {
        self.names.get(&id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Ids at or above the first symbol id.
    pub fn symbol_ids(&self) -> impl Iterator<Item = Label> + '_ {
        self.names.range(FIRST_SYMBOL..).map(|(&id, _)| id)
    }

    /// The unit alphabet described by this table, if its symbol ids are contiguous.
    pub fn alphabet(&self) -> Result<Alphabet, String> {
        let ids: Vec<Label> = self.symbol_ids().collect();
        let contiguous = ids.iter().enumerate().all(|(i, &l)| l == FIRST_SYMBOL + i as Label);
        if ids.is_empty() || !contiguous {
            return Err("unit ids must run contiguously from 2".into());
        }
        Alphabet::new(ids.len()).map_err(|e| e.to_string())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (id, name) in &self.names {
            let _ = writeln!(s, "{name} {id}");
        }
        s
    }

    pub fn read(reader: impl BufRead, source_name: &str) -> FormatResult<Self> {
        let mut t = Self::new();
        for (i, line) in reader.lines().enumerate() {
            let n = i + 1;
            let line = line.map_err(|e| FormatError::line(source_name, n, e.to_string()))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                [] => continue,
                [name, id] => {
                    let id = parse_num(id, source_name, n, "symbol id")?;
                    t.insert(name, id).map_err(|e| FormatError::line(source_name, n, e))?;
                }
                _ => return Err(FormatError::line(source_name, n, "expected `symbol id`")),
            }
        }
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_table_round_trips() {
        let t = SymbolTable::for_units(Alphabet::new(3).unwrap());
        assert_eq!(t.id("a"), Some(2));
        assert_eq!(t.name(4), Some("c"));
        let back = SymbolTable::read(t.to_text().as_bytes(), "units").unwrap();
        assert_eq!(back, t);
        assert_eq!(back.alphabet().unwrap().size(), 3);
    }

    #[test]
    fn duplicates_are_line_errors() {
        let err = SymbolTable::read("a 2\nb 2\n".as_bytes(), "units").unwrap_err();
        assert!(err.to_string().contains("units:2"), "{err}");
    }
}
