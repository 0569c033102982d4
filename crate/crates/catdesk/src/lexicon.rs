//! Lexicon files: `word unit unit ...`, one pronunciation per line.

use std::io::BufRead;

use catdesk_core::decode::Lexicon;
use catdesk_core::topology::LabelSeq;

use crate::symbols::SymbolTable;
use crate::{FormatError, FormatResult};

/// Reads a lexicon, interning words into `words` in order of appearance.
pub fn read_lexicon(
    reader: impl BufRead,
    source_name: &str,
    units: &SymbolTable,
    words: &mut SymbolTable,
) -> FormatResult<Lexicon> {
    let mut lex = Lexicon::new();
    for (i, line) in reader.lines().enumerate() {
        let n = i + 1;
        let err = |m: String| FormatError::line(source_name, n, m);
        let line = line.map_err(|e| err(e.to_string()))?;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else {
            continue;
        };
        let pron = fields
            .map(|u| units.id(u).ok_or_else(|| err(format!("unknown unit `{u}`"))))
            .collect::<FormatResult<Vec<_>>>()?;
        let id = words.intern(word).map_err(err)?;
        let pron = LabelSeq::new(pron).map_err(|e| err(e.to_string()))?;
        lex.insert(id, pron).map_err(|e| err(e.to_string()))?;
    }
    Ok(lex)
}
