//! Corpus directories: `feats.bin` plus a `text` transcript file.
//!
//! `feats.bin` layout (little-endian): magic `CDFEATS1`, `u64` utterance count,
//! then per utterance a `u32` id length, the UTF-8 id, `u64` frames, `u64` width
//! and `frames * width` row-major `f64` values.

use std::collections::HashMap;
use std::fs;
use std::io::BufRead;
use std::path::Path;

use catdesk_core::data::Utterance;
use catdesk_core::topology::LabelSeq;
use catdesk_core::Matrix;

use crate::symbols::SymbolTable;
use crate::{FormatError, FormatResult};

pub const FEATS_MAGIC: &[u8; 8] = b"CDFEATS1";
pub const FEATS_FILE: &str = "feats.bin";
pub const TEXT_FILE: &str = "text";

pub fn encode_feats(utts: &[(&str, &Matrix)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(FEATS_MAGIC);
    out.extend_from_slice(&(utts.len() as u64).to_le_bytes());
    for (id, m) in utts {
        out.extend_from_slice(&(id.len() as u32).to_le_bytes());
        out.extend_from_slice(id.as_bytes());
        out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
        for v in m.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    name: &'a str,
}

impl<'a> Cursor<'a> {
    fn err(&self, msg: impl Into<String>) -> FormatError {
        FormatError::Byte {
            source_name: self.name.to_owned(),
            offset: self.pos as u64,
            msg: msg.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> FormatResult<&'a [u8]> {
        let remaining = self.bytes.len() - self.pos;
        if remaining < n {
            return Err(self.err(format!("truncated {what}: need {n} bytes, {remaining} left")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> FormatResult<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> FormatResult<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Inverse of [`encode_feats`]. A zero-length input is an empty corpus.
pub fn decode_feats(bytes: &[u8], source_name: &str) -> FormatResult<Vec<(String, Matrix)>> {
    if bytes.is_empty() {
        return Ok(Vec::new());
    }
    let mut c = Cursor {
        bytes,
        pos: 0,
        name: source_name,
    };
    if c.take(8, "magic")? != FEATS_MAGIC {
        c.pos = 0;
        return Err(c.err("bad magic"));
    }
    let count = c.u64("utterance count")?;
    let mut out = Vec::new();
    for _ in 0..count {
        let len = c.u32("id length")? as usize;
        let at = c.pos;
        let id = std::str::from_utf8(c.take(len, "id")?)
            .map_err(|_| {
                c.pos = at;
                c.err("id is not UTF-8")
            })?
            .to_owned();
        let rows = c.u64("frame count")? as usize;
        let cols = c.u64("feature width")? as usize;
        let n = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| c.err("matrix size overflows"))?;
        let data = c
            .take(n, "feature data")?
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        out.push((id, Matrix::from_vec(rows, cols, data)));
    }
    if c.pos != bytes.len() {
        return Err(c.err("trailing bytes after the last utterance"));
    }
    Ok(out)
}

pub fn write_corpus(dir: &Path, utts: &[Utterance], units: &SymbolTable) -> FormatResult<()> {
    fs::create_dir_all(dir).map_err(|e| FormatError::io(dir, e))?;
    let pairs: Vec<(&str, &Matrix)> = utts.iter().map(|u| (u.id.as_str(), &u.features)).collect();
    let feats = dir.join(FEATS_FILE);
    fs::write(&feats, encode_feats(&pairs)).map_err(|e| FormatError::io(&feats, e))?;
    let mut text = String::new();
    for u in utts {
        text.push_str(&u.id);
        for &l in u.transcript.iter() {
            text.push(' ');
            text.push_str(units.name(l).ok_or_else(|| {
                FormatError::Core(catdesk_core::Error::OutOfVocabulary(format!("label {l}")))
            })?);
        }
        text.push('\n');
    }
    let path = dir.join(TEXT_FILE);
    fs::write(&path, text).map_err(|e| FormatError::io(&path, e))
}

/// Reads `utt-id sym sym ...` lines into a map from id to labels.
pub fn read_text(
    reader: impl BufRead,
    source_name: &str,
    units: &SymbolTable,
) -> FormatResult<Vec<(String, LabelSeq)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|e| FormatError::line(source_name, n, e.to_string()))?;
        let mut fields = line.split_whitespace();
        let Some(id) = fields.next() else {
            continue;
        };
        let labels = fields
            .map(|s| {
                units
                    .id(s)
                    .ok_or_else(|| FormatError::line(source_name, n, format!("unknown unit `{s}`")))
            })
            .collect::<FormatResult<Vec<_>>>()?;
        let seq = LabelSeq::new(labels).map_err(|e| FormatError::line(source_name, n, e.to_string()))?;
        out.push((id.to_owned(), seq));
    }
    Ok(out)
}

pub fn read_corpus(dir: &Path, units: &SymbolTable) -> FormatResult<Vec<Utterance>> {
    let feats_path = dir.join(FEATS_FILE);
    let bytes = fs::read(&feats_path).map_err(|e| FormatError::io(&feats_path, e))?;
    let feats = decode_feats(&bytes, &feats_path.display().to_string())?;
    let text_path = dir.join(TEXT_FILE);
    let text = fs::read(&text_path).map_err(|e| FormatError::io(&text_path, e))?;
    let name = text_path.display().to_string();
    let mut transcripts: HashMap<String, LabelSeq> = read_text(text.as_slice(), &name, units)?.into_iter().collect();
    feats
        .into_iter()
        .map(|(id, features)| {
            let transcript = transcripts
                .remove(&id)
                .ok_or_else(|| FormatError::line(&name, 0, format!("no transcript for `{id}`")))?;
            Ok(Utterance {
                id,
                features,
                transcript,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncation_reports_offset() {
        let m = Matrix::from_rows(&[[1.0, -2.5], [0.125, f64::MIN_POSITIVE]]);
        let bytes = encode_feats(&[("u1", &m)]);
        assert_eq!(decode_feats(&bytes, "f").unwrap(), vec![("u1".to_owned(), m)]);
        let err = decode_feats(&bytes[..bytes.len() - 3], "f").unwrap_err();
        let expected = 8 + 8 + 4 + 2 + 8 + 8;
        assert!(err.to_string().contains(&format!("byte {expected}")), "{err}");
        assert!(decode_feats(b"NOTMAGIC", "f").is_err());
        assert!(decode_feats(&[], "f").unwrap().is_empty());
    }
}
