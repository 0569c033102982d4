//! File formats, trainer and command-line plumbing around `catdesk-core`.

pub mod arpa;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod fst_text;
pub mod lexicon;
pub mod score;
pub mod symbols;
pub mod train;

use std::path::Path;

pub use catdesk_core as core;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{source_name}:{line}: {msg}")]
    Line {
        source_name: String,
        line: usize,
        msg: String,
    },
    #[error("{source_name}: byte {offset}: {msg}")]
    Byte {
        source_name: String,
        offset: u64,
        msg: String,
    },
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error(transparent)]
    Core(#[from] catdesk_core::Error),
}

impl FormatError {
    pub(crate) fn line(source_name: &str, line: usize, msg: impl Into<String>) -> Self {
        Self::Line {
            source_name: source_name.to_owned(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        Self::Io(path.display().to_string(), e)
    }
}

pub type FormatResult<T> = Result<T, FormatError>;

pub(crate) fn parse_num<T: std::str::FromStr>(
    field: &str,
    source_name: &str,
    line: usize,
    what: &str,
) -> FormatResult<T> {
    field
        .parse()
        .map_err(|_| FormatError::line(source_name, line, format!("bad {what} `{field}`")))
}
