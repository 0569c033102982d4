//! Hypothesis files (`utt-id <tab> score <tab> tokens`) and error-rate scoring.

use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;

use catdesk_core::decode::ErrorTally;

use crate::{parse_num, FormatError, FormatResult};

#[derive(Debug, Clone, PartialEq)]
pub struct HypLine {
    pub id: String,
    pub score: Option<f64>,
    pub tokens: Vec<String>,
}

impl fmt::Display for HypLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}", self.id, self.score.unwrap_or(0.0), self.tokens.join(" "))
    }
}

/// Reads tab-separated hypothesis lines. Lines without tabs are taken as
/// `utt-id token token ...`, so corpus `text` files work as references.
pub fn read_hyps(reader: impl BufRead, source_name: &str) -> FormatResult<Vec<HypLine>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|e| FormatError::line(source_name, n, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = if line.contains('\t') {
            let parts: Vec<&str> = line.splitn(3, '\t').collect();
            if parts.len() < 2 {
                return Err(FormatError::line(source_name, n, "expected `id<TAB>score<TAB>tokens`"));
            }
            HypLine {
                id: parts[0].trim().to_owned(),
                score: Some(parse_num(parts[1].trim(), source_name, n, "score")?),
                tokens: parts.get(2).map_or(Vec::new(), |t| t.split_whitespace().map(str::to_owned).collect()),
            }
        } else {
            let mut fields = line.split_whitespace().map(str::to_owned);
            HypLine {
                id: fields.next().unwrap_or_default(),
                score: None,
                tokens: fields.collect(),
            }
        };
        out.push(parsed);
    }
    Ok(out)
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ScoreError {
    #[error("hypothesis for unknown utterance `{0}`")]
    UnknownUtterance(String),
    #[error("duplicate utterance `{0}`")]
    Duplicate(String),
}

/// Scores every reference; a missing hypothesis counts as all deletions.
pub fn score(refs: &[HypLine], hyps: &[HypLine]) -> Result<ErrorTally, ScoreError> {
    let mut by_id: BTreeMap<&str, &HypLine> = BTreeMap::new();
    for h in hyps {
        if by_id.insert(&h.id, h).is_some() {
            return Err(ScoreError::Duplicate(h.id.clone()));
        }
    }
    let mut tally = ErrorTally::default();
    let mut seen = std::collections::BTreeSet::new();
    for r in refs {
        if !seen.insert(r.id.as_str()) {
            return Err(ScoreError::Duplicate(r.id.clone()));
        }
        let hyp = by_id.get(r.id.as_str()).map_or(&[][..], |h| h.tokens.as_slice());
        tally.add(&r.tokens, hyp);
    }
    if let Some(h) = hyps.iter().find(|h| !seen.contains(h.id.as_str())) {
        return Err(ScoreError::UnknownUtterance(h.id.clone()));
    }
    Ok(tally)
}

/// `PER <percent> S <n> I <n> D <n>`.
pub fn format_tally(tally: &ErrorTally) -> String {
    let c = tally.counts;
    format!(
        "PER {:.3} S {} I {} D {}",
        100.0 * tally.rate(),
        c.substitutions,
        c.insertions,
        c.deletions
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_files_score_zero() {
        let refs = read_hyps("u1\t0\ta b c\nu2 b\n".as_bytes(), "r").unwrap();
        let tally = score(&refs, &refs).unwrap();
        assert_eq!(format_tally(&tally), "PER 0.000 S 0 I 0 D 0");
    }

    #[test]
    fn missing_hypothesis_is_all_deletions() {
        let refs = read_hyps("u1 a b\nu2 c\n".as_bytes(), "r").unwrap();
        let hyps = read_hyps("u1\t-1.5\ta\n".as_bytes(), "h").unwrap();
        let tally = score(&refs, &hyps).unwrap();
        assert_eq!((tally.counts.deletions, tally.reference_tokens), (2, 3));
        let stray = read_hyps("u9\t0\ta\n".as_bytes(), "h").unwrap();
        assert_eq!(score(&refs, &stray), Err(ScoreError::UnknownUtterance("u9".into())));
    }
}
