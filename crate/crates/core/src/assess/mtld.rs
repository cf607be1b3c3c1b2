//! Measure of Textual Lexical Diversity.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::text;

pub const DEFAULT_TTR_THRESHOLD: f64 = 0.72;

/// One directional scan: completed factors plus the partial factor left at
/// the end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scan {
    pub factors: usize,
    pub partial: f64,
    pub score: f64,
}

/// Scans `tokens` once in the given order. A factor closes as soon as the
/// running type/token ratio drops below `threshold`; the counters then reset.
pub fn scan<S: AsRef<str>>(tokens: impl Iterator<Item = S>, threshold: f64) -> Scan {
    let mut types: HashSet<String> = HashSet::new();
    let (mut count, mut total, mut factors) = (0usize, 0usize, 0usize);
    for t in tokens {
        total += 1;
        count += 1;
        types.insert(t.as_ref().to_string());
        if (types.len() as f64 / count as f64) < threshold {
            factors += 1;
            types.clear();
            count = 0;
        }
    }
    let partial = if count > 0 {
        (1.0 - types.len() as f64 / count as f64) / (1.0 - threshold)
    } else {
        0.0
    };
    let denom = factors as f64 + partial;
    let score = if denom > 0.0 { total as f64 / denom } else { total as f64 };
    Scan { factors, partial, score }
}

/// Mean of the forward and reverse directional scores over `tokens`.
pub fn mtld_tokens<S: AsRef<str>>(tokens: &[S], threshold: f64) -> Result<f64> {
    if tokens.is_empty() {
        return Err(Error::Precondition("MTLD needs at least one token".into()));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::param("ttr_threshold", "must be in (0, 1)"));
    }
    let fwd = scan(tokens.iter().map(AsRef::as_ref), threshold);
    let rev = scan(tokens.iter().rev().map(AsRef::as_ref), threshold);
    Ok((fwd.score + rev.score) / 2.0)
}

/// MTLD of `doc` over its lowercased, punctuation-stripped tokens.
pub fn mtld(doc: &str, threshold: f64) -> Result<f64> {
    mtld_tokens(&text::lexical_tokens(doc), threshold)
}

/// True when neither scan ever dips below the threshold, so the score is
/// just the token count.
pub fn is_degenerate<S: AsRef<str>>(tokens: &[S], threshold: f64) -> bool {
    let f = scan(tokens.iter().map(AsRef::as_ref), threshold);
    let r = scan(tokens.iter().rev().map(AsRef::as_ref), threshold);
    f.factors as f64 + f.partial == 0.0 && r.factors as f64 + r.partial == 0.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repeated_token() {
        let s = scan(["a"; 6].iter(), 0.72);
        assert_eq!(s.factors, 3);
        assert_eq!(s.partial, 0.0);
        assert_eq!(mtld("a a a a a a", 0.72).unwrap(), 2.0);
    }

    #[test]
    fn unique_tokens_fall_back_to_length() {
        assert_eq!(mtld("one two three four five", 0.72).unwrap(), 5.0);
        assert!(is_degenerate(&["x", "y"], 0.72));
        assert!(mtld("...", 0.72).is_err());
    }
}
