//! Seeded corruption of clean documents into known-bad negatives.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::text::{self, mix_seeds, stable_hash64};

/// Fresh draws tried before a no-op result is accepted and flagged.
pub const MAX_REDRAWS: u32 = 8;
pub const SPAN_MIN: usize = 3;
pub const SPAN_MAX: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Word,
    Span,
    Sentence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    Shuffle,
    Replace,
    Insert,
    Delete,
}

impl Unit {
    pub fn label(self) -> &'static str {
        match self {
            Unit::Word => "word",
            Unit::Span => "span",
            Unit::Sentence => "sentence",
        }
    }
}

impl Op {
    pub fn label(self) -> &'static str {
        match self {
            Op::Shuffle => "shuffle",
            Op::Replace => "replace",
            Op::Insert => "insert",
            Op::Delete => "delete",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContaminationRule {
    pub unit: Unit,
    pub op: Op,
    /// Fraction of units affected, in (0, 1].
    pub intensity: f64,
    #[serde(default)]
    pub seed_mix: u64,
}

impl ContaminationRule {
    pub fn new(unit: Unit, op: Op, intensity: f64) -> Self {
        ContaminationRule {
            unit,
            op,
            intensity,
            seed_mix: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.intensity > 0.0 && self.intensity <= 1.0) {
            return Err(Error::param("intensity", "must be in (0, 1]"));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        format!("{}-{}", self.unit.label(), self.op.label())
    }
}

/// RNG seed for contaminating `doc_id` on draw `attempt`.
pub fn contamination_seed(seed_mix: u64, doc_id: &str, attempt: u32) -> u64 {
    mix_seeds(&[seed_mix, stable_hash64(doc_id.as_bytes()), attempt as u64])
}

/// Splits `text` into units. Spans are consecutive runs of 3 to 10 words
/// whose lengths are drawn from `rng`.
fn split_units(text: &str, unit: Unit, rng: &mut ChaCha8Rng) -> Vec<String> {
    match unit {
        Unit::Word => text.split_whitespace().map(str::to_string).collect(),
        Unit::Sentence => text::sentences(text).into_iter().map(str::to_string).collect(),
        Unit::Span => {
            let words: Vec<&str> = text.split_whitespace().collect();
            segment_spans(words.len(), rng)
                .into_iter()
                .map(|(a, b)| words[a..b].join(" "))
                .collect()
        }
    }
}

/// Span boundaries covering `n` words. With `n >= 6` every span has 3 to 10
/// words and there are at least two spans.
fn segment_spans(n: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut at = 0;
    while at < n {
        let rem = n - at;
        let len = if rem < 2 * SPAN_MIN {
            rem
        } else {
            rng.random_range(SPAN_MIN..=SPAN_MAX.min(rem - SPAN_MIN))
        };
        out.push((at, at + len));
        at += len;
    }
    out
}

fn min_units(unit: Unit) -> (usize, &'static str) {
    match unit {
        Unit::Word => (2, "at least 2 words"),
        Unit::Span => (2 * SPAN_MIN, "at least 6 words for span operations"),
        Unit::Sentence => (2, "at least 2 sentences"),
    }
}

fn unit_count(text: &str, unit: Unit) -> usize {
    match unit {
        Unit::Word | Unit::Span => text::word_count(text),
        Unit::Sentence => text::sentences(text).len(),
    }
}

/// Number of units an operation touches: `ceil(intensity * n)`, at least 1.
pub fn affected(intensity: f64, n: usize) -> usize {
    ((intensity * n as f64 - 1e-9).ceil() as usize).clamp(1, n)
}

/// `k` distinct indices below `n` by partial Fisher-Yates, sorted.
fn choose_positions(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    let mut out = idx[..k].to_vec();
    out.sort_unstable();
    out
}

/// Reference Fisher-Yates: for i from len-1 down to 1, swap i with a
/// uniform j in [0, i].
pub fn fisher_yates<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

/// Units that `replace` substitutes in, drawn from donor documents.
#[derive(Debug, Clone, Default)]
pub struct DonorPool {
    texts: Vec<String>,
}

impl DonorPool {
    pub fn new(texts: Vec<String>) -> Self {
        DonorPool {
            texts: texts.into_iter().filter(|t| !t.trim().is_empty()).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty()
    }

    fn draw(&self, unit: Unit, rng: &mut ChaCha8Rng) -> Option<String> {
        for _ in 0..16 {
            let t = &self.texts[rng.random_range(0..self.texts.len())];
            let units = split_units(t, unit, rng);
            if !units.is_empty() {
                return Some(units[rng.random_range(0..units.len())].clone());
            }
        }
        None
    }
}

fn apply_once(units: &[String], rule: &ContaminationRule, donors: &DonorPool, rng: &mut ChaCha8Rng) -> Result<Vec<String>> {
    let n = units.len();
    let mut out = units.to_vec();
    match rule.op {
        Op::Shuffle => {
            let k = affected(rule.intensity, n).max(2);
            if k == n {
                fisher_yates(&mut out, rng);
            } else {
                let pos = choose_positions(n, k, rng);
                let mut picked: Vec<String> = pos.iter().map(|&p| units[p].clone()).collect();
                fisher_yates(&mut picked, rng);
                for (p, u) in pos.into_iter().zip(picked) {
                    out[p] = u;
                }
            }
        }
        Op::Delete => {
            // keep at least one unit so the document stays non-empty
            let k = affected(rule.intensity, n).min(n - 1);
            let pos = choose_positions(n, k, rng);
            let mut drop = pos.into_iter().peekable();
            out = units
                .iter()
                .enumerate()
                .filter(|(i, _)| {
                    if drop.peek() == Some(i) {
                        drop.next();
                        false
                    } else {
                        true
                    }
                })
                .map(|(_, u)| u.clone())
                .collect();
        }
        Op::Insert => {
            for _ in 0..affected(rule.intensity, n) {
                let src = rng.random_range(0..n);
                let at = rng.random_range(0..=out.len());
                out.insert(at, units[src].clone());
            }
        }
        Op::Replace => {
            if donors.is_empty() {
                return Err(Error::Precondition("replace needs a non-empty donor pool".into()));
            }
            for p in choose_positions(n, affected(rule.intensity, n), rng) {
                if let Some(u) = donors.draw(rule.unit, rng) {
                    out[p] = u;
                }
            }
        }
    }
    Ok(out)
}

/// Applies `rule` to `doc`. The result is a new document whose id carries
/// the rule and seed, with provenance in `meta`. Draws that leave the text
/// unchanged are repeated with fresh seeds up to [`MAX_REDRAWS`] times; a
/// final no-op is returned with `meta["contamination_noop"] = "true"`.
pub fn contaminate(doc: &Document, rule: &ContaminationRule, donors: &DonorPool) -> Result<Document> {
    rule.validate()?;
    let (min, what) = min_units(rule.unit);
    if unit_count(&doc.text, rule.unit) < min {
        return Err(Error::Precondition(format!(
            "document `{}` is too short for {}: needs {what}",
            doc.id,
            rule.label()
        )));
    }
    let mut result = None;
    for attempt in 0..=MAX_REDRAWS {
        let seed = contamination_seed(rule.seed_mix, &doc.id, attempt);
        let mut rng = text::rng(seed);
        let units = split_units(&doc.text, rule.unit, &mut rng);
        let out = apply_once(&units, rule, donors, &mut rng)?.join(" ");
        let changed = out != units.join(" ");
        result = Some((out, seed, changed));
        if changed {
            break;
        }
    }
    let (text, seed, changed) = result.expect("at least one draw");
    let mut d = doc.with_text(text);
    d.id = format!("{}#{}-{:016x}", doc.id, rule.label(), seed);
    d.meta.insert("parent".into(), doc.id.clone());
    d.meta.insert("contamination".into(), rule.label());
    if !changed {
        d.meta.insert("contamination_noop".into(), "true".into());
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(text: &str) -> Document {
        Document::new("d1", text)
    }

    #[test]
    fn sentence_delete_keeps_order() {
        let d = doc("One is here. Two is here. Three is here. Four is here.");
        let rule = ContaminationRule::new(Unit::Sentence, Op::Delete, 0.5);
        let out = contaminate(&d, &rule, &DonorPool::default()).unwrap();
        let s = text::sentences(&out.text);
        assert_eq!(s.len(), 2);
        let order = ["One", "Two", "Three", "Four"];
        let pos: Vec<usize> = s.iter().map(|x| order.iter().position(|o| x.starts_with(o)).unwrap()).collect();
        assert!(pos[0] < pos[1]);
        assert_eq!(out.meta["parent"], "d1");
        assert!(out.id.starts_with("d1#sentence-delete-"));
    }

    #[test]
    fn delete_never_empties() {
        let d = doc("alpha beta");
        let out = contaminate(&d, &ContaminationRule::new(Unit::Word, Op::Delete, 1.0), &DonorPool::default()).unwrap();
        assert_eq!(text::word_count(&out.text), 1);
    }

    #[test]
    fn preconditions_are_named() {
        let e = contaminate(
            &doc("single"),
            &ContaminationRule::new(Unit::Word, Op::Shuffle, 1.0),
            &DonorPool::default(),
        )
        .unwrap_err()
        .to_string();
        assert!(e.contains("at least 2 words"), "{e}");
        let e = contaminate(
            &doc("one two three four five"),
            &ContaminationRule::new(Unit::Span, Op::Shuffle, 1.0),
            &DonorPool::default(),
        )
        .unwrap_err()
        .to_string();
        assert!(e.contains("6 words"), "{e}");
        let e = contaminate(
            &doc("No terminal punctuation here"),
            &ContaminationRule::new(Unit::Sentence, Op::Insert, 0.5),
            &DonorPool::default(),
        )
        .unwrap_err()
        .to_string();
        assert!(e.contains("2 sentences"), "{e}");
        let r = ContaminationRule::new(Unit::Word, Op::Replace, 0.5);
        assert!(contaminate(&doc("a b c"), &r, &DonorPool::default()).is_err());
        assert!(ContaminationRule::new(Unit::Word, Op::Shuffle, 0.0).validate().is_err());
    }

    #[test]
    fn identical_words_flag_noop() {
        let out = contaminate(
            &doc("a a a a"),
            &ContaminationRule::new(Unit::Word, Op::Shuffle, 1.0),
            &DonorPool::default(),
        )
        .unwrap();
        assert_eq!(out.text, "a a a a");
        assert_eq!(out.meta.get("contamination_noop").map(String::as_str), Some("true"));
    }

    #[test]
    fn spans_have_legal_lengths() {
        let mut rng = text::rng(1);
        for n in 6..60 {
            let spans = segment_spans(n, &mut rng);
            assert!(spans.len() >= 2);
            assert_eq!(spans.last().unwrap().1, n);
            assert!(spans.iter().all(|(a, b)| (SPAN_MIN..=SPAN_MAX).contains(&(b - a))));
        }
    }

    #[test]
    fn replace_uses_donor_units() {
        let donors = DonorPool::new(vec!["zulu yankee xray".into()]);
        let out = contaminate(&doc("a b c d"), &ContaminationRule::new(Unit::Word, Op::Replace, 0.5), &donors).unwrap();
        let words: Vec<&str> = out.text.split(' ').collect();
        assert_eq!(words.len(), 4);
        assert_eq!(words.iter().filter(|w| ["zulu", "yankee", "xray"].contains(w)).count(), 2);
    }
}
