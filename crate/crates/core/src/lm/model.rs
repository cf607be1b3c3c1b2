use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::corpus::{CorpusHandle, CorpusStore};
use crate::error::{Error, IoContext, Result};
use crate::monitor::Monitor;

pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";
const UNK_ID: u32 = 0;
const BOS_ID: u32 = 1;

const MAGIC: &[u8; 8] = b"OASISLM\0";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Smoothing {
    /// Interpolated Kneser-Ney, one discount per order estimated from
    /// count-of-counts as `n1 / (n1 + 2 n2)`.
    InterpolatedKneserNey,
    /// Additive smoothing at the highest order only.
    AddK { k: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmConfig {
    pub order: usize,
    pub smoothing: Smoothing,
    pub lowercase: bool,
    pub fold_digits: bool,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            order: 5,
            smoothing: Smoothing::InterpolatedKneserNey,
            lowercase: true,
            fold_digits: true,
        }
    }
}

impl LmConfig {
    pub fn with_order(order: usize) -> Self {
        LmConfig {
            order,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(1..=5).contains(&self.order) {
            return Err(Error::param("order", "must be in [1, 5]"));
        }
        if let Smoothing::AddK { k } = self.smoothing {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::param("smoothing.k", "must be > 0"));
            }
        }
        Ok(())
    }

    /// NFC, whitespace split, optional lowercasing and digit folding.
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let nfc: String = text.nfc().collect();
        nfc.split_whitespace()
            .map(|w| {
                let w = if self.lowercase { w.to_lowercase() } else { w.to_string() };
                if self.fold_digits {
                    w.chars().map(|c| if c.is_numeric() { '0' } else { c }).collect()
                } else {
                    w
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextStats {
    total: u64,
    children: HashMap<u32, u64>,
}

/// n-gram language model. Level `k` (1-based) maps contexts of `k - 1`
/// token ids to the counts of following tokens: raw counts at the highest
/// order, continuation counts below it.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    config: LmConfig,
    vocab: Vec<String>,
    index: HashMap<String, u32>,
    levels: Vec<HashMap<Vec<u32>, ContextStats>>,
    discounts: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerplexityScore {
    pub ppl: f64,
    pub token_count: usize,
}

type NGramCounts = HashMap<Vec<u32>, u64>;

fn merge_counts<K: std::hash::Hash + Eq>(mut a: HashMap<K, u64>, b: HashMap<K, u64>) -> HashMap<K, u64> {
    if a.len() < b.len() {
        return merge_counts(b, a);
    }
    for (k, v) in b {
        *a.entry(k).or_insert(0) += v;
    }
    a
}

impl NGramModel {
    pub fn config(&self) -> &LmConfig {
        &self.config
    }

    pub fn order(&self) -> usize {
        self.config.order
    }

    /// Vocabulary size including `<unk>` and `<s>`.
    pub fn vocab_len(&self) -> usize {
        self.vocab.len()
    }

    pub fn discounts(&self) -> &[f64] {
        &self.discounts
    }

    /// Trains on in-memory texts.
    pub fn train<S: AsRef<str> + Sync>(texts: &[S], config: LmConfig) -> Result<Self> {
        config.validate()?;
        let tokenized: Vec<Vec<String>> = texts.par_iter().map(|t| config.tokenize(t.as_ref())).collect();
        let vocab_counts = tokenized
            .par_iter()
            .fold(HashMap::new, |mut m: HashMap<String, u64>, toks| {
                for t in toks {
                    *m.entry(t.clone()).or_insert(0) += 1;
                }
                m
            })
            .reduce(HashMap::new, merge_counts);
        let (vocab, index) = build_vocab(vocab_counts)?;
        let counts = tokenized
            .par_iter()
            .fold(HashMap::new, |mut m: NGramCounts, toks| {
                count_ngrams(&ids(&index, toks), config.order, &mut m);
                m
            })
            .reduce(HashMap::new, merge_counts);
        Ok(Self::estimate(config, vocab, index, counts))
    }

    /// Two passes over the corpus shards: vocabulary, then n-gram counts.
    pub fn train_corpus(store: &CorpusStore, corpus: &CorpusHandle, config: LmConfig, monitor: &dyn Monitor) -> Result<Self> {
        config.validate()?;
        let vocab_counts = corpus
            .shards
            .par_iter()
            .map(|rel| {
                monitor.checkpoint()?;
                let mut m: HashMap<String, u64> = HashMap::new();
                for doc in store.read_shard(rel)? {
                    for t in config.tokenize(&doc.text) {
                        *m.entry(t).or_insert(0) += 1;
                    }
                }
                Ok::<_, Error>(m)
            })
            .try_reduce(HashMap::new, |a, b| Ok(merge_counts(a, b)))?;
        monitor.progress(0.5, "vocabulary counted");
        let (vocab, index) = build_vocab(vocab_counts)?;
        let counts = corpus
            .shards
            .par_iter()
            .map(|rel| {
                monitor.checkpoint()?;
                let mut m = NGramCounts::new();
                for doc in store.read_shard(rel)? {
                    count_ngrams(&ids(&index, &config.tokenize(&doc.text)), config.order, &mut m);
                }
                Ok::<_, Error>(m)
            })
            .try_reduce(HashMap::new, |a, b| Ok(merge_counts(a, b)))?;
        monitor.progress(1.0, "n-grams counted");
        Ok(Self::estimate(config, vocab, index, counts))
    }

    fn estimate(config: LmConfig, vocab: Vec<String>, index: HashMap<String, u32>, top: NGramCounts) -> Self {
        let order = config.order;
        // grams[k - 1] holds the k-gram table
        let mut grams: Vec<NGramCounts> = vec![NGramCounts::new(); order];
        grams[order - 1] = top;
        for k in (1..order).rev() {
            let mut cont = NGramCounts::new();
            for gram in grams[k].keys() {
                *cont.entry(gram[1..].to_vec()).or_insert(0) += 1;
            }
            grams[k - 1] = cont;
        }
        let mut discounts = Vec::with_capacity(order);
        let mut levels = Vec::with_capacity(order);
        for table in grams {
            let (mut n1, mut n2) = (0u64, 0u64);
            let mut level: HashMap<Vec<u32>, ContextStats> = HashMap::new();
            for (gram, c) in table {
                match c {
                    1 => n1 += 1,
                    2 => n2 += 1,
                    _ => {}
                }
                let (ctx, w) = gram.split_at(gram.len() - 1);
                let st = level.entry(ctx.to_vec()).or_default();
                st.total += c;
                st.children.insert(w[0], c);
            }
            discounts.push(discount(n1, n2));
            levels.push(level);
        }
        NGramModel {
            config,
            vocab,
            index,
            levels,
            discounts,
        }
    }

    pub fn token_id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    /// Predictable vocabulary: every id except `<s>`.
    pub fn predictable_ids(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.vocab.len() as u32).filter(|&i| i != BOS_ID)
    }

    fn predictable_len(&self) -> f64 {
        (self.vocab.len() - 1) as f64
    }

    /// P(w | context); `context` may be shorter or longer than order - 1,
    /// only its last `order - 1` ids are used.
    pub fn prob(&self, context: &[u32], w: u32) -> f64 {
        let n = self.config.order;
        let ctx = if context.len() >= n - 1 {
            &context[context.len() - (n - 1)..]
        } else {
            context
        };
        match self.config.smoothing {
            Smoothing::AddK { k } => {
                let v = self.predictable_len();
                if ctx.len() < n - 1 {
                    return 1.0 / v;
                }
                match self.levels[n - 1].get(ctx) {
                    Some(st) => {
                        let c = st.children.get(&w).copied().unwrap_or(0) as f64;
                        (c + k) / (st.total as f64 + k * v)
                    }
                    None => 1.0 / v,
                }
            }
            Smoothing::InterpolatedKneserNey => self.kn_prob(ctx.len() + 1, ctx, w),
        }
    }

    fn kn_prob(&self, level: usize, ctx: &[u32], w: u32) -> f64 {
        let lower = if level == 1 {
            1.0 / self.predictable_len()
        } else {
            self.kn_prob(level - 1, &ctx[1..], w)
        };
        match self.levels[level - 1].get(ctx) {
            None => lower,
            Some(st) => {
                let d = self.discounts[level - 1];
                let c = st.children.get(&w).copied().unwrap_or(0) as f64;
                let total = st.total as f64;
                ((c - d).max(0.0) + d * st.children.len() as f64 * lower) / total
            }
        }
    }

    /// Padded id sequence for `text` as the model sees it.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        self.config.tokenize(text).iter().map(|t| self.token_id(t)).collect()
    }

    /// `exp(-(1/N) Σ ln P(token_i | context))`; `+inf` for documents with no
    /// tokens after normalization.
    pub fn perplexity(&self, text: &str) -> PerplexityScore {
        let ids = self.encode(text);
        if ids.is_empty() {
            return PerplexityScore {
                ppl: f64::INFINITY,
                token_count: 0,
            };
        }
        let pad = self.config.order - 1;
        let mut seq = vec![BOS_ID; pad];
        seq.extend_from_slice(&ids);
        let mut log_sum = 0.0;
        for i in pad..seq.len() {
            log_sum += self.prob(&seq[i - pad..i], seq[i]).ln();
        }
        PerplexityScore {
            ppl: (-log_sum / ids.len() as f64).exp(),
            token_count: ids.len(),
        }
    }

    /// Contexts present in the highest-order table, in sorted order.
    pub fn contexts(&self) -> Vec<Vec<u32>> {
        let mut ctxs: Vec<Vec<u32>> = self.levels[self.config.order - 1].keys().cloned().collect();
        ctxs.sort();
        ctxs
    }

    /// Σ_w P(w | context) over the predictable vocabulary.
    pub fn mass(&self, context: &[u32]) -> f64 {
        self.predictable_ids().map(|w| self.prob(context, w)).sum()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).at(path)?);
        f.write_all(&self.to_bytes()).at(path)?;
        f.flush().at(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path).at(path)?.read_to_end(&mut bytes).at(path)?;
        Self::from_bytes(&bytes)
    }

    /// Versioned binary encoding with every table written in sorted order,
    /// so identical models encode to identical bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(self.config.order as u8);
        let (tag, k) = match self.config.smoothing {
            Smoothing::InterpolatedKneserNey => (0u8, 0.0),
            Smoothing::AddK { k } => (1u8, k),
        };
        out.push(tag);
        out.extend_from_slice(&k.to_le_bytes());
        out.push(self.config.lowercase as u8);
        out.push(self.config.fold_digits as u8);
        out.extend_from_slice(&(self.vocab.len() as u32).to_le_bytes());
        for tok in &self.vocab {
            out.extend_from_slice(&(tok.len() as u32).to_le_bytes());
            out.extend_from_slice(tok.as_bytes());
        }
        for d in &self.discounts {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for level in &self.levels {
            let mut ctxs: Vec<(&Vec<u32>, &ContextStats)> = level.iter().collect();
            ctxs.sort_by(|a, b| a.0.cmp(b.0));
            out.extend_from_slice(&(ctxs.len() as u64).to_le_bytes());
            for (ctx, st) in ctxs {
                for id in ctx {
                    out.extend_from_slice(&id.to_le_bytes());
                }
                out.extend_from_slice(&st.total.to_le_bytes());
                let mut kids: Vec<(u32, u64)> = st.children.iter().map(|(a, b)| (*a, *b)).collect();
                kids.sort_unstable();
                out.extend_from_slice(&(kids.len() as u32).to_le_bytes());
                for (id, c) in kids {
                    out.extend_from_slice(&id.to_le_bytes());
                    out.extend_from_slice(&c.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::ModelFormat("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::ModelFormat(format!("unsupported format version {version}")));
        }
        let order = r.u8()? as usize;
        let tag = r.u8()?;
        let k = r.f64()?;
        let smoothing = match tag {
            0 => Smoothing::InterpolatedKneserNey,
            1 => Smoothing::AddK { k },
            t => return Err(Error::ModelFormat(format!("unknown smoothing tag {t}"))),
        };
        let config = LmConfig {
            order,
            smoothing,
            lowercase: r.u8()? != 0,
            fold_digits: r.u8()? != 0,
        };
        config.validate().map_err(|e| Error::ModelFormat(e.to_string()))?;
        let vlen = r.u32()? as usize;
        let mut vocab = Vec::with_capacity(vlen);
        for _ in 0..vlen {
            let n = r.u32()? as usize;
            let s = std::str::from_utf8(r.take(n)?).map_err(|_| Error::ModelFormat("vocab entry is not UTF-8".into()))?;
            vocab.push(s.to_string());
        }
        let index = vocab.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        let discounts = (0..order).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let mut levels = Vec::with_capacity(order);
        for level in 1..=order {
            let n = r.u64()? as usize;
            let mut table = HashMap::with_capacity(n);
            for _ in 0..n {
                let ctx = (0..level - 1).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
                let total = r.u64()?;
                let kids = r.u32()? as usize;
                let mut children = HashMap::with_capacity(kids);
                for _ in 0..kids {
                    let id = r.u32()?;
                    children.insert(id, r.u64()?);
                }
                table.insert(ctx, ContextStats { total, children });
            }
            levels.push(table);
        }
        if r.pos != bytes.len() {
            return Err(Error::ModelFormat("trailing bytes".into()));
        }
        Ok(NGramModel {
            config,
            vocab,
            index,
            levels,
            discounts,
        })
    }
}

fn discount(n1: u64, n2: u64) -> f64 {
    if n1 == 0 && n2 == 0 {
        return 0.5;
    }
    (n1 as f64 / (n1 as f64 + 2.0 * n2 as f64)).clamp(0.05, 0.95)
}

fn build_vocab(counts: HashMap<String, u64>) -> Result<(Vec<String>, HashMap<String, u32>)> {
    if counts.is_empty() {
        return Err(Error::Precondition("training corpus has no tokens".into()));
    }
    let mut toks: Vec<String> = counts.into_keys().filter(|t| t != UNK && t != BOS).collect();
    toks.sort();
    let mut vocab = vec![UNK.to_string(), BOS.to_string()];
    vocab.extend(toks);
    let index = vocab.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
    Ok((vocab, index))
}

fn ids(index: &HashMap<String, u32>, toks: &[String]) -> Vec<u32> {
    toks.iter().map(|t| index.get(t).copied().unwrap_or(UNK_ID)).collect()
}

fn count_ngrams(ids: &[u32], order: usize, out: &mut NGramCounts) {
    if ids.is_empty() {
        return;
    }
    let mut seq = vec![BOS_ID; order - 1];
    seq.extend_from_slice(ids);
    for w in seq.windows(order) {
        *out.entry(w.to_vec()).or_insert(0) += 1;
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::ModelFormat("truncated model file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_single_token_language() {
        let cfg = LmConfig {
            order: 1,
            smoothing: Smoothing::AddK { k: 0.01 },
            ..Default::default()
        };
        let m = NGramModel::train(&["a a a a"], cfg).unwrap();
        // V = {a, <unk>}: P(a) = (4 + k) / (4 + 2k)
        let p = m.prob(&[], m.token_id("a"));
        assert!((p - 4.01 / 4.02).abs() < 1e-12);
        let ppl = m.perplexity("a a a").ppl;
        assert!((ppl - 4.02 / 4.01).abs() < 1e-9, "{ppl}");
        // as k -> 0 the perplexity tends to 1
        let cfg_small = LmConfig {
            smoothing: Smoothing::AddK { k: 1e-9 },
            ..cfg
        };
        let m = NGramModel::train(&["a a a a"], cfg_small).unwrap();
        assert!((m.perplexity("a a a").ppl - 1.0).abs() < 1e-8);
    }

    #[test]
    fn rejects_empty_and_bad_order() {
        assert!(NGramModel::train(&["   "], LmConfig::with_order(2)).is_err());
        assert!(NGramModel::train(&["a"], LmConfig::with_order(6)).is_err());
        assert!(NGramModel::train(&["a"], LmConfig::with_order(0)).is_err());
    }

    #[test]
    fn unknown_tokens_have_finite_perplexity() {
        let m = NGramModel::train(&["the cat sat on the mat"], LmConfig::with_order(3)).unwrap();
        let s = m.perplexity("zebra quokka axolotl");
        assert!(s.ppl.is_finite() && s.ppl > 1.0);
        assert_eq!(s.token_count, 3);
        assert!(m.perplexity("").ppl.is_infinite());
    }

    #[test]
    fn normalization_folds_case_and_digits() {
        let cfg = LmConfig::default();
        assert_eq!(cfg.tokenize("The 1999 Cafe\u{301}"), vec!["the", "0000", "café"]);
    }

    #[test]
    fn binary_round_trip() {
        let m = NGramModel::train(&["a b c a b", "c c a"], LmConfig::with_order(3)).unwrap();
        let bytes = m.to_bytes();
        let back = NGramModel::from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert!(NGramModel::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(NGramModel::from_bytes(&bad).is_err());
    }
}
