//! Hashed n-gram logistic regression for text quality.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::text::{self, seeded_hash64};

const MAGIC: &[u8; 8] = b"OASISQC\0";
const FORMAT_VERSION: u32 = 1;

/// Anything that maps text to a quality score in [0, 1].
pub trait QualityScorer: Sync {
    fn score(&self, text: &str) -> f64;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    /// Word n-gram orders hashed into the feature space.
    pub orders: Vec<u8>,
    /// Hash dimension, a power of two.
    pub dim: u32,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec {
            orders: vec![1, 2],
            dim: 1 << 21,
        }
    }
}

impl FeatureSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.dim.is_power_of_two() {
            return Err(Error::param("dim", "must be a power of two"));
        }
        if self.orders.is_empty() || self.orders.iter().any(|&o| o == 0 || o > 5) {
            return Err(Error::param("orders", "must be non-empty, each in [1, 5]"));
        }
        Ok(())
    }

    /// L2-normalized sparse count vector, sorted by index.
    pub fn features(&self, text: &str) -> Vec<(u32, f32)> {
        let toks: Vec<String> = text.split_whitespace().map(|w| w.to_lowercase()).collect();
        let mask = self.dim as u64 - 1;
        let mut idx: Vec<u32> = Vec::new();
        let mut buf = Vec::new();
        for &o in &self.orders {
            let o = o as usize;
            for w in toks.windows(o) {
                buf.clear();
                for (i, t) in w.iter().enumerate() {
                    if i > 0 {
                        buf.push(0);
                    }
                    buf.extend_from_slice(t.as_bytes());
                }
                idx.push((seeded_hash64(&buf, o as u64) & mask) as u32);
            }
        }
        idx.sort_unstable();
        let mut out: Vec<(u32, f32)> = Vec::new();
        for i in idx {
            match out.last_mut() {
                Some((j, c)) if *j == i => *c += 1.0,
                _ => out.push((i, 1.0)),
            }
        }
        let norm = out.iter().map(|(_, c)| c * c).sum::<f32>().sqrt();
        if norm > 0.0 {
            for (_, c) in out.iter_mut() {
                *c /= norm;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    #[serde(default)]
    pub features: FeatureSpec,
    #[serde(default = "default_epochs")]
    pub epochs: u32,
    /// Initial step size, decayed linearly to zero over training.
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_epochs() -> u32 {
    5
}
fn default_lr() -> f64 {
    0.1
}
fn default_batch() -> usize {
    1
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            features: FeatureSpec::default(),
            epochs: default_epochs(),
            learning_rate: default_lr(),
            batch_size: default_batch(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub dataset: String,
    pub recipe_hash: String,
    pub epochs: u32,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub train_examples: usize,
    pub valid_examples: usize,
    pub train_accuracy: f64,
    pub valid_accuracy: f64,
    pub train_auc: f64,
    pub valid_auc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub features: FeatureSpec,
    pub weights: Vec<f32>,
    pub bias: f32,
    pub meta: TrainingMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub text: String,
    /// 1 for acceptable text, 0 for low quality.
    pub label: u8,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Area under the ROC curve via the Mann-Whitney statistic; ties count half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let mut pairs: Vec<(f64, u8)> = scores.iter().copied().zip(labels.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let neg = labels.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return None;
    }
    // average ranks over tie groups
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < pairs.len() {
        let mut j = i;
        while j < pairs.len() && pairs[j].0 == pairs[i].0 {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        rank_sum_pos += avg_rank * pairs[i..j].iter().filter(|p| p.1 == 1).count() as f64;
        i = j;
    }
    Some((rank_sum_pos - pos * (pos + 1.0) / 2.0) / (pos * neg))
}

fn accuracy(scores: &[f64], labels: &[u8]) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    let right = scores.iter().zip(labels).filter(|(s, &l)| (**s >= 0.5) == (l == 1)).count();
    right as f64 / scores.len() as f64
}

impl ClassifierModel {
    /// Untrained model: zero weights and bias, so every score is 0.5.
    pub fn untrained(features: FeatureSpec) -> Result<Self> {
        features.validate()?;
        Ok(ClassifierModel {
            weights: vec![0.0; features.dim as usize],
            features,
            bias: 0.0,
            meta: TrainingMeta {
                dataset: String::new(),
                recipe_hash: String::new(),
                epochs: 0,
                learning_rate: 0.0,
                batch_size: 0,
                seed: 0,
                train_examples: 0,
                valid_examples: 0,
                train_accuracy: 0.0,
                valid_accuracy: 0.0,
                train_auc: 0.5,
                valid_auc: 0.5,
            },
        })
    }

    fn margin(&self, x: &[(u32, f32)]) -> f64 {
        self.bias as f64 + x.iter().map(|&(i, v)| self.weights[i as usize] as f64 * v as f64).sum::<f64>()
    }

    /// Mini-batch gradient descent on log loss. Feature extraction runs in
    /// parallel; updates are applied serially in a seeded order.
    pub fn train(train: &[Example], valid: &[Example], hp: &Hyperparams) -> Result<Self> {
        hp.features.validate()?;
        if hp.batch_size == 0 {
            return Err(Error::param("batch_size", "must be >= 1"));
        }
        if !(hp.learning_rate > 0.0 && hp.learning_rate.is_finite()) {
            return Err(Error::param("learning_rate", "must be > 0"));
        }
        let has = |set: &[Example], l: u8| set.iter().any(|e| e.label == l);
        if !has(train, 0) || !has(train, 1) {
            return Err(Error::Precondition("training split needs both labels".into()));
        }
        if valid.is_empty() {
            return Err(Error::Precondition("validation split is empty".into()));
        }
        if train.iter().chain(valid).any(|e| e.label > 1) {
            return Err(Error::param("label", "must be 0 or 1"));
        }
        let mut model = Self::untrained(hp.features.clone())?;
        let feats: Vec<Vec<(u32, f32)>> = train.par_iter().map(|e| hp.features.features(&e.text)).collect();
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut rng = text::rng(hp.seed);
        let total_steps = (hp.epochs as usize * train.len().div_ceil(hp.batch_size)).max(1);
        let mut step = 0usize;
        for _ in 0..hp.epochs {
            super::contaminate::fisher_yates(&mut order, &mut rng);
            for batch in order.chunks(hp.batch_size) {
                let lr = hp.learning_rate * (1.0 - step as f64 / total_steps as f64);
                step += 1;
                let grads: Vec<f64> = batch
                    .iter()
                    .map(|&i| sigmoid(model.margin(&feats[i])) - train[i].label as f64)
                    .collect();
                let scale = lr / batch.len() as f64;
                for (&i, g) in batch.iter().zip(grads) {
                    for &(j, v) in &feats[i] {
                        model.weights[j as usize] -= (scale * g * v as f64) as f32;
                    }
                    model.bias -= (scale * g) as f32;
                }
            }
        }
        let eval = |set: &[Example]| -> (Vec<f64>, Vec<u8>) {
            (
                set.par_iter().map(|e| model.score(&e.text)).collect(),
                set.iter().map(|e| e.label).collect(),
            )
        };
        let (ts, tl) = eval(train);
        let (vs, vl) = eval(valid);
        model.meta = TrainingMeta {
            dataset: String::new(),
            recipe_hash: String::new(),
            epochs: hp.epochs,
            learning_rate: hp.learning_rate,
            batch_size: hp.batch_size,
            seed: hp.seed,
            train_examples: train.len(),
            valid_examples: valid.len(),
            train_accuracy: accuracy(&ts, &tl),
            valid_accuracy: accuracy(&vs, &vl),
            train_auc: auc(&ts, &tl).unwrap_or(0.5),
            valid_auc: auc(&vs, &vl).unwrap_or(0.5),
        };
        Ok(model)
    }

    pub fn score(&self, text: &str) -> f64 {
        sigmoid(self.margin(&self.features.features(text)))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).at(dir)?;
        }
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).at(path)?);
        f.write_all(&self.to_bytes()).at(path)?;
        f.flush().at(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path).at(path)?.read_to_end(&mut bytes).at(path)?;
        Self::from_bytes(&bytes)
    }

    /// Header, feature spec, bias, JSON metadata, then nonzero weights.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.features.dim.to_le_bytes());
        out.push(self.features.orders.len() as u8);
        out.extend_from_slice(&self.features.orders);
        out.extend_from_slice(&self.bias.to_le_bytes());
        let meta = serde_json::to_vec(&self.meta).expect("metadata serializes");
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        let nz: Vec<(u32, f32)> = self
            .weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(i, w)| (i as u32, *w))
            .collect();
        out.extend_from_slice(&(nz.len() as u64).to_le_bytes());
        for (i, w) in nz {
            out.extend_from_slice(&i.to_le_bytes());
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::ModelFormat(m.to_string());
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated classifier file"))?;
            pos += n;
            Ok(s)
        };
        if take(8)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported format version {version}")));
        }
        let dim = u32::from_le_bytes(take(4)?.try_into().unwrap());
        let n_orders = take(1)?[0] as usize;
        let orders = take(n_orders)?.to_vec();
        let features = FeatureSpec { orders, dim };
        features.validate().map_err(|e| bad(&e.to_string()))?;
        let bias = f32::from_le_bytes(take(4)?.try_into().unwrap());
        let meta_len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let meta: TrainingMeta = serde_json::from_slice(take(meta_len)?)?;
        let nz = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let mut weights = vec![0.0f32; dim as usize];
        for _ in 0..nz {
            let i = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            let w = f32::from_le_bytes(take(4)?.try_into().unwrap());
            *weights.get_mut(i).ok_or_else(|| bad("weight index out of range"))? = w;
        }
        if pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(ClassifierModel {
            features,
            weights,
            bias,
            meta,
        })
    }
}

impl QualityScorer for ClassifierModel {
    fn score(&self, text: &str) -> f64 {
        ClassifierModel::score(self, text)
    }
}
