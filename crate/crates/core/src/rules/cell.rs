use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::stopwords;
use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::text::{self, is_punctuation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    MinWordCount,
    MaxWordCount,
    MeanWordLengthRange,
    PunctuationRatioMax,
    StopwordFractionMin,
    SpecialCharRatioMax,
    BlocklistWords,
    UrlBlocklist,
    RemoveSpan,
    LangConfidenceMin,
    Custom,
}

impl CellKind {
    pub const ALL: [CellKind; 11] = [
        CellKind::MinWordCount,
        CellKind::MaxWordCount,
        CellKind::MeanWordLengthRange,
        CellKind::PunctuationRatioMax,
        CellKind::StopwordFractionMin,
        CellKind::SpecialCharRatioMax,
        CellKind::BlocklistWords,
        CellKind::UrlBlocklist,
        CellKind::RemoveSpan,
        CellKind::LangConfidenceMin,
        CellKind::Custom,
    ];

    pub fn mode(self) -> Mode {
        match self {
            CellKind::RemoveSpan => Mode::Transform,
            _ => Mode::Drop,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Drop,
    Transform,
}

/// One configurable heuristic of a rule pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleCell {
    pub kind: CellKind,
    pub mode: Mode,
    #[serde(default)]
    pub params: Map<String, Value>,
}

impl RuleCell {
    /// Cell of `kind` in its natural mode with the given params.
    pub fn new(kind: CellKind, params: Value) -> Self {
        let params = match params {
            Value::Object(m) => m,
            _ => Map::new(),
        };
        RuleCell {
            kind,
            mode: kind.mode(),
            params,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Keep,
    Drop { reason: String },
    Transformed { doc: Document },
}

impl Verdict {
    pub fn is_hit(&self) -> bool {
        !matches!(self, Verdict::Keep)
    }
}

/// Externally supplied predicate for `custom` cells. A plugin reports
/// whether a document is a hit; errors and panics become a keep verdict plus
/// an incident.
pub trait RulePlugin: Send + Sync {
    fn name(&self) -> &str;
    fn hits(&self, doc: &Document, params: &Value) -> std::result::Result<bool, String>;
}

#[derive(Default, Clone)]
pub struct PluginRegistry {
    plugins: Vec<Arc<dyn RulePlugin>>,
}

impl PluginRegistry {
    pub fn register(&mut self, plugin: Arc<dyn RulePlugin>) {
        self.plugins.push(plugin);
    }

    fn get(&self, name: &str) -> Option<Arc<dyn RulePlugin>> {
        self.plugins.iter().find(|p| p.name() == name).cloned()
    }
}

#[derive(Clone)]
enum Check {
    MinWords(u64),
    MaxWords(u64),
    MeanWordLen {
        min: f64,
        max: f64,
    },
    PunctuationMax(f64),
    StopwordMin {
        min: f64,
        words: Arc<HashSet<String>>,
    },
    SpecialMax {
        max: f64,
        extra: Arc<HashSet<char>>,
    },
    Blocklist {
        words: Arc<HashSet<String>>,
        phrases: Arc<Vec<String>>,
        max_hits: u64,
    },
    UrlBlocklist(Arc<Vec<String>>),
    RemoveLiteral(String),
    RemoveRegex(Regex),
    LangConfidence {
        lang: String,
        min: f64,
    },
    Custom {
        all: bool,
        predicates: Arc<Vec<Predicate>>,
    },
}

#[derive(Clone)]
enum Measure {
    Words,
    Chars,
    Lines,
    Matches(Regex),
    Uppercase,
    Digit,
    Punctuation,
    Whitespace,
    Alphabetic,
    NonAscii,
}

#[derive(Clone)]
enum Predicate {
    Count {
        of: Measure,
        min: Option<f64>,
        max: Option<f64>,
    },
    Ratio {
        of: Measure,
        per_words: bool,
        min: Option<f64>,
        max: Option<f64>,
    },
    Pattern {
        regex: Regex,
        present: bool,
    },
    Plugin {
        plugin: Arc<dyn RulePlugin>,
        params: Value,
    },
}

/// A validated rule cell ready for evaluation.
#[derive(Clone)]
pub struct CompiledCell {
    pub cell: RuleCell,
    check: Check,
}

/// Result of evaluating a cell, including a non-fatal incident when a
/// custom predicate failed.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub verdict: Verdict,
    pub incident: Option<String>,
}

struct Params<'a> {
    map: &'a Map<String, Value>,
}

impl<'a> Params<'a> {
    fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for k in self.map.keys() {
            if !allowed.contains(&k.as_str()) {
                return Err(Error::param(
                    format!("params.{k}"),
                    format!("unknown parameter (allowed: {})", allowed.join(", ")),
                ));
            }
        }
        Ok(())
    }

    fn f64_opt(&self, key: &str) -> Result<Option<f64>> {
        match self.map.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => v
                .as_f64()
                .filter(|x| x.is_finite())
                .map(Some)
                .ok_or_else(|| Error::param(format!("params.{key}"), "expected a number")),
        }
    }

    fn ratio(&self, key: &str, default: f64) -> Result<f64> {
        let v = self.f64_opt(key)?.unwrap_or(default);
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::param(format!("params.{key}"), "ratio must be in [0, 1]"));
        }
        Ok(v)
    }

    fn count(&self, key: &str, default: u64) -> Result<u64> {
        match self.map.get(key) {
            None | Some(Value::Null) => Ok(default),
            Some(v) => v
                .as_u64()
                .ok_or_else(|| Error::param(format!("params.{key}"), "expected a non-negative integer")),
        }
    }

    fn non_negative(&self, key: &str, default: f64) -> Result<f64> {
        let v = self.f64_opt(key)?.unwrap_or(default);
        if v < 0.0 {
            return Err(Error::param(format!("params.{key}"), "must be >= 0"));
        }
        Ok(v)
    }

    fn string(&self, key: &str) -> Result<Option<String>> {
        match self.map.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(Error::param(format!("params.{key}"), "expected a string")),
        }
    }

    fn boolean(&self, key: &str, default: bool) -> Result<bool> {
        match self.map.get(key) {
            None | Some(Value::Null) => Ok(default),
            Some(Value::Bool(b)) => Ok(*b),
            Some(_) => Err(Error::param(format!("params.{key}"), "expected a boolean")),
        }
    }

    fn strings(&self, key: &str) -> Result<Vec<String>> {
        match self.map.get(key) {
            None | Some(Value::Null) => Ok(Vec::new()),
            Some(Value::Array(items)) => items
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    v.as_str()
                        .map(str::to_string)
                        .ok_or_else(|| Error::param(format!("params.{key}[{i}]"), "expected a string"))
                })
                .collect(),
            Some(_) => Err(Error::param(format!("params.{key}"), "expected an array of strings")),
        }
    }
}

fn stopword_set(lang: &str, custom: Vec<String>) -> Result<HashSet<String>> {
    if !custom.is_empty() {
        return Ok(custom.into_iter().map(|w| w.to_lowercase()).collect());
    }
    stopwords::for_lang(lang)
        .map(|ws| ws.iter().map(|w| w.to_string()).collect())
        .ok_or_else(|| Error::param("params.lang", format!("no stopword list for `{lang}`")))
}

fn compile_regex(field: &str, pattern: &str) -> Result<Regex> {
    Regex::new(pattern).map_err(|e| Error::param(field, e.to_string()))
}

fn compile_measure(obj: &Map<String, Value>, field: &str) -> Result<Measure> {
    let of = obj
        .get("of")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::param(format!("{field}.of"), "required string"))?;
    Ok(match of {
        "words" => Measure::Words,
        "chars" => Measure::Chars,
        "lines" => Measure::Lines,
        "uppercase" => Measure::Uppercase,
        "digit" => Measure::Digit,
        "punctuation" => Measure::Punctuation,
        "whitespace" => Measure::Whitespace,
        "alphabetic" => Measure::Alphabetic,
        "non_ascii" => Measure::NonAscii,
        "matches" => {
            let pat = obj
                .get("pattern")
                .and_then(Value::as_str)
                .ok_or_else(|| Error::param(format!("{field}.pattern"), "required for `matches`"))?;
            Measure::Matches(compile_regex(&format!("{field}.pattern"), pat)?)
        }
        other => return Err(Error::param(format!("{field}.of"), format!("unknown measure `{other}`"))),
    })
}

fn bound(obj: &Map<String, Value>, key: &str, field: &str) -> Result<Option<f64>> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v
            .as_f64()
            .map(Some)
            .ok_or_else(|| Error::param(format!("{field}.{key}"), "expected a number")),
    }
}

fn compile_predicate(v: &Value, field: &str, plugins: &PluginRegistry) -> Result<Predicate> {
    let obj = v.as_object().ok_or_else(|| Error::param(field, "predicate must be an object"))?;
    let ty = obj
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::param(format!("{field}.type"), "required string"))?;
    match ty {
        "count" => Ok(Predicate::Count {
            of: compile_measure(obj, field)?,
            min: bound(obj, "min", field)?,
            max: bound(obj, "max", field)?,
        }),
        "ratio" => {
            let per_words = match obj.get("per").and_then(Value::as_str).unwrap_or("chars") {
                "chars" => false,
                "words" => true,
                other => return Err(Error::param(format!("{field}.per"), format!("unknown denominator `{other}`"))),
            };
            let (min, max) = (bound(obj, "min", field)?, bound(obj, "max", field)?);
            for (k, b) in [("min", min), ("max", max)] {
                if let Some(b) = b {
                    if !per_words && !(0.0..=1.0).contains(&b) {
                        return Err(Error::param(format!("{field}.{k}"), "ratio must be in [0, 1]"));
                    }
                }
            }
            Ok(Predicate::Ratio {
                of: compile_measure(obj, field)?,
                per_words,
                min,
                max,
            })
        }
        "pattern" => {
            let pat = obj
                .get("regex")
                .and_then(Value::as_str)
                .ok_or_else(|| Error::param(format!("{field}.regex"), "required string"))?;
            Ok(Predicate::Pattern {
                regex: compile_regex(&format!("{field}.regex"), pat)?,
                present: obj.get("present").and_then(Value::as_bool).unwrap_or(true),
            })
        }
        "plugin" => {
            let name = obj
                .get("name")
                .and_then(Value::as_str)
                .ok_or_else(|| Error::param(format!("{field}.name"), "required string"))?;
            let plugin = plugins
                .get(name)
                .ok_or_else(|| Error::param(format!("{field}.name"), format!("no plugin named `{name}`")))?;
            Ok(Predicate::Plugin {
                plugin,
                params: obj.get("params").cloned().unwrap_or(Value::Null),
            })
        }
        other => Err(Error::param(format!("{field}.type"), format!("unknown predicate type `{other}`"))),
    }
}

impl CompiledCell {
    pub fn compile(cell: &RuleCell) -> Result<Self> {
        Self::compile_with(cell, &PluginRegistry::default())
    }

    pub fn compile_with(cell: &RuleCell, plugins: &PluginRegistry) -> Result<Self> {
        if cell.mode != cell.kind.mode() {
            return Err(Error::param(
                "mode",
                format!("{:?} cells only support {:?} mode", cell.kind, cell.kind.mode()),
            ));
        }
        let p = Params { map: &cell.params };
        let check = match cell.kind {
            CellKind::MinWordCount => {
                p.check_keys(&["min"])?;
                Check::MinWords(p.count("min", 0)?)
            }
            CellKind::MaxWordCount => {
                p.check_keys(&["max"])?;
                Check::MaxWords(p.count("max", u64::MAX)?)
            }
            CellKind::MeanWordLengthRange => {
                p.check_keys(&["min", "max"])?;
                let min = p.non_negative("min", 0.0)?;
                let max = p.non_negative("max", f64::MAX)?;
                if min > max {
                    return Err(Error::param("params.min", "min exceeds max"));
                }
                Check::MeanWordLen { min, max }
            }
            CellKind::PunctuationRatioMax => {
                p.check_keys(&["max"])?;
                Check::PunctuationMax(p.ratio("max", 1.0)?)
            }
            CellKind::StopwordFractionMin => {
                p.check_keys(&["min", "lang", "words"])?;
                let lang = p.string("lang")?.unwrap_or_else(|| "en".into());
                Check::StopwordMin {
                    min: p.ratio("min", 0.0)?,
                    words: Arc::new(stopword_set(&lang, p.strings("words")?)?),
                }
            }
            CellKind::SpecialCharRatioMax => {
                p.check_keys(&["max", "chars"])?;
                let extra = p
                    .string("chars")?
                    .unwrap_or_else(|| "#$%&*+<=>@[\\]^_`{|}~".to_string())
                    .chars()
                    .collect();
                Check::SpecialMax {
                    max: p.ratio("max", 1.0)?,
                    extra: Arc::new(extra),
                }
            }
            CellKind::BlocklistWords => {
                p.check_keys(&["words", "max_hits"])?;
                let (mut words, mut phrases) = (HashSet::new(), Vec::new());
                for w in p.strings("words")? {
                    let w = w.to_lowercase();
                    if w.split_whitespace().count() > 1 {
                        phrases.push(w);
                    } else if !w.trim().is_empty() {
                        words.insert(w.trim().to_string());
                    }
                }
                Check::Blocklist {
                    words: Arc::new(words),
                    phrases: Arc::new(phrases),
                    max_hits: p.count("max_hits", 0)?,
                }
            }
            CellKind::UrlBlocklist => {
                p.check_keys(&["domains"])?;
                let domains = p
                    .strings("domains")?
                    .into_iter()
                    .map(|d| d.trim().trim_start_matches('.').to_lowercase())
                    .filter(|d| !d.is_empty())
                    .collect();
                Check::UrlBlocklist(Arc::new(domains))
            }
            CellKind::RemoveSpan => {
                p.check_keys(&["pattern", "regex"])?;
                let pattern = p
                    .string("pattern")?
                    .filter(|s| !s.is_empty())
                    .ok_or_else(|| Error::param("params.pattern", "required non-empty string"))?;
                if p.boolean("regex", false)? {
                    Check::RemoveRegex(compile_regex("params.pattern", &pattern)?)
                } else {
                    Check::RemoveLiteral(pattern)
                }
            }
            CellKind::LangConfidenceMin => {
                p.check_keys(&["lang", "min"])?;
                let lang = p.string("lang")?.unwrap_or_else(|| "en".into());
                if stopwords::for_lang(&lang).is_none() {
                    return Err(Error::param("params.lang", format!("no stopword list for `{lang}`")));
                }
                Check::LangConfidence {
                    lang,
                    min: p.ratio("min", 0.0)?,
                }
            }
            CellKind::Custom => {
                p.check_keys(&["when", "predicates"])?;
                let all = match p.string("when")?.as_deref().unwrap_or("all") {
                    "all" => true,
                    "any" => false,
                    other => return Err(Error::param("params.when", format!("expected all|any, got `{other}`"))),
                };
                let preds = match cell.params.get("predicates") {
                    Some(Value::Array(items)) if !items.is_empty() => items
                        .iter()
                        .enumerate()
                        .map(|(i, v)| compile_predicate(v, &format!("params.predicates[{i}]"), plugins))
                        .collect::<Result<Vec<_>>>()?,
                    _ => return Err(Error::param("params.predicates", "required non-empty array")),
                };
                Check::Custom {
                    all,
                    predicates: Arc::new(preds),
                }
            }
        };
        Ok(CompiledCell { cell: cell.clone(), check })
    }

    pub fn apply(&self, doc: &Document) -> Verdict {
        self.evaluate(doc).verdict
    }

    pub fn evaluate(&self, doc: &Document) -> Evaluation {
        let drop = |reason: String| Evaluation {
            verdict: Verdict::Drop { reason },
            incident: None,
        };
        let keep = Evaluation {
            verdict: Verdict::Keep,
            incident: None,
        };
        let text = doc.text.as_str();
        match &self.check {
            Check::MinWords(min) => {
                let n = text::word_count(text) as u64;
                if n < *min {
                    return drop(format!("word count {n} < {min}"));
                }
            }
            Check::MaxWords(max) => {
                let n = text::word_count(text) as u64;
                if n > *max {
                    return drop(format!("word count {n} > {max}"));
                }
            }
            Check::MeanWordLen { min, max } => {
                let mean = mean_word_length(text);
                if mean < *min || mean > *max {
                    return drop(format!("mean word length {mean:.2} outside [{min}, {max}]"));
                }
            }
            Check::PunctuationMax(max) => {
                let r = char_ratio(text, is_punctuation);
                if r > *max {
                    return drop(format!("punctuation ratio {r:.3} > {max}"));
                }
            }
            Check::StopwordMin { min, words } => {
                let r = stopword_fraction(text, words);
                if r < *min {
                    return drop(format!("stopword fraction {r:.3} < {min}"));
                }
            }
            Check::SpecialMax { max, extra } => {
                let r = char_ratio(text, |c| extra.contains(&c) || (!c.is_alphanumeric() && !is_punctuation(c)));
                if r > *max {
                    return drop(format!("special char ratio {r:.3} > {max}"));
                }
            }
            Check::Blocklist { words, phrases, max_hits } => {
                let mut hits = text::lexical_tokens(text).iter().filter(|t| words.contains(t.as_str())).count() as u64;
                if !phrases.is_empty() {
                    let lower = text.to_lowercase();
                    hits += phrases.iter().map(|p| lower.matches(p.as_str()).count() as u64).sum::<u64>();
                }
                if hits > *max_hits {
                    return drop(format!("{hits} blocklisted terms > {max_hits}"));
                }
            }
            Check::UrlBlocklist(domains) => {
                if let Some(host) = doc
                    .url
                    .as_deref()
                    .and_then(|u| url::Url::parse(u).ok())
                    .and_then(|u| u.host_str().map(str::to_lowercase))
                {
                    if let Some(d) = domains.iter().find(|d| host == **d || host.ends_with(&format!(".{d}"))) {
                        return drop(format!("url host {host} blocked by {d}"));
                    }
                }
            }
            Check::RemoveLiteral(pat) => {
                if text.contains(pat.as_str()) {
                    return Evaluation {
                        verdict: Verdict::Transformed {
                            doc: doc.with_text(text.replace(pat.as_str(), "")),
                        },
                        incident: None,
                    };
                }
            }
            Check::RemoveRegex(re) => {
                if re.is_match(text) {
                    let out = re.replace_all(text, "").into_owned();
                    if out != text {
                        return Evaluation {
                            verdict: Verdict::Transformed { doc: doc.with_text(out) },
                            incident: None,
                        };
                    }
                }
            }
            Check::LangConfidence { lang, min } => {
                let c = lang_confidence(text, lang);
                if c < *min {
                    return drop(format!("{lang} confidence {c:.3} < {min}"));
                }
            }
            Check::Custom { all, predicates } => {
                let mut results = Vec::with_capacity(predicates.len());
                for pred in predicates.iter() {
                    match eval_predicate(pred, doc) {
                        Ok(b) => results.push(b),
                        Err(msg) => {
                            log::warn!("custom cell failed on doc {}: {msg}", doc.id);
                            return Evaluation {
                                verdict: Verdict::Keep,
                                incident: Some(msg),
                            };
                        }
                    }
                }
                let hit = if *all {
                    results.iter().all(|b| *b)
                } else {
                    results.iter().any(|b| *b)
                };
                if hit {
                    return drop("custom predicate matched".into());
                }
            }
        }
        keep
    }
}

/// Evaluates `cell` on `doc`. Referentially transparent.
pub fn apply_cell(cell: &CompiledCell, doc: &Document) -> Verdict {
    cell.apply(doc)
}

pub fn mean_word_length(text: &str) -> f64 {
    let (mut n, mut total) = (0usize, 0usize);
    for w in text::words(text) {
        n += 1;
        total += w.chars().count();
    }
    if n == 0 {
        0.0
    } else {
        total as f64 / n as f64
    }
}

/// Fraction of non-whitespace characters satisfying `pred`.
pub fn char_ratio(text: &str, pred: impl Fn(char) -> bool) -> f64 {
    let (mut n, mut hits) = (0usize, 0usize);
    for c in text.chars().filter(|c| !c.is_whitespace()) {
        n += 1;
        if pred(c) {
            hits += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        hits as f64 / n as f64
    }
}

fn stopword_fraction(text: &str, words: &HashSet<String>) -> f64 {
    let toks = text::lexical_tokens(text);
    if toks.is_empty() {
        return 0.0;
    }
    toks.iter().filter(|t| words.contains(t.as_str())).count() as f64 / toks.len() as f64
}

/// Stopword coverage of `lang` relative to the summed coverage of all
/// bundled languages; 0 when no bundled stopword occurs.
pub fn lang_confidence(text: &str, lang: &str) -> f64 {
    let toks = text::lexical_tokens(text);
    if toks.is_empty() {
        return 0.0;
    }
    let mut target = 0.0;
    let mut total = 0.0;
    for (l, list) in stopwords::LANGS {
        let cov = toks.iter().filter(|t| list.contains(&t.as_str())).count() as f64 / toks.len() as f64;
        total += cov;
        if *l == lang {
            target = cov;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        target / total
    }
}

fn measure(m: &Measure, text: &str) -> f64 {
    let chars = |pred: fn(char) -> bool| text.chars().filter(|c| pred(*c)).count() as f64;
    match m {
        Measure::Words => text::word_count(text) as f64,
        Measure::Chars => text.chars().count() as f64,
        Measure::Lines => text.lines().count() as f64,
        Measure::Matches(re) => re.find_iter(text).count() as f64,
        Measure::Uppercase => chars(char::is_uppercase),
        Measure::Digit => chars(|c| c.is_numeric()),
        Measure::Punctuation => chars(is_punctuation),
        Measure::Whitespace => chars(char::is_whitespace),
        Measure::Alphabetic => chars(char::is_alphabetic),
        Measure::NonAscii => chars(|c| !c.is_ascii()),
    }
}

fn within(v: f64, min: Option<f64>, max: Option<f64>) -> bool {
    min.is_none_or(|m| v >= m) && max.is_none_or(|m| v <= m)
}

fn eval_predicate(pred: &Predicate, doc: &Document) -> std::result::Result<bool, String> {
    let text = doc.text.as_str();
    match pred {
        Predicate::Count { of, min, max } => Ok(within(measure(of, text), *min, *max)),
        Predicate::Ratio { of, per_words, min, max } => {
            let denom = if *per_words {
                text::word_count(text) as f64
            } else {
                text.chars().filter(|c| !c.is_whitespace()).count() as f64
            };
            let v = if denom == 0.0 { 0.0 } else { measure(of, text) / denom };
            Ok(within(v, *min, *max))
        }
        Predicate::Pattern { regex, present } => Ok(regex.is_match(text) == *present),
        Predicate::Plugin { plugin, params } => match catch_unwind(AssertUnwindSafe(|| plugin.hits(doc, params))) {
            Ok(r) => r.map_err(|e| format!("plugin `{}`: {e}", plugin.name())),
            Err(_) => Err(format!("plugin `{}` panicked", plugin.name())),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn doc(text: &str) -> Document {
        Document::new("d", text)
    }

    fn compiled(kind: CellKind, params: Value) -> CompiledCell {
        CompiledCell::compile(&RuleCell::new(kind, params)).unwrap()
    }

    #[test]
    fn min_word_count_drops_short_doc() {
        let c = compiled(CellKind::MinWordCount, json!({"min": 50}));
        let ten = "w ".repeat(10);
        assert!(matches!(apply_cell(&c, &doc(&ten)), Verdict::Drop { .. }));
        let fifty = "w ".repeat(50);
        assert_eq!(apply_cell(&c, &doc(&fifty)), Verdict::Keep);
    }

    #[test]
    fn punctuation_ratio_of_bangs_is_one() {
        let c = compiled(CellKind::PunctuationRatioMax, json!({"max": 0.3}));
        assert!(matches!(apply_cell(&c, &doc("!!!!")), Verdict::Drop { .. }));
        assert_eq!(char_ratio("!!!!", is_punctuation), 1.0);
    }

    #[test]
    fn remove_span_excises_pattern_only() {
        let c = compiled(CellKind::RemoveSpan, json!({"pattern": " BUY NOW at shop.example!"}));
        let d = doc("The river was calm BUY NOW at shop.example! and the boats drifted.\n");
        match apply_cell(&c, &d) {
            Verdict::Transformed { doc } => {
                assert_eq!(doc.text, "The river was calm and the boats drifted.\n");
                assert_eq!(doc.id, d.id);
            }
            v => panic!("unexpected {v:?}"),
        }
        assert_eq!(apply_cell(&c, &doc("nothing to see")), Verdict::Keep);
    }

    #[test]
    fn remove_span_regex() {
        let c = compiled(CellKind::RemoveSpan, json!({"pattern": r"\[ad:[^\]]*\]", "regex": true}));
        match apply_cell(&c, &doc("a [ad: cheap] b [ad:x]")) {
            Verdict::Transformed { doc } => assert_eq!(doc.text, "a  b "),
            v => panic!("unexpected {v:?}"),
        }
    }

    #[test]
    fn mode_mismatch_rejected() {
        let mut cell = RuleCell::new(CellKind::MinWordCount, json!({"min": 3}));
        cell.mode = Mode::Transform;
        assert!(CompiledCell::compile(&cell).is_err());
    }

    #[test]
    fn invalid_params_name_the_field() {
        let err = CompiledCell::compile(&RuleCell::new(CellKind::PunctuationRatioMax, json!({"max": 1.5})))
            .err()
            .unwrap();
        match err {
            Error::InvalidParam { field, .. } => assert_eq!(field, "params.max"),
            e => panic!("{e}"),
        }
        assert!(CompiledCell::compile(&RuleCell::new(CellKind::MinWordCount, json!({"min": -1}))).is_err());
        assert!(CompiledCell::compile(&RuleCell::new(CellKind::MinWordCount, json!({"mni": 1}))).is_err());
    }

    #[test]
    fn stopword_and_lang_cells() {
        let en = "the cat sat on the mat and it was happy with the sun";
        let de = "der Hund ist mit dem Ball und nicht mit der Katze";
        let sw = compiled(CellKind::StopwordFractionMin, json!({"min": 0.3}));
        assert_eq!(apply_cell(&sw, &doc(en)), Verdict::Keep);
        assert!(apply_cell(&sw, &doc("qwe rty uio")).is_hit());
        let lang = compiled(CellKind::LangConfidenceMin, json!({"lang": "en", "min": 0.6}));
        assert_eq!(apply_cell(&lang, &doc(en)), Verdict::Keep);
        assert!(apply_cell(&lang, &doc(de)).is_hit());
        assert!(lang_confidence(de, "de") > 0.6);
    }

    #[test]
    fn blocklist_words_and_phrases() {
        let c = compiled(CellKind::BlocklistWords, json!({"words": ["casino", "free money"]}));
        assert!(apply_cell(&c, &doc("Visit our Casino today")).is_hit());
        assert!(apply_cell(&c, &doc("get FREE MONEY now")).is_hit());
        assert_eq!(apply_cell(&c, &doc("a quiet library")), Verdict::Keep);
    }

    #[test]
    fn url_blocklist_matches_subdomains() {
        let c = compiled(CellKind::UrlBlocklist, json!({"domains": ["spam.example"]}));
        let mut d = doc("text");
        d.url = Some("https://www.spam.example/page".into());
        assert!(apply_cell(&c, &d).is_hit());
        d.url = Some("https://notspam.example/".into());
        assert_eq!(apply_cell(&c, &d), Verdict::Keep);
        d.url = None;
        assert_eq!(apply_cell(&c, &d), Verdict::Keep);
    }

    #[test]
    fn mean_word_length_and_special_chars() {
        let c = compiled(CellKind::MeanWordLengthRange, json!({"min": 3, "max": 10}));
        assert!(apply_cell(&c, &doc("a b c d")).is_hit());
        assert_eq!(apply_cell(&c, &doc("quite normal words")), Verdict::Keep);
        let s = compiled(CellKind::SpecialCharRatioMax, json!({"max": 0.2}));
        assert!(apply_cell(&s, &doc("#### @@@@ ab")).is_hit());
        assert_eq!(apply_cell(&s, &doc("plain text, really.")), Verdict::Keep);
    }

    #[test]
    fn custom_predicates_compose() {
        let c = compiled(
            CellKind::Custom,
            json!({"when": "all", "predicates": [
                {"type": "ratio", "of": "digit", "per": "chars", "min": 0.5},
                {"type": "count", "of": "words", "max": 5}
            ]}),
        );
        assert!(apply_cell(&c, &doc("12345 678 90")).is_hit());
        assert_eq!(apply_cell(&c, &doc("12345 678 90 a b c d e f")), Verdict::Keep);
        let any = compiled(
            CellKind::Custom,
            json!({"when": "any", "predicates": [{"type": "pattern", "regex": "(?i)lorem ipsum"}]}),
        );
        assert!(apply_cell(&any, &doc("Lorem Ipsum dolor")).is_hit());
    }

    struct Exploding;
    impl RulePlugin for Exploding {
        fn name(&self) -> &str {
            "exploding"
        }
        fn hits(&self, doc: &Document, _: &Value) -> std::result::Result<bool, String> {
            if doc.text.contains("boom") {
                panic!("boom");
            }
            Err("cannot decide".into())
        }
    }

    #[test]
    fn failing_plugin_keeps_document_and_reports_incident() {
        let mut reg = PluginRegistry::default();
        reg.register(Arc::new(Exploding));
        let cell = RuleCell::new(CellKind::Custom, json!({"predicates": [{"type": "plugin", "name": "exploding"}]}));
        let c = CompiledCell::compile_with(&cell, &reg).unwrap();
        for text in ["boom", "quiet"] {
            let e = c.evaluate(&doc(text));
            assert_eq!(e.verdict, Verdict::Keep);
            assert!(e.incident.is_some());
        }
        assert!(CompiledCell::compile(&cell).is_err(), "unknown plugin must be rejected");
    }

    #[test]
    fn apply_is_pure() {
        let c = compiled(CellKind::RemoveSpan, json!({"pattern": "x"}));
        let d = doc("axbxc");
        assert_eq!(apply_cell(&c, &d), apply_cell(&c, &d));
    }
}
