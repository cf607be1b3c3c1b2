//! On-disk corpus store: line-delimited JSON shards plus a JSON registry of
//! corpora and the lineage between raw and derived corpora.
//!
//! Layout under the data root:
//!
//! ```text
//! registry.json
//! corpora/<name>/shard-00000.jsonl
//! corpora/.staging-<name>/...      (in-flight outputs, removed on restart)
//! ```

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::text;

/// Environment variable naming the data root directory.
pub const DATA_ROOT_ENV: &str = "OASIS_DATA_ROOT";

const REGISTRY_FILE: &str = "registry.json";
const STAGING_PREFIX: &str = ".staging-";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub source: String,
    #[serde(default)]
    pub lang: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            source: String::new(),
            lang: String::new(),
            url: None,
            meta: BTreeMap::new(),
        }
    }

    pub fn word_count(&self) -> usize {
        text::word_count(&self.text)
    }

    /// Same document with replaced text.
    pub fn with_text(&self, text: String) -> Self {
        Document { text, ..self.clone() }
    }
}

/// Input record schema. Everything but `text` is optional.
#[derive(Debug, Deserialize)]
struct RawRecord {
    #[serde(default)]
    id: Option<String>,
    text: String,
    #[serde(default)]
    url: Option<String>,
    #[serde(default)]
    source: Option<String>,
    #[serde(default)]
    lang: Option<String>,
    #[serde(default)]
    meta: Option<serde_json::Map<String, serde_json::Value>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lineage {
    pub parent: String,
    pub op: String,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusHandle {
    pub name: String,
    /// Shard paths relative to the data root, in corpus order.
    pub shards: Vec<String>,
    pub doc_count: u64,
    pub byte_size: u64,
    #[serde(default)]
    pub lineage: Option<Lineage>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestSummary {
    pub corpus: CorpusHandle,
    pub files: usize,
    pub skipped_malformed: u64,
    pub skipped_duplicate: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LineageEdge {
    pub child: String,
    pub parent: String,
    pub op: String,
    pub config_hash: String,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Registry {
    version: u32,
    corpora: BTreeMap<String, CorpusHandle>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ShardInfo {
    pub index: usize,
    pub docs: u64,
    pub bytes: u64,
}

pub struct CorpusStore {
    root: PathBuf,
    registry: RwLock<Registry>,
    /// Modification stamp of the registry file as last read or written.
    stamp: Mutex<Option<(std::time::SystemTime, u64)>>,
    id_index: Mutex<HashMap<String, Arc<HashSet<String>>>>,
}

impl std::fmt::Debug for CorpusStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CorpusStore").field("root", &self.root).finish()
    }
}

fn file_stamp(path: &Path) -> Option<(std::time::SystemTime, u64)> {
    let m = fs::metadata(path).ok()?;
    Some((m.modified().ok()?, m.len()))
}

fn load_registry(path: &Path) -> Result<Registry> {
    if !path.exists() {
        return Ok(Registry {
            version: 1,
            corpora: BTreeMap::new(),
        });
    }
    let bytes = fs::read(path).at(path)?;
    Ok(serde_json::from_slice(&bytes)?)
}

pub fn validate_name(name: &str) -> Result<()> {
    let ok = !name.is_empty() && !name.starts_with('.') && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::param(
            "name",
            format!("`{name}` must be non-empty [A-Za-z0-9_.-] and not start with '.'"),
        ))
    }
}

impl CorpusStore {
    /// Opens (creating if needed) the store rooted at `root`. Leftover
    /// staging directories from interrupted runs are deleted.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let corpora = root.join("corpora");
        fs::create_dir_all(&corpora).at(&corpora)?;
        for entry in fs::read_dir(&corpora).at(&corpora)? {
            let entry = entry.at(&corpora)?;
            if entry.file_name().to_string_lossy().starts_with(STAGING_PREFIX) {
                fs::remove_dir_all(entry.path()).at(entry.path())?;
            }
        }
        let reg_path = root.join(REGISTRY_FILE);
        let registry = load_registry(&reg_path)?;
        Ok(CorpusStore {
            stamp: Mutex::new(file_stamp(&reg_path)),
            root,
            registry: RwLock::new(registry),
            id_index: Mutex::new(HashMap::new()),
        })
    }

    /// Opens the store named by `OASIS_DATA_ROOT`, falling back to `./oasis-data`.
    pub fn from_env() -> Result<Self> {
        let root = std::env::var_os(DATA_ROOT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("oasis-data"));
        Self::open(root)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// The registry, re-read first if another process has replaced the file.
    fn registry(&self) -> std::sync::RwLockReadGuard<'_, Registry> {
        let path = self.root.join(REGISTRY_FILE);
        let now = file_stamp(&path);
        let stale = now != *self.stamp.lock().unwrap();
        if stale {
            match load_registry(&path) {
                Ok(fresh) => {
                    let mut reg = self.registry.write().unwrap();
                    *reg = fresh;
                    *self.stamp.lock().unwrap() = now;
                }
                Err(e) => log::warn!("keeping cached registry: {e}"),
            }
        }
        self.registry.read().unwrap()
    }

    pub fn get(&self, name: &str) -> Result<CorpusHandle> {
        self.registry()
            .corpora
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownCorpus(name.to_string()))
    }

    pub fn list(&self) -> Vec<CorpusHandle> {
        self.registry().corpora.values().cloned().collect()
    }

    pub fn ensure_name_free(&self, name: &str) -> Result<()> {
        validate_name(name)?;
        if self.registry().corpora.contains_key(name) {
            return Err(Error::NameTaken(name.to_string()));
        }
        Ok(())
    }

    pub fn shard_path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn persist(&self, reg: &Registry) -> Result<()> {
        let path = self.root.join(REGISTRY_FILE);
        let tmp = self.root.join(format!("{REGISTRY_FILE}.tmp"));
        let bytes = serde_json::to_vec_pretty(reg)?;
        fs::write(&tmp, bytes).at(&tmp)?;
        fs::rename(&tmp, &path).at(&path)?;
        *self.stamp.lock().unwrap() = file_stamp(&path);
        Ok(())
    }

    /// Reads line-delimited records from every file matching `path_glob`
    /// (sorted by path) into a new corpus. Documents without an id get
    /// `f<file index>-l<line number>`. Malformed lines and repeated ids are
    /// skipped and counted.
    pub fn ingest(&self, path_glob: &str, name: &str, shard_size_bytes: u64) -> Result<IngestSummary> {
        if shard_size_bytes == 0 {
            return Err(Error::param("shard_size_bytes", "must be > 0"));
        }
        self.ensure_name_free(name)?;
        let mut files: Vec<PathBuf> = glob::glob(path_glob)
            .map_err(|e| Error::param("path_glob", e.to_string()))?
            .filter_map(|p| p.ok())
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::NotFound(format!("no files match `{path_glob}`")));
        }

        let staging = self.staging(name)?;
        let mut writer = SequentialWriter::new(&staging, shard_size_bytes);
        let mut seen = HashSet::new();
        let (mut malformed, mut duplicate) = (0u64, 0u64);
        for (file_idx, path) in files.iter().enumerate() {
            let file = File::open(path).at(path)?;
            let mut reader = BufReader::new(file);
            let mut buf = Vec::new();
            let mut line_no = 0u64;
            loop {
                buf.clear();
                let n = reader.read_until(b'\n', &mut buf).at(path)?;
                if n == 0 {
                    break;
                }
                line_no += 1;
                let line = match std::str::from_utf8(&buf) {
                    Ok(s) => s.trim(),
                    Err(_) => {
                        malformed += 1;
                        continue;
                    }
                };
                if line.is_empty() {
                    continue;
                }
                let Some(doc) = parse_record(line, file_idx, line_no, name) else {
                    malformed += 1;
                    continue;
                };
                if !seen.insert(doc.id.clone()) {
                    duplicate += 1;
                    continue;
                }
                writer.write(&doc)?;
            }
        }
        writer.finish()?;
        let corpus = self.commit(staging, name, None)?;
        log::info!(
            "ingested {} docs into `{name}` ({malformed} malformed, {duplicate} duplicate ids skipped)",
            corpus.doc_count
        );
        Ok(IngestSummary {
            corpus,
            files: files.len(),
            skipped_malformed: malformed,
            skipped_duplicate: duplicate,
        })
    }

    /// Starts an output corpus in a staging directory. Nothing is registered
    /// until [`CorpusStore::register_derived`] commits it; dropping the
    /// `Staging` deletes the partial output.
    pub fn staging(&self, name: &str) -> Result<Staging> {
        self.ensure_name_free(name)?;
        let dir = self
            .root
            .join("corpora")
            .join(format!("{STAGING_PREFIX}{name}-{}", std::process::id()));
        if dir.exists() {
            fs::remove_dir_all(&dir).at(&dir)?;
        }
        fs::create_dir_all(&dir).at(&dir)?;
        Ok(Staging {
            dir,
            name: name.to_string(),
            shards: Mutex::new(Vec::new()),
            committed: false,
        })
    }

    /// Registers a derived corpus whose shards were written to `staging`.
    pub fn register_derived(&self, parent: &str, name: &str, op_label: &str, config_hash: &str, staging: Staging) -> Result<CorpusHandle> {
        self.get(parent)?;
        let lineage = Lineage {
            parent: parent.to_string(),
            op: op_label.to_string(),
            config_hash: config_hash.to_string(),
        };
        self.commit(staging, name, Some(lineage))
    }

    fn commit(&self, mut staging: Staging, name: &str, lineage: Option<Lineage>) -> Result<CorpusHandle> {
        if staging.name != name {
            return Err(Error::param("name", "staging area belongs to another corpus"));
        }
        let mut reg = self.registry.write().unwrap();
        // another process may have registered corpora since we last looked
        *reg = load_registry(&self.root.join(REGISTRY_FILE))?;
        if reg.corpora.contains_key(name) {
            return Err(Error::NameTaken(name.to_string()));
        }
        if let Some(lin) = &lineage {
            // Walk up from the parent; meeting `name` would close a cycle.
            let mut cursor = Some(lin.parent.clone());
            while let Some(c) = cursor {
                if c == name {
                    return Err(Error::LineageCycle(name.to_string()));
                }
                cursor = reg.corpora.get(&c).and_then(|h| h.lineage.as_ref().map(|l| l.parent.clone()));
            }
        }

        let final_dir = self.root.join("corpora").join(name);
        if final_dir.exists() {
            fs::remove_dir_all(&final_dir).at(&final_dir)?;
        }
        fs::rename(&staging.dir, &final_dir).at(&final_dir)?;
        staging.committed = true;

        let mut infos = std::mem::take(&mut *staging.shards.lock().unwrap());
        infos.sort_by_key(|s| s.index);
        let mut shards = Vec::new();
        let (mut docs, mut bytes) = (0, 0);
        for info in infos {
            let file = shard_file_name(info.index);
            let path = final_dir.join(&file);
            if info.docs == 0 {
                let _ = fs::remove_file(&path);
                continue;
            }
            shards.push(format!("corpora/{name}/{file}"));
            docs += info.docs;
            bytes += info.bytes;
        }
        let handle = CorpusHandle {
            name: name.to_string(),
            shards,
            doc_count: docs,
            byte_size: bytes,
            lineage,
        };
        reg.corpora.insert(name.to_string(), handle.clone());
        self.persist(&reg)?;
        Ok(handle)
    }

    /// Derivation chain from `name` back to its root corpus.
    pub fn lineage_chain(&self, name: &str) -> Result<Vec<LineageEdge>> {
        let reg = self.registry();
        let mut edges = Vec::new();
        let mut cursor = reg.corpora.get(name).ok_or_else(|| Error::UnknownCorpus(name.to_string()))?;
        while let Some(lin) = &cursor.lineage {
            edges.push(LineageEdge {
                child: cursor.name.clone(),
                parent: lin.parent.clone(),
                op: lin.op.clone(),
                config_hash: lin.config_hash.clone(),
            });
            if edges.len() > reg.corpora.len() {
                return Err(Error::LineageCycle(name.to_string()));
            }
            match reg.corpora.get(&lin.parent) {
                Some(p) => cursor = p,
                None => break,
            }
        }
        Ok(edges)
    }

    pub fn read_shard(&self, rel: &str) -> Result<Vec<Document>> {
        let path = self.shard_path(rel);
        let file = File::open(&path).at(&path)?;
        let mut docs = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line.at(&path)?;
            if line.is_empty() {
                continue;
            }
            docs.push(serde_json::from_str(&line)?);
        }
        Ok(docs)
    }

    /// Streams every document of the corpus in order.
    pub fn iter_docs(&self, handle: &CorpusHandle) -> DocIter<'_> {
        DocIter {
            store: self,
            shards: handle.shards.clone(),
            next_shard: 0,
            current: None,
        }
    }

    pub fn load_all(&self, handle: &CorpusHandle) -> Result<Vec<Document>> {
        self.iter_docs(handle).collect()
    }

    /// Single-pass reservoir sample of `min(n, doc_count)` documents,
    /// returned in corpus order.
    pub fn sample(&self, handle: &CorpusHandle, n: usize, seed: u64) -> Result<Vec<Document>> {
        reservoir(self.iter_docs(handle), n, seed)
    }

    pub fn contains_doc(&self, corpus: &str, doc_id: &str) -> Result<bool> {
        let index = {
            let cache = self.id_index.lock().unwrap();
            cache.get(corpus).cloned()
        };
        let index = match index {
            Some(ix) => ix,
            None => {
                let handle = self.get(corpus)?;
                let mut ids = HashSet::new();
                for doc in self.iter_docs(&handle) {
                    ids.insert(doc?.id);
                }
                let ids = Arc::new(ids);
                self.id_index.lock().unwrap().insert(corpus.to_string(), ids.clone());
                ids
            }
        };
        Ok(index.contains(doc_id))
    }

    pub fn find_doc(&self, corpus: &str, doc_id: &str) -> Result<Option<Document>> {
        let handle = self.get(corpus)?;
        for doc in self.iter_docs(&handle) {
            let doc = doc?;
            if doc.id == doc_id {
                return Ok(Some(doc));
            }
        }
        Ok(None)
    }
}

/// Reservoir sampling (Algorithm R) over a fallible stream; output keeps
/// stream order.
pub fn reservoir<T, I>(items: I, n: usize, seed: u64) -> Result<Vec<T>>
where
    I: IntoIterator<Item = Result<T>>,
{
    let mut rng = text::rng(seed);
    let mut slots: Vec<(usize, T)> = Vec::with_capacity(n.min(1 << 16));
    if n == 0 {
        return Ok(Vec::new());
    }
    for (i, doc) in items.into_iter().enumerate() {
        let doc = doc?;
        if i < n {
            slots.push((i, doc));
        } else {
            let j = rng.random_range(0..=i);
            if j < n {
                slots[j] = (i, doc);
            }
        }
    }
    slots.sort_by_key(|(i, _)| *i);
    Ok(slots.into_iter().map(|(_, d)| d).collect())
}

fn parse_record(line: &str, file_idx: usize, line_no: u64, corpus: &str) -> Option<Document> {
    let raw: RawRecord = serde_json::from_str(line).ok()?;
    let id = match raw.id {
        Some(id) if id.is_empty() => return None,
        Some(id) => id,
        None => format!("f{file_idx:04}-l{line_no:08}"),
    };
    let meta = raw
        .meta
        .unwrap_or_default()
        .into_iter()
        .map(|(k, v)| match v {
            serde_json::Value::String(s) => (k, s),
            other => (k, other.to_string()),
        })
        .collect();
    Some(Document {
        id,
        text: raw.text,
        source: raw.source.unwrap_or_else(|| corpus.to_string()),
        lang: raw.lang.unwrap_or_default(),
        url: raw.url,
        meta,
    })
}

fn shard_file_name(index: usize) -> String {
    format!("shard-{index:05}.jsonl")
}

pub struct DocIter<'a> {
    store: &'a CorpusStore,
    shards: Vec<String>,
    next_shard: usize,
    current: Option<std::io::Lines<BufReader<File>>>,
}

impl Iterator for DocIter<'_> {
    type Item = Result<Document>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(lines) = &mut self.current {
                match lines.next() {
                    Some(Ok(line)) if line.is_empty() => continue,
                    Some(Ok(line)) => return Some(serde_json::from_str(&line).map_err(Error::from)),
                    Some(Err(e)) => {
                        let path = self.store.shard_path(&self.shards[self.next_shard - 1]);
                        return Some(Err(Error::io(path, e)));
                    }
                    None => self.current = None,
                }
            }
            let rel = self.shards.get(self.next_shard)?;
            let path = self.store.shard_path(rel);
            self.next_shard += 1;
            match File::open(&path) {
                Ok(f) => self.current = Some(BufReader::new(f).lines()),
                Err(e) => return Some(Err(Error::io(path, e))),
            }
        }
    }
}

/// Output area of a corpus under construction. Shards may be written in
/// parallel by index; the corpus only appears in the registry once committed.
pub struct Staging {
    dir: PathBuf,
    name: String,
    shards: Mutex<Vec<ShardInfo>>,
    committed: bool,
}

impl Staging {
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Writes shard `index` in full. Empty shards are dropped at commit.
    pub fn write_shard<'d, I>(&self, index: usize, docs: I) -> Result<ShardInfo>
    where
        I: IntoIterator<Item = &'d Document>,
    {
        let path = self.dir.join(shard_file_name(index));
        let file = File::create(&path).at(&path)?;
        let mut w = BufWriter::new(file);
        let (mut count, mut bytes) = (0u64, 0u64);
        for doc in docs {
            let mut line = serde_json::to_vec(doc)?;
            line.push(b'\n');
            w.write_all(&line).at(&path)?;
            count += 1;
            bytes += line.len() as u64;
        }
        w.flush().at(&path)?;
        let info = ShardInfo { index, docs: count, bytes };
        self.shards.lock().unwrap().push(info);
        Ok(info)
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.dir);
        }
    }
}

/// Writes documents in order, rolling to a new shard before a line would
/// push the current shard past `shard_size` bytes. A single record larger
/// than `shard_size` occupies a shard on its own.
pub struct SequentialWriter<'a> {
    staging: &'a Staging,
    shard_size: u64,
    buffer: Vec<Document>,
    buffer_bytes: u64,
    index: usize,
}

impl<'a> SequentialWriter<'a> {
    pub fn new(staging: &'a Staging, shard_size: u64) -> Self {
        SequentialWriter {
            staging,
            shard_size,
            buffer: Vec::new(),
            buffer_bytes: 0,
            index: 0,
        }
    }

    pub fn write(&mut self, doc: &Document) -> Result<()> {
        let len = serde_json::to_vec(doc)?.len() as u64 + 1;
        if !self.buffer.is_empty() && self.buffer_bytes + len > self.shard_size {
            self.flush_shard()?;
        }
        self.buffer.push(doc.clone());
        self.buffer_bytes += len;
        Ok(())
    }

    fn flush_shard(&mut self) -> Result<()> {
        self.staging.write_shard(self.index, &self.buffer)?;
        self.index += 1;
        self.buffer.clear();
        self.buffer_bytes = 0;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        if !self.buffer.is_empty() {
            self.flush_shard()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_jsonl(dir: &Path, name: &str, lines: &[&str]) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, lines.join("\n")).unwrap();
        p
    }

    #[test]
    fn ingest_three_records_single_shard() {
        let tmp = tempfile::tempdir().unwrap();
        let store = CorpusStore::open(tmp.path().join("root")).unwrap();
        let p = write_jsonl(
            tmp.path(),
            "a.jsonl",
            &[r#"{"text":"one"}"#, r#"{"text":"two","id":"x"}"#, r#"{"text":"three"}"#],
        );
        let s = store.ingest(p.to_str().unwrap(), "raw", 1 << 30).unwrap();
        assert_eq!(s.corpus.doc_count, 3);
        assert_eq!(s.corpus.shards.len(), 1);
        let docs = store.load_all(&s.corpus).unwrap();
        assert_eq!(docs[0].id, "f0000-l00000001");
        assert_eq!(docs[1].id, "x");
        assert_eq!(docs[2].source, "raw");
    }

    #[test]
    fn ingest_empty_file() {
        let tmp = tempfile::tempdir().unwrap();
        let store = CorpusStore::open(tmp.path().join("root")).unwrap();
        let p = write_jsonl(tmp.path(), "e.jsonl", &[]);
        let s = store.ingest(p.to_str().unwrap(), "empty", 100).unwrap();
        assert_eq!(s.corpus.doc_count, 0);
        assert!(s.corpus.shards.is_empty());
    }

    #[test]
    fn ingest_skips_malformed() {
        let tmp = tempfile::tempdir().unwrap();
        let store = CorpusStore::open(tmp.path().join("root")).unwrap();
        let p = write_jsonl(
            tmp.path(),
            "m.jsonl",
            &[r#"{"text":"one"}"#, r#"{"txt":"broken"#, r#"{"text":"three"}"#],
        );
        let s = store.ingest(p.to_str().unwrap(), "m", 1000).unwrap();
        assert_eq!(s.corpus.doc_count, 2);
        assert_eq!(s.skipped_malformed, 1);
    }

    #[test]
    fn ingest_respects_shard_size() {
        let tmp = tempfile::tempdir().unwrap();
        let store = CorpusStore::open(tmp.path().join("root")).unwrap();
        let lines: Vec<String> = (0..50)
            .map(|i| format!(r#"{{"id":"d{i}","text":"document number {i} with some words"}}"#))
            .collect();
        let refs: Vec<&str> = lines.iter().map(|s| s.as_str()).collect();
        let p = write_jsonl(tmp.path(), "s.jsonl", &refs);
        let s = store.ingest(p.to_str().unwrap(), "sharded", 300).unwrap();
        assert!(s.corpus.shards.len() > 1);
        for rel in &s.corpus.shards {
            let len = fs::metadata(store.shard_path(rel)).unwrap().len();
            assert!(len <= 300, "shard {rel} has {len} bytes");
        }
        assert_eq!(s.corpus.doc_count, 50);
        let texts: Vec<String> = store.load_all(&s.corpus).unwrap().into_iter().map(|d| d.text).collect();
        let expected: Vec<String> = (0..50).map(|i| format!("document number {i} with some words")).collect();
        assert_eq!(texts, expected);
    }

    #[test]
    fn missing_file_is_an_error() {
        let tmp = tempfile::tempdir().unwrap();
        let store = CorpusStore::open(tmp.path().join("root")).unwrap();
        let err = store.ingest(tmp.path().join("nope*.jsonl").to_str().unwrap(), "x", 10).unwrap_err();
        assert!(matches!(err, Error::NotFound(_)));
    }

    #[test]
    fn derived_lineage_and_uniqueness() {
        let tmp = tempfile::tempdir().unwrap();
        let store = CorpusStore::open(tmp.path().join("root")).unwrap();
        let p = write_jsonl(tmp.path(), "a.jsonl", &[r#"{"text":"a b c"}"#]);
        store.ingest(p.to_str().unwrap(), "raw", 1000).unwrap();
        let docs = store.load_all(&store.get("raw").unwrap()).unwrap();

        let mut parent = "raw".to_string();
        for (i, op) in ["rule-filter", "quality-filter", "dedup"].iter().enumerate() {
            let name = format!("stage{i}");
            let st = store.staging(&name).unwrap();
            st.write_shard(0, &docs).unwrap();
            let h = store.register_derived(&parent, &name, op, "h", st).unwrap();
            assert_eq!(h.lineage.as_ref().unwrap().parent, parent);
            parent = name;
        }
        let chain = store.lineage_chain("stage2").unwrap();
        assert_eq!(chain.len(), 3);
        assert_eq!(chain[2].parent, "raw");

        assert!(matches!(store.staging("stage1"), Err(Error::NameTaken(_))));

        // registry survives reopen
        drop(store);
        let store = CorpusStore::open(tmp.path().join("root")).unwrap();
        assert_eq!(store.lineage_chain("stage2").unwrap().len(), 3);
    }

    #[test]
    fn two_handles_see_each_others_corpora() {
        let tmp = tempfile::tempdir().unwrap();
        let a = CorpusStore::open(tmp.path().join("root")).unwrap();
        let b = CorpusStore::open(tmp.path().join("root")).unwrap();
        let p = write_jsonl(tmp.path(), "a.jsonl", &[r#"{"text":"a b c"}"#]);
        a.ingest(p.to_str().unwrap(), "one", 1000).unwrap();
        assert_eq!(b.get("one").unwrap().doc_count, 1);
        // a commit through `b` keeps what `a` registered
        b.ingest(p.to_str().unwrap(), "two", 1000).unwrap();
        assert!(matches!(b.ensure_name_free("one"), Err(Error::NameTaken(_))));
        assert_eq!(a.list().len(), 2);
    }

    #[test]
    fn dropped_staging_leaves_nothing() {
        let tmp = tempfile::tempdir().unwrap();
        let store = CorpusStore::open(tmp.path().join("root")).unwrap();
        {
            let st = store.staging("partial").unwrap();
            st.write_shard(0, &[Document::new("a", "x")]).unwrap();
        }
        assert!(store.get("partial").is_err());
        let leftovers: Vec<_> = fs::read_dir(tmp.path().join("root/corpora")).unwrap().collect();
        assert!(leftovers.is_empty());
    }

    #[test]
    fn sample_edge_cases() {
        let docs: Vec<Document> = (0..5).map(|i| Document::new(format!("{i}"), "t")).collect();
        assert!(reservoir(docs.clone().into_iter().map(Ok), 0, 1).unwrap().is_empty());
        let all = reservoir(docs.clone().into_iter().map(Ok), 5, 99).unwrap();
        assert_eq!(all, docs);
        let more = reservoir(docs.clone().into_iter().map(Ok), 50, 3).unwrap();
        assert_eq!(more, docs);
    }
}
